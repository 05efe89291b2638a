"""Post-processing of MCMC chains: burn-in, ACF, IACT, Geweke, intervals, histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .bayes import Chain


class ZeroVarianceError(ValueError):
    pass


def default_max_lag(M: int) -> int:
    """floor(10 log10 M), the usual truncation lag for IACT."""
    return int(math.floor(10.0 * math.log10(M)))


def acf(series, J: int) -> np.ndarray:
    """Autocorrelation at lags 0..J from the divide-by-n autocovariance."""
    x = np.asarray(series, dtype=float)
    if J < 1 or x.shape[0] <= J:
        raise ValueError(f"need 1 <= J < len(series), got J={J}, len={x.shape[0]}")
    c = _kernels.autocovariance(x - x.mean(), J)
    if c[0] <= 0.0:
        raise ZeroVarianceError("series has zero variance")
    return c / c[0]


def iact(series, J: int | None = None) -> float:
    """Integrated autocorrelation time 1 + 2 sum_{j=1}^{J-1} (1 - j/J) rho_j."""
    x = np.asarray(series, dtype=float)
    J = default_max_lag(x.shape[0]) if J is None else J
    rho = acf(x, J)
    j = np.arange(1, J)
    return float(1.0 + 2.0 * np.sum((1.0 - j / J) * rho[1:J]))


def _batch_mean_variance(seg: np.ndarray, batches: int) -> float:
    """Variance of the segment mean estimated from non-overlapping batch means."""
    b = seg.shape[0] // batches
    means = seg[: b * batches].reshape(batches, b).mean(axis=1)
    return float(np.var(means, ddof=1) / batches)


def geweke(series, frac_a: float = 0.1, frac_b: float = 0.5, batches: int = 16):
    """Geweke z-score comparing the first ``frac_a`` and last ``frac_b`` of the chain.

    Returns ``(z, p)`` with ``p`` the two-sided normal tail probability.
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    na = int(math.floor(frac_a * n))
    nb = int(math.floor(frac_b * n))
    if min(na, nb) < 2 * batches:
        raise ValueError(f"Geweke segments too short ({na}, {nb}); need at least {2 * batches}")
    a = x[:na]
    b = x[n - nb:]
    va = _batch_mean_variance(a, batches)
    vb = _batch_mean_variance(b, batches)
    diff = a.mean() - b.mean()
    denom = math.sqrt(va + vb)
    if denom == 0.0:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        z = diff / denom
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return float(z), float(p)


def confidence_interval(series, level: float = 0.95):
    """Equal-tailed empirical interval (linear interpolation) and its midpoint."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    lo, hi = np.quantile(x, [(1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0])
    return float(lo), float(hi), float(0.5 * (lo + hi))


def histogram(series, bins: int = 30):
    x = np.asarray(series, dtype=float)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(x, bins=bins, range=(x.min(), x.max()))
    return edges, counts


def burn_in(chain: Chain, count: int | None = None) -> Chain:
    """Drop the first ``count`` states (default: half the chain)."""
    n = len(chain)
    count = n // 2 if count is None else int(count)
    if count < 0 or count >= n:
        raise ValueError(f"burn-in count {count} must lie in [0, {n})")
    config = dict(chain.config)
    config["first_iter"] = chain.first_iter + count
    return replace(chain, samples=chain.samples[count:].copy(), log_post=chain.log_post[count:].copy(),
                   accepted=chain.accepted[count:].copy(), config=config)


@dataclass
class ComponentStats:
    mean: float
    variance: float
    iact: float
    geweke_z: float
    geweke_p: float
    ci_lower: float
    ci_upper: float
    ci_mid: float
    acf: np.ndarray = field(repr=False)
    zero_variance: bool = False


@dataclass
class DiagnosticsReport:
    burn_in: int
    length: int
    J: int
    level: float
    components: list

    def as_dict(self) -> dict:
        out = {"burn_in": self.burn_in, "length": self.length, "J": self.J, "ci_level": self.level}
        for c, s in enumerate(self.components, start=1):
            for key in ("mean", "variance", "iact", "geweke_z", "geweke_p", "ci_lower", "ci_upper", "ci_mid"):
                out[f"xi{c}_{key}"] = getattr(s, key)
            out[f"xi{c}_zero_variance"] = int(s.zero_variance)
        return out


def diagnose(chain: Chain, burn: int | None = None, level: float = 0.95, J: int | None = None) -> DiagnosticsReport:
    """Burn-in removal followed by per-component statistics."""
    kept = burn_in(chain, burn)
    n = len(kept)
    if n < 3:
        raise ValueError(f"only {n} samples remain after burn-in; need at least 3")
    J = min(default_max_lag(n), n - 1) if J is None else J
    comps = []
    for c in range(kept.samples.shape[1]):
        x = kept.samples[:, c]
        lo, hi, mid = confidence_interval(x, level)
        var = float(np.var(x))
        if np.ptp(x) == 0.0:
            var = 0.0
            comps.append(ComponentStats(float(x.mean()), 0.0, float("nan"), 0.0, 1.0, lo, hi, mid,
                                        np.r_[1.0, np.zeros(J)], zero_variance=True))
            continue
        try:
            z, p = geweke(x)
        except ValueError:
            z, p = float("nan"), float("nan")  # too short for batch means
        comps.append(ComponentStats(float(x.mean()), var, iact(x, J), z, p, lo, hi, mid, acf(x, J)))
    return DiagnosticsReport(len(chain) - n, n, J, level, comps)
