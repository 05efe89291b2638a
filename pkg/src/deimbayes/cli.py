"""Command-line entry point: ``deimbayes {forward,build-rom,mcmc,diagnose,reproduce}``.

Settings come from built-in defaults, then an optional ``key=value`` file
(``--config``), then flags. The resolved settings are echoed to stdout and to
``<out>/config.txt``. Exit status: 0 success, 1 numerical failure, 2 usage or
input error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .bayes import RNG_NAME, STREAM_SAMPLING, DeimForward, ForwardFailure, FullForward, Posterior, make_rng, \
    run_chain, synthesize_data
from .diagnostics import diagnose, histogram
from .io import FormatError, load_bundle, read_chain_csv, read_matrix, save_bundle, write_chain_csv, \
    write_columns_csv, write_keyvalue, write_matrix
from .linsolve import ConvergenceError, SingularMatrixError, thin_svd
from .model import NonFiniteError, in_prior_box
from .newton import ForcingConfig, newton_solve
from .rom import DeimInterpolant, PodBasis, PodGalerkinSystem, ReducedModel, acquire_snapshots, error_indicator, \
    numerical_rank

log = logging.getLogger("deimbayes")

EXPERIMENTS = ("table1", "fig2", "fig3", "inverse")
MODELS = ("full", "deim", "pod-galerkin")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass
class RunConfig:
    n_g: int = 32
    k: int = 100
    n: int | None = None
    n_trial: int | None = None
    tau_d: float = 1e-4
    sigma: float = 1e-2
    xi_true: tuple = (1.0, 0.1)
    xi: tuple = (1.0, 0.1)
    M: int = 20000
    burn_in: int | None = None
    stride: int = 100
    epsilon: float = 1e-8
    seed: int = 1
    model: str = "deim"
    precond: str = "direct"
    sampling: str = "auto"
    out: str = "out"
    bundle: str = "bundle"
    y_obs: str | None = None
    bins: int = 30
    reps: int = 5

    def validate(self) -> None:
        if self.n_g < 3:
            raise UsageError("n-g must be >= 3")
        if self.k < 1 or (self.n is not None and self.n < 1):
            raise UsageError("k and n must be >= 1")
        if self.n_trial is not None and self.n_trial < 1:
            raise UsageError("n-trial must be >= 1")
        if self.tau_d < 0:
            raise UsageError("tau-d must be >= 0")
        if not self.sigma > 0:
            raise UsageError("sigma must be positive")
        for name in ("xi_true", "xi"):
            v = getattr(self, name)
            if len(v) != 2 or not in_prior_box(v):
                raise UsageError(f"{name.replace('_', '-')} must be two values in [0.01, 10]")
        if self.M < 1 or self.stride < 1:
            raise UsageError("M and stride must be >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.M:
            raise UsageError("burn-in must lie in [0, M)")
        if self.epsilon < 0:
            raise UsageError("epsilon must be >= 0")
        if self.model not in MODELS:
            raise UsageError(f"model must be one of {', '.join(MODELS)}")
        if self.precond not in ("direct", "multigrid"):
            raise UsageError("precond must be direct or multigrid")
        if self.sampling not in ("auto", "random", "grid"):
            raise UsageError("sampling must be auto, random or grid")
        if self.bins < 1 or self.reps < 1:
            raise UsageError("bins and reps must be >= 1")

    @property
    def n_deim(self) -> int:
        return self.k if self.n is None else self.n


def _pair(text) -> tuple:
    if isinstance(text, tuple):
        return text
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError(f"expected two comma-separated numbers, got {text!r}") from None


def _opt_int(text):
    return None if str(text).lower() in ("", "none") else int(text)


def _opt_str(text):
    return None if str(text).lower() in ("", "none") else str(text)


_CONVERT = {
    "n_g": int, "k": int, "n": _opt_int, "n_trial": _opt_int, "tau_d": float, "sigma": float,
    "xi_true": _pair, "xi": _pair, "M": int, "burn_in": _opt_int, "stride": int, "epsilon": float, "seed": int,
    "model": str, "precond": str, "sampling": str, "out": str, "bundle": str, "y_obs": _opt_str, "bins": int,
    "reps": int,
}


_ECHO_ONLY = ("command", "version", "rng")  # written by echo_config, ignored on read


def _parse_value(key: str, text):
    try:
        return _CONVERT[key](text)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {text!r}") from None


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        from .io import read_keyvalue
        for key, text in read_keyvalue(path).items():
            key = key.replace("-", "_")
            if key in _ECHO_ONLY:
                continue
            if key not in _CONVERT:
                raise UsageError(f"unknown config key {key!r} in {path}")
            values[key] = _parse_value(key, text)
    for key in _CONVERT:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = _parse_value(key, val)
    cfg = RunConfig(**values)
    cfg.validate()
    cfg.explicit = set(values)  # keys set by file or flag, not defaults
    return cfg


def echo_config(cfg: RunConfig, command: str, out: Path) -> None:
    items = {"command": command, "version": __version__, "rng": RNG_NAME}
    items.update({k: ("none" if v is None else v) for k, v in asdict(cfg).items()})
    out.mkdir(parents=True, exist_ok=True)
    write_keyvalue(out / "config.txt", items)
    print("# resolved config")
    for line in (out / "config.txt").read_text().splitlines():
        print(line)


def _setup(cfg: RunConfig) -> ex.Setup:
    return ex.make_setup(cfg.n_g, cfg.precond)


def load_reduced_model(cfg: RunConfig, setup: ex.Setup) -> ReducedModel:
    """Reduced model from the bundle, cut to the requested k and n (the DEIM greedy is nested)."""
    d = Path(cfg.bundle)
    if not d.is_dir():
        raise UsageError(f"basis bundle not found: {d}")
    try:
        b = load_bundle(d)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    Q, V, p = b["Q"], b["V"], b["p"]
    if Q.shape[0] != setup.N:
        raise UsageError(f"bundle {d} has N={Q.shape[0]} but --n-g {cfg.n_g} gives N={setup.N}")
    k, n = cfg.k, cfg.n_deim
    if k > Q.shape[1] or n > V.shape[1]:
        log.warning("bundle %s holds k=%d, n=%d; requested k=%d, n=%d; using the bundle sizes",
                    d, Q.shape[1], V.shape[1], k, n)
        k, n = min(k, Q.shape[1]), min(n, V.shape[1])
    interp = DeimInterpolant.from_basis(np.ascontiguousarray(V[:, :n]), p[:n])
    return ReducedModel(PodBasis(np.ascontiguousarray(Q[:, :k]), np.array([])), interp, setup.full, setup.M)


# ---------------------------------------------------------------- forward

def cmd_forward(cfg: RunConfig, out: Path) -> int:
    setup = _setup(cfg)
    xi = cfg.xi
    summary = {"N": setup.N, "xi": xi, "model": cfg.model}
    model = load_reduced_model(cfg, setup) if cfg.model == "deim" else None

    t0 = time.perf_counter()
    u, rep = ex.solve_full_reference(setup, xi)
    summary["full_seconds"] = time.perf_counter() - t0
    _, rep_fd = ex.solve_full_reference(setup, xi, jacobian="fd")
    write_matrix(out / "u_full.m64", u)
    rep_fd.write_history_csv(out / "history_full.csv", "plain")
    summary.update(full_converged=rep.converged, full_outer=rep.outer_iterations, full_fe=rep_fd.function_evals,
                   full_gmres=rep.inner_iterations, full_residual=rep.final_residual, full_tau=rep.tau)
    if not rep.converged:
        write_keyvalue(out / "forward.txt", summary)
        raise NumericalFailure(f"full solve did not converge: {rep.message}")

    if cfg.model == "deim":
        t0 = time.perf_counter()
        u_r, rrep = model.solve(xi)
        summary["deim_seconds"] = time.perf_counter() - t0
        _, rrep_fd = model.solve(xi, jacobian="fd", linear="gmres", preconditioned=True)
        rrep_fd.write_history_csv(out / "history_deim.csv", "plain")
        write_matrix(out / "u_deim.m64", model.Q @ u_r)
        summary.update(k=model.k, n=model.interp.n, deim_converged=rrep.converged,
                       deim_outer=rrep.outer_iterations, deim_fe=rrep_fd.function_evals)
        if not rrep.converged:
            write_keyvalue(out / "forward.txt", summary)
            raise NumericalFailure(f"DEIM solve did not converge: {rrep.message}")
    if cfg.model in ("deim", "pod-galerkin"):
        if model is None:
            model = load_reduced_model(cfg, setup)
        acc = ex.forward_accuracy(setup, model, xi)
        write_matrix(out / "u_redb.m64", acc["u_redb"])
        summary["rel_redb"] = acc["rel_redb"]
        if cfg.model == "deim":
            summary["rel_deim"] = acc["rel_deim"]
            summary["rel_dr"] = acc["rel_dr"]
    write_keyvalue(out / "forward.txt", summary)
    for key in ("full_outer", "full_fe", "deim_outer", "deim_fe", "rel_deim", "rel_redb", "rel_dr"):
        if key in summary:
            print(f"{key}={summary[key]}")
    return 0


# ---------------------------------------------------------------- build-rom

def _sampling(cfg: RunConfig, n_trial: int) -> str:
    if cfg.sampling != "auto":
        return cfg.sampling
    m = int(round(np.sqrt(n_trial)))
    return "grid" if n_trial >= 2500 and m * m == n_trial else "random"


def cmd_build_rom(cfg: RunConfig, out: Path) -> int:
    setup = _setup(cfg)
    n_trial = 10000 if cfg.n_trial is None else cfg.n_trial
    sampling = _sampling(cfg, n_trial)
    rng = make_rng(cfg.seed, STREAM_SAMPLING)
    lines = [f"N={setup.N} n_trial={n_trial} sampling={sampling} tau_d={cfg.tau_d} seed={cfg.seed} rng={RNG_NAME}"]
    try:
        acq = acquire_snapshots(setup.full, setup.M, n_trial, cfg.tau_d, rng=rng, sampling=sampling)
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        (out / "build.log").write_text("\n".join(lines + [f"acquisition failed: {exc}"]) + "\n")
        raise NumericalFailure(f"snapshot acquisition failed: {exc}") from exc
    snaps = acq.snapshots
    lines.append(f"snapshots={snaps.count} accepted={int(acq.accepted.sum())} skipped={acq.skipped} "
                 f"acquisition_seconds={acq.seconds:.6g}")

    t0 = time.perf_counter()
    U, su, _ = thin_svd(snaps.S_U)
    Vf, sf, _ = thin_svd(snaps.S_F)
    avail_k = numerical_rank(su, snaps.S_U.shape, rtol=0.0)
    avail_n = numerical_rank(sf, snaps.S_F.shape, rtol=0.0)
    k = max(min(cfg.k, avail_k), 1)
    n = max(min(cfg.n_deim, avail_n), 1)
    if k < cfg.k or n < cfg.n_deim:
        msg = (f"requested k={cfg.k}, n={cfg.n_deim} but only {snaps.count} snapshots "
               f"(ranks {avail_k}, {avail_n}) were acquired; using k={k}, n={n}")
        log.warning(msg)
        lines.append("warning: " + msg)
    Q = np.ascontiguousarray(U[:, :k])
    interp = DeimInterpolant.from_basis(np.ascontiguousarray(Vf[:, :n]))
    model = ReducedModel(PodBasis(Q, su), interp, setup.full, setup.M)
    lines.append(f"k={k} n={n} truncation_seconds={time.perf_counter() - t0:.6g}")

    # verification sweep over the trial parameters with the final model
    t0 = time.perf_counter()
    worst = 0.0
    for xi in acq.trial_params:
        u_r, rep = model.solve(xi)
        worst = max(worst, error_indicator(Q, u_r, xi, setup.full) if rep.converged else np.inf)
    lines.append(f"final_max_indicator={worst:.17g} sweep_seconds={time.perf_counter() - t0:.6g}")

    meta = {"N": setup.N, "k": k, "n": n, "tau_d": cfg.tau_d, "seed": cfg.seed, "snapshot_count": snaps.count,
            "n_g": cfg.n_g, "n_trial": n_trial, "sampling": sampling, "precond": cfg.precond, "rng": RNG_NAME,
            "final_max_indicator": worst}
    save_bundle(cfg.bundle, Q, Vf[:, :n], interp.p, meta)
    lines.append(f"bundle={Path(cfg.bundle).resolve()}")
    (out / "build.log").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


# ---------------------------------------------------------------- mcmc

class PodGalerkinForward:
    name = "pod-galerkin"

    def __init__(self, Q, full, cfg: ForcingConfig | None = None):
        self.system = PodGalerkinSystem(Q, full.A, full.B)
        self.Q = Q
        self.cfg = (cfg or ForcingConfig()).scaled(1e-2)

    def __call__(self, xi):
        u_r, rep = newton_solve(self.system, np.zeros(self.Q.shape[1]), xi, self.cfg, linear="direct")
        if not rep.converged:
            raise ForwardFailure(f"POD-Galerkin solve failed at xi={tuple(xi)}: {rep.message}")
        return self.Q @ u_r


def make_forward(cfg: RunConfig, setup: ex.Setup):
    if cfg.model == "full":
        return FullForward(setup.full, setup.M)
    model = load_reduced_model(cfg, setup)
    if cfg.model == "deim":
        return DeimForward(model)
    return PodGalerkinForward(model.Q, setup.full)


def cmd_mcmc(cfg: RunConfig, out: Path) -> int:
    setup = _setup(cfg)
    forward = make_forward(cfg, setup)
    t0 = time.perf_counter()
    if cfg.y_obs:
        path = Path(cfg.y_obs)
        if not path.exists():
            raise UsageError(f"observation file not found: {path}")
        y = read_matrix(path).ravel()
        if y.shape[0] != setup.N:
            raise UsageError(f"{path} has {y.shape[0]} entries, expected N={setup.N}")
        source = str(path)
    else:
        y = synthesize_data(FullForward(setup.full, setup.M), cfg.xi_true, cfg.sigma, cfg.seed)
        write_matrix(out / "y_obs.m64", y)
        source = "synthesized with the full model"
    data_seconds = time.perf_counter() - t0

    post = Posterior(y, cfg.sigma, forward)
    chain = run_chain(post, cfg.M, stride=cfg.stride, seed=cfg.seed, epsilon=cfg.epsilon,
                      progress=lambda i: log.info("iteration %d / %d", i, cfg.M))
    write_chain_csv(out / "chain.csv", chain)
    summary = {
        "rng": RNG_NAME, "seed": cfg.seed, "model": cfg.model, "N": setup.N, "M": cfg.M, "data": source,
        "acceptance_rate": chain.acceptance_rate, "forward_solves": post.forward_solves,
        "forward_failures": post.forward_failures, "wall_time": chain.config["wall_time"],
        "data_seconds": data_seconds,
    }
    write_keyvalue(out / "summary.txt", summary)
    for key in ("acceptance_rate", "forward_solves", "wall_time"):
        print(f"{key}={summary[key]}")
    return 0


# ---------------------------------------------------------------- diagnose

def write_diagnostics(chain, report, out: Path, bins: int = 30) -> None:
    write_keyvalue(out / "report.txt", report.as_dict())
    comps = report.components
    write_columns_csv(out / "acf.csv", ["lag", "xi1", "xi2"],
                      [list(range(report.J + 1)), list(comps[0].acf), list(comps[1].acf)])
    kept = chain.samples[report.burn_in:]
    for c in range(2):
        edges, counts = histogram(kept[:, c], bins)
        write_columns_csv(out / f"hist_xi{c + 1}.csv", ["bin_left", "bin_right", "count"],
                          [list(edges[:-1]), list(edges[1:]), [int(v) for v in counts]])
    first = chain.first_iter + report.burn_in
    write_columns_csv(out / "scatter.csv", ["iter", "xi1", "xi2"],
                      [list(range(first, first + len(kept))), list(kept[:, 0]), list(kept[:, 1])])


def cmd_diagnose(cfg: RunConfig, out: Path, chain_path: str) -> int:
    path = Path(chain_path)
    if not path.exists():
        raise UsageError(f"chain file not found: {path}")
    try:
        chain = read_chain_csv(path)
    except FormatError as exc:
        raise UsageError(f"{path}: {exc}") from None
    try:
        report = diagnose(chain, cfg.burn_in)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_diagnostics(chain, report, out, cfg.bins)
    for c, s in enumerate(report.components, start=1):
        flag = " zero_variance" if s.zero_variance else ""
        print(f"xi{c}: mean={s.mean:.6g} ci=({s.ci_lower:.6g}, {s.ci_upper:.6g}) iact={s.iact:.4g} "
              f"geweke_p={s.geweke_p:.4g}{flag}")
    return 0


# ---------------------------------------------------------------- reproduce

class Comparison:
    """Rows of measured-versus-reference values with a pass/fail verdict."""

    def __init__(self):
        self.rows = []

    def add(self, quantity: str, measured, reference, criterion: str, ok: bool | None = None) -> None:
        status = "" if ok is None else ("PASS" if ok else "FAIL")
        self.rows.append((quantity, measured, reference, criterion, status))

    def write(self, path: Path) -> None:
        cols = list(zip(*self.rows)) if self.rows else [[]] * 5
        write_columns_csv(path, ["quantity", "measured", "reference", "criterion", "status"],
                          [[_text(v) for v in col] for col in cols])
        for row in self.rows:
            if row[4]:
                print(f"{row[4]}  {row[0]}: {_text(row[1])} ({row[3]})")


def _text(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.6g" % v
    if isinstance(v, (list, tuple)):
        return " ".join(_text(x) for x in v)
    return "" if v is None else str(v)


def _grids(cfg: RunConfig, explicit: set) -> tuple:
    return (cfg.n_g,) if "n_g" in explicit else ex.GRIDS


def reproduce_table1(cfg: RunConfig, out: Path, explicit: set) -> Comparison:
    cmp = Comparison()
    n_trial = 625 if cfg.n_trial is None else cfg.n_trial
    ks = (5, 20, 50, 100)
    rows = {c: [] for c in ("N", "k", "seconds", "fe", "outer", "ref_seconds", "ref_fe")}
    deim_time, full_time, gmres = {}, {}, {}
    for n_g in _grids(cfg, explicit):
        setup = ex.make_setup(n_g, cfg.precond)
        bases = ex.grid_snapshot_bases(setup, n_trial)
        table = ex.REFERENCE["table1"].get(setup.N, {})
        for k in list(ks) + ["full"]:
            model = None if k == "full" else bases.reduced_model(setup, min(k, bases.count))
            eff = ex.newton_efficiency(setup, model)
            key = "full" if k == "full" else "deim"
            if k == "full":
                secs = ex.median_time(lambda: ex.solve_full_reference(setup), cfg.reps)
                full_time[setup.N] = secs
                gmres[setup.N] = eff["full"]["inner"]
            else:
                secs = ex.median_time(lambda: model.solve(ex.XI_REF), cfg.reps)
                if k == 100:
                    deim_time[setup.N] = secs
            ref = table.get(k, (None, None))
            for col, v in zip(rows, (setup.N, k, secs, eff[key]["fe"], eff[key]["outer"], ref[0], ref[1])):
                rows[col].append("" if v is None else v)
            if k in (100, "full"):
                outer, fe = eff[key]["outer"], eff[key]["fe"]
                cmp.add(f"outer N={setup.N} {key}", outer, "3-4", "3 <= outer <= 5", 3 <= outer <= 5)
                cmp.add(f"fe N={setup.N} {key}", fe, ref[1], "6 <= fe <= 10", 6 <= fe <= 10)
    write_columns_csv(out / "table1.csv", list(rows), list(rows.values()))
    per_step = {N: max(v) for N, v in gmres.items()}
    if len(per_step) > 1:
        ratio = max(per_step.values()) / min(per_step.values())
        cmp.add("gmres per-step max ratio across N", ratio, "mesh independent", "<= 2", ratio <= 2)
    for N, t in deim_time.items():
        r = t / full_time[N]
        cmp.add(f"deim/full time N={N}", r, 0.142 / 10.45 if N == 16384 else None,
                "<= 0.1" if N == 16384 else "", (r <= 0.1) if N == 16384 else None)
    if len(deim_time) > 1:
        spread = (max(deim_time.values()) - min(deim_time.values())) / min(deim_time.values())
        cmp.add("deim k=100 time spread across N", spread, 0.154 / 0.140 - 1, "< 0.25", spread < 0.25)
    return cmp


def reproduce_fig2(cfg: RunConfig, out: Path, explicit: set) -> Comparison:
    cmp = Comparison()
    n_trial = 625 if cfg.n_trial is None else cfg.n_trial
    for n_g in _grids(cfg, explicit):
        setup = ex.make_setup(n_g, cfg.precond)
        bases = ex.grid_snapshot_bases(setup, n_trial)
        model = bases.reduced_model(setup, min(cfg.k, bases.count), min(cfg.n_deim, bases.count))
        eff = ex.newton_efficiency(setup, model, cfg.xi)
        for key in ("full", "deim"):
            hist = eff[key]["history"]
            r0 = hist[0][3]
            write_columns_csv(out / f"fig2_{key}_N{setup.N}.csv", ["outer_iter", "fe", "relative_residual"],
                              [[h[0] for h in hist], [h[1] for h in hist], [h[3] / r0 for h in hist]])
            cmp.add(f"outer N={setup.N} {key}", eff[key]["outer"], "3-4", "3 <= outer <= 5",
                    3 <= eff[key]["outer"] <= 5)
            cmp.add(f"fe N={setup.N} {key}", eff[key]["fe"], "6-8", "6 <= fe <= 10", 6 <= eff[key]["fe"] <= 10)
    return cmp


def reproduce_fig3(cfg: RunConfig, out: Path, explicit: set) -> Comparison:
    cmp = Comparison()
    n_trial = 625 if cfg.n_trial is None else cfg.n_trial
    setup = ex.make_setup(cfg.n_g, cfg.precond)
    bases = ex.grid_snapshot_bases(setup, n_trial)
    ks = [k for k in (5, 20, 50, 100, 120, 150, 200) if k <= bases.count]
    curve = ex.rels_curve(setup, bases, ks, n_trial)
    write_columns_csv(out / "fig3.csv", ["k", "rels", "failures"],
                      [ks, [curve[k]["rels"] for k in ks], [curve[k]["failures"] for k in ks]])
    if 5 in curve and 100 in curve:
        r = curve[100]["rels"] / curve[5]["rels"]
        cmp.add("rels(100)/rels(5)", r, "decreasing", "<= 1e-2", r <= 1e-2)
    if 150 in curve and 200 in curve:
        a, b = curve[150]["rels"], curve[200]["rels"]
        r = max(a, b) / min(a, b)
        cmp.add("rels(200) vs rels(150)", r, "flat", "within 2x", r <= 2)
    return cmp


def reproduce_inverse(cfg: RunConfig, out: Path, explicit: set) -> Comparison:
    cmp = Comparison()
    n_g = cfg.n_g if "n_g" in explicit else 128
    n_trial = 625 if cfg.n_trial is None else cfg.n_trial
    M = cfg.M
    burn = M // 2 if cfg.burn_in is None else cfg.burn_in
    setup = ex.make_setup(n_g, cfg.precond)
    t0 = time.perf_counter()
    bases = ex.grid_snapshot_bases(setup, n_trial)
    model = bases.reduced_model(setup, min(cfg.k, bases.count), min(cfg.n_deim, bases.count))
    offline = time.perf_counter() - t0
    res = ex.run_inverse(setup, ex.deim_forward(model), M, burn, cfg.sigma, cfg.xi_true, cfg.seed, cfg.stride,
                         cfg.epsilon)
    write_chain_csv(out / "chain_deim.csv", res.chain)
    write_diagnostics(res.chain, res.report, out, cfg.bins)
    ref = ex.REFERENCE["inverse_deim"]
    truth = cfg.xi_true
    for c, s in enumerate(res.report.components):
        name = f"xi{c + 1}"
        tol = (0.2, 0.03)[c]
        cmp.add(f"{name} mean", s.mean, (0.973, 0.106)[c], f"|mean - {truth[c]}| <= {tol}",
                abs(s.mean - truth[c]) <= tol)
        cmp.add(f"{name} 95% CI", (s.ci_lower, s.ci_upper), ref[f"ci_{name}"], "contains truth",
                s.ci_lower <= truth[c] <= s.ci_upper)
        cmp.add(f"{name} IACT", s.iact, ref["iact"][c], "3 <= IACT <= 50", 3 <= s.iact <= 50)
        cmp.add(f"{name} Geweke p", s.geweke_p, ref["geweke_p"][c], ">= 0.5", s.geweke_p >= 0.5)
    cmp.add("acceptance rate", res.chain.acceptance_rate, None, "")
    cmp.add("offline seconds", offline, None, "")
    cmp.add("chain seconds", res.chain_seconds, ex.REFERENCE["chain_seconds"]["deim"], "")

    # scaled cost comparison: both samplers on a smaller grid and a shorter chain
    cost_n_g, cost_M = 64, 2000
    cs = ex.make_setup(cost_n_g, cfg.precond)
    cb = ex.grid_snapshot_bases(cs, 625)
    cmodel = cb.reduced_model(cs, min(cfg.k, cb.count), min(cfg.n_deim, cb.count))
    r_deim = ex.run_inverse(cs, ex.deim_forward(cmodel), cost_M, cost_M // 2, cfg.sigma, cfg.xi_true, cfg.seed,
                            cfg.stride, cfg.epsilon)
    r_full = ex.run_inverse(cs, ex.full_forward(cs), cost_M, cost_M // 2, cfg.sigma, cfg.xi_true, cfg.seed,
                            cfg.stride, cfg.epsilon)
    ratio = r_deim.chain_seconds / r_full.chain_seconds
    ref_ratio = ex.REFERENCE["chain_seconds"]["deim"] / ex.REFERENCE["chain_seconds"]["full"]
    cmp.add(f"deim/full chain time N={cs.N} M={cost_M}", ratio, ref_ratio, "<= 0.5", ratio <= 0.5)
    return cmp


REPRODUCERS = {"table1": reproduce_table1, "fig2": reproduce_fig2, "fig3": reproduce_fig3,
               "inverse": reproduce_inverse}


def cmd_reproduce(cfg: RunConfig, out: Path, experiment: str, explicit: set) -> int:
    if experiment not in REPRODUCERS:
        raise UsageError(f"unknown experiment {experiment!r}; valid ids: {', '.join(EXPERIMENTS)}")
    cmp = REPRODUCERS[experiment](cfg, out, explicit)
    cmp.write(out / f"comparison_{experiment}.csv")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--config", help="key=value settings file; flags override it")
    g.add_argument("--n-g", dest="n_g", help="interior grid points per direction (N = n_g^2)")
    g.add_argument("--k", help="POD basis size")
    g.add_argument("--n", help="DEIM basis size (default: k)")
    g.add_argument("--n-trial", dest="n_trial", help="trial parameters for snapshot acquisition")
    g.add_argument("--tau-d", dest="tau_d", help="error-indicator threshold for taking a snapshot")
    g.add_argument("--sigma", help="observation noise standard deviation")
    g.add_argument("--xi-true", dest="xi_true", help="parameter used to synthesize data, e.g. 1,0.1")
    g.add_argument("--xi", help="parameter for forward solves, e.g. 1,0.1")
    g.add_argument("--M", dest="M", help="chain length")
    g.add_argument("--burn-in", dest="burn_in", help="samples discarded before diagnostics (default M/2)")
    g.add_argument("--stride", help="proposal covariance refresh interval")
    g.add_argument("--epsilon", help="covariance regularization")
    g.add_argument("--seed", help="64-bit seed for all random streams")
    g.add_argument("--model", help="forward model: full, deim or pod-galerkin")
    g.add_argument("--precond", help="Poisson preconditioner: direct or multigrid")
    g.add_argument("--sampling", help="trial sampling: auto, random or grid")
    g.add_argument("--out", help="output directory")
    g.add_argument("--bundle", help="basis bundle directory")
    g.add_argument("--y-obs", dest="y_obs", help="observation vector (matrix file) instead of synthetic data")
    g.add_argument("--bins", help="histogram bins")
    g.add_argument("--reps", help="timing repetitions")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="deimbayes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("forward", parents=[common], help="solve the forward problem at one parameter")
    sub.add_parser("build-rom", parents=[common], help="acquire snapshots and write a basis bundle")
    sub.add_parser("mcmc", parents=[common], help="run the adaptive Metropolis-Hastings sampler")
    d = sub.add_parser("diagnose", parents=[common], help="diagnostics for a chain CSV")
    d.add_argument("chain", help="chain CSV file")
    r = sub.add_parser("reproduce", parents=[common], help="run a scaled experiment and compare")
    r.add_argument("experiment", help=f"one of {', '.join(EXPERIMENTS)}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "reproduce" and args.experiment not in REPRODUCERS:
            raise UsageError(f"unknown experiment {args.experiment!r}; valid ids: {', '.join(EXPERIMENTS)}")
        cfg = resolve_config(args)
        out = Path(cfg.out)
        echo_config(cfg, args.command, out)
        if args.command == "forward":
            return cmd_forward(cfg, out)
        if args.command == "build-rom":
            return cmd_build_rom(cfg, out)
        if args.command == "mcmc":
            return cmd_mcmc(cfg, out)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, out, args.chain)
        return cmd_reproduce(cfg, out, args.experiment, cfg.explicit)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, ForwardFailure, NonFiniteError, ConvergenceError, SingularMatrixError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
