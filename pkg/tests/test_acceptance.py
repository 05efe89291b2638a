"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Criterion 8 (property suites) runs first; the numeric criteria refuse to run
if it failed. Bases are built from all 625 points of a 25 x 25 parameter grid.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from deimbayes import experiments as ex
from deimbayes.bayes import ProposalState, make_rng, propose, run_chain, Posterior, STREAM_PROPOSAL
from deimbayes.diagnostics import geweke, iact
from deimbayes.io import load_bundle, save_bundle
from deimbayes.linsolve import PoissonSolver, thin_svd
from deimbayes.model import FullSystem, PreconditionedFullSystem, build_grid
from deimbayes.rom import (DeimInterpolant, PodBasis, ReducedModel, build_reduced_system, deim_apply, deim_points,
                           reduced_jacobian, reduced_residual)

XI = ex.XI_REF
_state = {"properties_ok": None}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def require_properties():
    if _state["properties_ok"] is False:
        pytest.fail("property suites (criterion 8) failed; numeric criteria not attempted")


@pytest.fixture(scope="module")
def setups():
    return {n_g: ex.make_setup(n_g) for n_g in ex.GRIDS}


@pytest.fixture(scope="module")
def bases(setups):
    return {n_g: ex.grid_snapshot_bases(setups[n_g], 625) for n_g in ex.GRIDS}


# ---------------------------------------------------------------- criterion 8

def _brute_deim(V):
    p = [int(np.argmax(np.abs(V[:, 0])))]
    for i in range(1, V.shape[1]):
        c = np.linalg.lstsq(V[p][:, :i], V[p, i], rcond=None)[0]
        r = np.abs(V[:, i] - V[:, :i] @ c)
        p.append(int(np.flatnonzero(r == r.max())[0]))
    return p


def _property_checks():
    r = np.random.default_rng(2024)
    out = {}
    V = np.linalg.qr(r.standard_normal((200, 12)))[0]
    interp = DeimInterpolant.from_basis(V)
    f = V @ r.standard_normal(12)
    out["DEIM exact on span(V)"] = np.linalg.norm(deim_apply(interp, f[interp.p]) - f) <= 1e-10 * np.linalg.norm(f)
    g = r.standard_normal(200)
    gbar = deim_apply(interp, g[interp.p])
    out["P^T Fbar = P^T F"] = np.abs(gbar[interp.p] - g[interp.p]).max() <= 1e-10 * np.abs(g).max()
    out["DEIM selection, second implementation"] = all(
        list(deim_points(W)) == _brute_deim(W)
        for W in (np.linalg.qr(r.standard_normal((60, 8)))[0] for _ in range(20)))
    S = r.standard_normal((80, 15)) @ np.diag(0.5 ** np.arange(15))
    U, s, W = thin_svd(S)
    out["SVD Eckart-Young"] = all(
        abs(np.linalg.norm(S - U[:, :k] * s[:k] @ W[:, :k].T, 2) - s[k]) <= 1e-10 * s[0] for k in range(1, 15))

    full = FullSystem(build_grid(10))
    u, v = r.uniform(-1, 1, full.dim), r.standard_normal(full.dim)
    h = 1e-6
    fd = (full.residual(u + h * v, XI) - full.residual(u - h * v, XI)) / (2 * h)
    Jv = full.jacobian(u, XI) @ v
    psys = PreconditionedFullSystem(full, PoissonSolver(full.A))
    fdp = (psys.residual(u + h * v, XI) - psys.residual(u - h * v, XI)) / (2 * h)
    Q = np.linalg.qr(r.standard_normal((full.dim, 8)))[0]
    rs = build_reduced_system(Q, DeimInterpolant.from_basis(np.linalg.qr(r.standard_normal((full.dim, 8)))[0]),
                              full.A, full.B, psys.M)
    ur, vr = r.standard_normal(8), r.standard_normal(8)
    red_ok = True
    for pre in (False, True):
        fdr = (reduced_residual(rs, ur + h * vr, XI, pre) - reduced_residual(rs, ur - h * vr, XI, pre)) / (2 * h)
        Jr = reduced_jacobian(rs, ur, XI, pre) @ vr
        red_ok &= np.linalg.norm(fdr - Jr) <= 1e-6 * np.linalg.norm(Jr)
    out["Jacobian FD (full, preconditioned, reduced)"] = bool(
        np.linalg.norm(fd - Jv) <= 1e-6 * np.linalg.norm(Jv)
        and np.linalg.norm(fdp - psys.jacobian(u, XI) @ v) <= 1e-6 * np.linalg.norm(fdp) and red_ok)

    x = np.empty(100_000)
    e = r.standard_normal(x.size)
    x[0] = e[0] / 0.6
    for t in range(1, x.size):
        x[t] = 0.8 * x[t - 1] + e[t]
    out["AR(1) IACT oracle"] = abs(iact(x) - 9.0) <= 1.8

    class Identity:
        def __call__(self, xi):
            return np.asarray(xi, dtype=float).copy()

    ch = run_chain(Posterior(np.array([2.0, 3.0]), 0.2, Identity()), 40000, x0=(2, 3), seed=5,
                   jacobian_correction=True)
    kept = ch.samples[5000:]
    out["Gaussian target moments"] = bool(np.allclose(kept.mean(0), [2, 3], atol=0.02)
                                          and np.allclose(kept.var(0), 0.04, rtol=0.15))
    ps = np.array([geweke(r.standard_normal(5000))[1] for _ in range(200)])
    out["Geweke null calibration"] = 0.01 <= np.mean(ps < 0.05) <= 0.10
    return out


def test_criterion_8_property_suites():
    checks = _property_checks()
    ok = all(checks.values())
    _state["properties_ok"] = ok
    failed = [k for k, v in checks.items() if not v]
    record(8, "property suites", ok, f"{len(checks) - len(failed)}/{len(checks)} passed"
           + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok, failed


# ---------------------------------------------------------------- criterion 1

def test_criterion_1_forward_fidelity(setups, bases, tmp_path):
    require_properties()
    setup, b = setups[64], bases[64]
    model = b.reduced_model(setup, 100)
    save_bundle(tmp_path / "bundle", model.Q, model.interp.V, model.interp.p, {"N": setup.N, "k": 100, "n": 100})
    t0 = time.perf_counter()
    data = load_bundle(tmp_path / "bundle")
    loaded = ReducedModel(PodBasis(data["Q"], np.array([])), DeimInterpolant.from_basis(data["V"], data["p"]),
                          setup.full, setup.M)
    acc = ex.forward_accuracy(setup, loaded, XI)
    seconds = time.perf_counter() - t0
    ok = acc["converged"] and acc["rel_deim"] <= 1e-5 and acc["rel_dr"] <= 1e-5 and seconds < 60
    record(1, "forward fidelity N=4096 k=n=100", ok,
           f"rel_deim={acc['rel_deim']:.3e} rel_dr={acc['rel_dr']:.3e} rel_redb={acc['rel_redb']:.3e} "
           f"(reference 3.2603e-06, 3.2543e-06) time={seconds:.2f}s")
    assert ok


# ---------------------------------------------------------------- criterion 2

def test_criterion_2_newton_efficiency(setups, bases):
    require_properties()
    parts, ok = [], True
    for n_g in ex.GRIDS:
        eff = ex.newton_efficiency(setups[n_g], bases[n_g].reduced_model(setups[n_g], 100))
        for key in ("full", "deim"):
            e = eff[key]
            good = e["converged"] and 3 <= e["outer"] <= 5 and 6 <= e["fe"] <= 10
            ok &= good
            parts.append(f"N={setups[n_g].N} {key}: outer={e['outer']} fe={e['fe']}")
    record(2, "Newton efficiency", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- criterion 3

def test_criterion_3_mesh_independence(setups):
    require_properties()
    ok, parts = True, []
    for variant in ("direct", "multigrid"):
        counts = {}
        for n_g in ex.GRIDS:
            s = setups[n_g] if variant == "direct" else ex.make_setup(n_g, "multigrid")
            counts[s.N] = ex.gmres_counts(s)
        steps = min(len(c) for c in counts.values())
        ratio = max(max(c[i] for c in counts.values()) / min(c[i] for c in counts.values()) for i in range(steps))
        ok &= ratio <= 2 and len({len(c) for c in counts.values()}) == 1
        parts.append(f"{variant}: {counts} max ratio {ratio:.2f}")
    record(3, "mesh independence of GMRES counts", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- criterion 4

def test_criterion_4_deim_accuracy_curve(setups, bases):
    require_properties()
    t0 = time.perf_counter()
    curve = ex.rels_curve(setups[32], bases[32], (5, 100, 150, 200), 625)
    seconds = time.perf_counter() - t0
    r = {k: v["rels"] for k, v in curve.items()}
    flat = max(r[150], r[200]) / min(r[150], r[200])
    ok = r[100] <= 1e-2 * r[5] and flat <= 2 and seconds <= 1800
    record(4, "DEIM accuracy curve N=1024", ok,
           f"rels(5)={r[5]:.3e} rels(100)={r[100]:.3e} rels(150)={r[150]:.3e} rels(200)={r[200]:.3e} "
           f"ratio100/5={r[100] / r[5]:.2e} flat150-200={flat:.3f} time={seconds:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 5

def test_criterion_5_online_speedup(setups, bases):
    require_properties()
    deim, full = {}, {}
    for n_g in ex.GRIDS:
        t = ex.online_times(setups[n_g], bases[n_g].reduced_model(setups[n_g], 100))
        deim[setups[n_g].N], full[setups[n_g].N] = t["deim"], t["full"]
    ratio = deim[16384] / full[16384]
    spread = (max(deim.values()) - min(deim.values())) / min(deim.values())
    ok = ratio <= 0.1 and spread < 0.25
    record(5, "online speedup", ok,
           f"deim/full at N=16384 = {ratio:.3f} ({full[16384] / deim[16384]:.0f}x), deim times "
           + ", ".join(f"{N}:{t * 1e3:.2f}ms" for N, t in deim.items()) + f", spread {spread:.1%}")
    assert ok


# ---------------------------------------------------------------- criterion 6

def test_criterion_6_inverse_problem(setups, bases):
    """Reference configuration: N=16384 data and DEIM model, k = n = 100."""
    require_properties()
    t0 = time.perf_counter()
    setup = setups[128]
    model = bases[128].reduced_model(setup, 100)
    res = ex.run_inverse(setup, ex.deim_forward(model), M=20000, burn=10000, sigma=1e-2, xi_true=XI, seed=1)
    seconds = time.perf_counter() - t0 + bases[128].seconds
    s1, s2 = res.report.components
    checks = {
        "mean1": abs(s1.mean - 1) <= 0.2, "mean2": abs(s2.mean - 0.1) <= 0.03,
        "ci1": s1.ci_lower <= 1 <= s1.ci_upper, "ci2": s2.ci_lower <= 0.1 <= s2.ci_upper,
        "iact": all(3 <= s.iact <= 50 for s in (s1, s2)), "geweke": all(s.geweke_p >= 0.5 for s in (s1, s2)),
        "runtime": seconds <= 1800,
    }
    ok = all(checks.values())
    record(6, "inverse problem AMH-DEIM", ok,
           f"mean=({s1.mean:.4f}, {s2.mean:.4f}) CI1=({s1.ci_lower:.4f}, {s1.ci_upper:.4f}) "
           f"CI2=({s2.ci_lower:.4f}, {s2.ci_upper:.4f}) IACT=({s1.iact:.2f}, {s2.iact:.2f}) "
           f"Geweke p=({s1.geweke_p:.3f}, {s2.geweke_p:.3f}) acceptance={res.chain.acceptance_rate:.2f} "
           f"time={seconds:.0f}s" + ("" if ok else f" failed={[k for k, v in checks.items() if not v]}"))
    assert ok


# ---------------------------------------------------------------- criterion 7

def test_criterion_7_cost_reduction(setups, bases):
    require_properties()
    setup = setups[64]
    model = bases[64].reduced_model(setup, 100)
    rd = ex.run_inverse(setup, ex.deim_forward(model), 2000, 1000, seed=1)
    rf = ex.run_inverse(setup, ex.full_forward(setup), 2000, 1000, seed=1)
    t_deim = rd.chain_seconds + rd.data_seconds
    t_full = rf.chain_seconds + rf.data_seconds
    ratio = t_deim / t_full
    ok = ratio <= 0.5
    record(7, "end-to-end cost N=4096 M=2000", ok,
           f"AMH-DEIM {t_deim:.2f}s vs AMH-Full {t_full:.2f}s, ratio {ratio:.3f} (reduction {1 - ratio:.0%}); "
           f"one-off basis build {bases[64].seconds:.1f}s not included")
    assert ok
