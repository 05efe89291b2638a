import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deimbayes.bayes import (DEFAULT_X0, STREAM_ACCEPT, STREAM_PROPOSAL, ForwardFailure, FullForward, Posterior,
                             ProposalState, accept_step, log_posterior, make_rng, propose, run_chain,
                             synthesize_data, update_covariance)
from deimbayes.linsolve import PoissonSolver
from deimbayes.model import FullSystem, build_grid, in_prior_box


class Identity:
    """Forward map y = xi; with data y_obs the posterior is Gaussian in xi."""

    name = "identity"

    def __init__(self):
        self.calls = 0

    def __call__(self, xi):
        self.calls += 1
        return np.asarray(xi, dtype=float).copy()


@pytest.fixture(scope="module")
def full16():
    full = FullSystem(build_grid(16))
    return full, PoissonSolver(full.A)


def test_synthesize_noise_free_and_deterministic(full16):
    fwd = FullForward(*full16)
    clean = synthesize_data(fwd, (1, 0.1), sigma=0.0)
    np.testing.assert_array_equal(clean, fwd((1, 0.1)))
    a = synthesize_data(fwd, (1, 0.1), 1e-2, seed=7)
    b = synthesize_data(fwd, (1, 0.1), 1e-2, seed=7)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, synthesize_data(fwd, (1, 0.1), 1e-2, seed=8))


def test_outside_box_no_solve():
    fwd = Identity()
    post = Posterior(np.zeros(2), 1.0, fwd)
    assert log_posterior(post, (11, 5)) == -np.inf
    assert fwd.calls == 0 and post.forward_solves == 0


def test_true_parameter_maximizes(full16):
    fwd = FullForward(*full16)
    y = synthesize_data(fwd, (1, 0.1), sigma=1e-12)
    post = Posterior(y, 1e-3, fwd)
    best = max(((a, b) for a in (0.8, 0.9, 1.0, 1.1, 1.2) for b in (0.08, 0.09, 0.1, 0.11, 0.12)),
               key=lambda xi: post.log_density(xi))
    assert best == (1.0, 0.1)
    assert post.log_density((0.9, 0.11)) == post.log_density((0.9, 0.11))


def test_forward_failure_is_zero_likelihood():
    def failing(xi):
        raise ForwardFailure("no")

    post = Posterior(np.zeros(2), 1.0, failing)
    assert post.log_density((1, 1)) == -np.inf
    assert post.forward_failures == 1
    with pytest.raises(ValueError):
        Posterior(np.zeros(2), 0.0, failing)


def test_degenerate_proposal():
    state = ProposalState(1e-8 * np.eye(2))
    xi = np.array([2.0, 0.5])
    star = propose(xi, state, make_rng(0, STREAM_PROPOSAL))
    np.testing.assert_allclose(star, xi, rtol=1e-3)


def test_update_covariance_cases(oracle):
    eps = 1e-8
    np.testing.assert_allclose(update_covariance(np.full((10, 2), 3.0), eps), eps * np.eye(2), atol=1e-20)
    np.testing.assert_allclose(update_covariance(np.exp([[0.0, 0.0], [2.0, 0.0]]), eps), oracle["cov_two_samples"],
                               rtol=1e-14, atol=1e-22)
    np.testing.assert_array_equal(update_covariance(np.ones((1, 2))), np.eye(2))


def test_accept_step_limits():
    rng = make_rng(0, STREAM_ACCEPT)
    assert all(accept_step(-3.0, -3.0, rng) for _ in range(1000))
    assert not any(accept_step(-np.inf, -3.0, rng) for _ in range(1000))


def test_chain_of_length_one():
    post = Posterior(np.array([1.0, 1.0]), 1.0, Identity())
    ch = run_chain(post, 1)
    assert len(ch) == 1
    np.testing.assert_array_equal(ch.samples[0], DEFAULT_X0)
    assert ch.log_post[0] == post.log_density(DEFAULT_X0)


@given(st.integers(0, 2**63 - 1))
def test_chain_validity_and_counts(seed):
    fwd = Identity()
    post = Posterior(np.array([9.5, 0.05]), 2.0, fwd)  # mass near the box edges
    ch = run_chain(post, 300, seed=seed, stride=50)
    assert all(in_prior_box(x) for x in ch.samples)
    rejected = ~ch.accepted[1:]
    np.testing.assert_array_equal(ch.samples[1:][rejected], ch.samples[:-1][rejected])
    # one solve for x0 plus one per in-box proposal; out-of-box proposals are free
    assert fwd.calls == ch.config["forward_solves"] <= len(ch)


def test_out_of_box_proposals_skip_solves():
    fwd = Identity()
    post = Posterior(np.array([10.0, 10.0]), 0.5, fwd)
    ch = run_chain(post, 500, x0=(9.9, 9.9), seed=3)
    assert fwd.calls < len(ch)


def test_seed_determinism_and_swap_consistency():
    class Wrapped(Identity):
        name = "other"

    a = run_chain(Posterior(np.array([1.0, 0.1]), 0.1, Identity()), 400, seed=11)
    b = run_chain(Posterior(np.array([1.0, 0.1]), 0.1, Identity()), 400, seed=11)
    c = run_chain(Posterior(np.array([1.0, 0.1]), 0.1, Wrapped()), 400, seed=11)
    assert a.samples.tobytes() == b.samples.tobytes() == c.samples.tobytes()
    np.testing.assert_array_equal(a.accepted, c.accepted)
    d = run_chain(Posterior(np.array([1.0, 0.1]), 0.1, Identity()), 400, seed=12)
    assert not np.array_equal(a.samples, d.samples)


def test_gaussian_target_moments():
    """With the exact lognormal correction the chain samples N(y, s^2 I) (far from the box walls)."""
    y = np.array([2.0, 3.0])
    s = 0.2
    post = Posterior(y, s, Identity())
    ch = run_chain(post, 40000, x0=(2.0, 3.0), seed=5, jacobian_correction=True)
    kept = ch.samples[5000:]
    np.testing.assert_allclose(kept.mean(axis=0), y, atol=0.02)
    np.testing.assert_allclose(kept.var(axis=0), s**2, rtol=0.15)


def test_symmetric_rule_targets_log_space_density():
    """Without the correction the lognormal walk samples pi(xi)/(xi1 xi2), a shifted mean."""
    y = np.array([2.0, 3.0])
    s = 0.3
    ch = run_chain(Posterior(y, s, Identity()), 40000, x0=(2.0, 3.0), seed=5)
    kept = ch.samples[5000:]
    # for a narrow Gaussian the 1/xi factor moves the mean by about -s^2 / mu
    np.testing.assert_allclose(kept.mean(axis=0), y - s**2 / y, atol=0.02)


def test_run_chain_rejects_bad_start():
    with pytest.raises(ValueError):
        run_chain(Posterior(np.zeros(2), 1.0, Identity()), 10, x0=(20, 1))
    with pytest.raises(ValueError):
        run_chain(Posterior(np.zeros(2), 1.0, Identity()), 0)


def test_streams_are_independent():
    a = make_rng(1, STREAM_PROPOSAL).standard_normal(4)
    b = make_rng(1, STREAM_ACCEPT).standard_normal(4)
    assert not np.array_equal(a, b)


def test_deim_misfit_matches_lifted(bases32_small, setup32, rng):
    from deimbayes.bayes import DeimForward

    model = bases32_small.reduced_model(setup32, 20)
    fwd = DeimForward(model)
    y = rng.standard_normal(setup32.N)
    for xi in ((1.0, 0.1), (3.0, 2.0)):
        r = y - fwd(xi)
        assert fwd.squared_misfit(np.array(xi), y) == pytest.approx(float(r @ r), rel=1e-12)
    post = Posterior(y, 0.5, fwd)
    r = y - fwd((1.0, 0.1))
    assert post.log_density((1.0, 0.1)) == pytest.approx(-(r @ r) / 0.5, rel=1e-12)
