import math

import numpy as np
import pytest
from scipy.stats import chisquare

import regenbound as rb
from regenbound.chain import DiscreteNu, SmallSet, integrate


def geometric_pmf(rho, i):
    return (1.0 - rho) * rho ** i


def test_step_self_loop_at_zero(ex1, queued_rng):
    _, model, _ = ex1
    # direction draw >= 0.5 proposes the self-loop at 0; acceptance is 1
    rng = queued_rng([0.9, 0.5])
    assert rb.step(model, 0, rng) == 0


def test_step_up_move_accept(ex1, queued_rng):
    _, model, _ = ex1
    # direction < 0.5 proposes +1; acceptance ratio is rho = 0.5
    rng = queued_rng([0.1, 0.49])
    assert rb.step(model, 3, rng) == 4
    rng = queued_rng([0.1, 0.51])
    assert rb.step(model, 3, rng) == 3


def test_up_acceptance_rate_matches_rho(ex1):
    _, model, _ = ex1
    rho = 0.5
    n = 100_000
    rng = rb.derive_rng(11, 0)
    states = np.full(n, 5, dtype=np.int64)
    out = model.step_batch(states, rng)
    # one step from i: P(move up) = rho / 2 exactly for the geometric target
    p_hat = float(np.mean(out == 6))
    p = rho / 2.0
    stderr = math.sqrt(p * (1 - p) / n)
    assert abs(p_hat - p) <= 3 * stderr


def test_row_sums_exactly_one():
    for rho in (0.5, 0.3, 0.77):
        spec, model, cert = rb.geometric_example(rho, 1.0 + (1 / rho - 1) / 4)
        for i in range(0, 201, 7):
            states, probs = model.transition_row(i)
            assert math.fsum(probs) == 1.0


def test_detailed_balance_lattice(ex1):
    _, model, _ = ex1
    rho = 0.5
    for i in range(0, 60):
        pi_i = geometric_pmf(rho, i)
        pi_j = geometric_pmf(rho, i + 1)
        a_up = min(pi_j / pi_i, 1.0)
        a_dn = min(pi_i / pi_j, 1.0)
        lhs = pi_i * 0.5 * a_up
        rhs = pi_j * 0.5 * a_dn
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


def test_detailed_balance_real_line(ex2):
    _, model, _ = ex2
    rng = np.random.default_rng(4)
    xs = rng.uniform(-4, 4, 25)
    ys = xs + rng.laplace(0, 1, 25)
    for x, y in zip(xs, ys):
        pi_x = math.exp(-0.5 * x * x)
        pi_y = math.exp(-0.5 * y * y)
        lhs = pi_x * float(model.transition_density(x, y))
        rhs = pi_y * float(model.transition_density(y, x))
        assert abs(lhs - rhs) <= 1e-12 * max(lhs, rhs)


def test_one_step_law_chisquare(ex2):
    """10^5 one-step samples from 0 vs the quadrature law, level 0.01."""
    _, model, _ = ex2
    rng = rb.derive_rng(17, 0)
    samples = model.step_batch(np.zeros(100_000), rng)
    edges = [-np.inf, -2.0, -1.0, -0.5, -1e-12, 1e-12, 0.5, 1.0, 2.0, np.inf]
    atom = float(np.mean(samples == 0.0))
    counts = [np.sum(samples == 0.0)]
    expected = [model.rejection_mass(0.0)]
    moved = samples[samples != 0.0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == -1e-12 and hi == 1e-12:
            continue
        counts.append(np.sum((moved > lo) & (moved <= hi)))
        expected.append(integrate(
            lambda y: float(model.transition_density(0.0, y)), lo, hi,
            breakpoints=(0.0,)))
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    expected *= counts.sum() / expected.sum()
    stat, p = chisquare(counts, expected)
    assert p > 0.01, f"chi-square p = {p:.4f} (atom mass {atom:.4f})"


def test_verify_drift_pass_example1(ex1):
    _, model, cert = ex1
    report = rb.verify_drift(model, cert, range(0, 201))
    assert report.passed
    assert report.max_violation_rel <= 1e-12


def test_verify_drift_fail_inflated_lambda(ex1):
    spec, model, _ = ex1
    bad = rb.DriftCertificate(V=spec.V, lam=2 * spec.lam, b=spec.b, K=spec.K)
    report = rb.verify_drift(model, bad, range(0, 201))
    assert not report.passed
    assert report.max_violation > 0


def test_drift_certificate_rejects_boundary():
    with pytest.raises(ValueError):
        rb.DriftCertificate(V=lambda x: 1.0, lam=0.0, b=0.0, K=1.0)
    with pytest.raises(ValueError):
        rb.DriftCertificate(V=lambda x: 1.0, lam=1.0, b=0.0, K=1.0)


def test_verify_drift_monotone_in_lambda_and_b(ex1):
    spec, model, _ = ex1
    grid = range(0, 120)
    rng = np.random.default_rng(3)
    for _ in range(5):
        lam = spec.lam * rng.uniform(0.2, 1.0)
        b = spec.b * rng.uniform(1.0, 3.0)
        cert = rb.DriftCertificate(V=spec.V, lam=lam, b=b, K=spec.K)
        assert rb.verify_drift(model, cert, grid).passed
        looser = rb.DriftCertificate(V=spec.V, lam=lam / 2, b=2 * b, K=spec.K)
        assert rb.verify_drift(model, looser, grid).passed


def test_minorization_atom_zero_slack(ex1):
    _, model, _ = ex1
    report = rb.verify_minorization(
        model, range(0, 50), [frozenset({0}), frozenset({1}), frozenset({0, 1})])
    assert report.passed
    assert report.min_slack == 0.0


def test_minorization_example2_pass_and_inflated_fail(ex2):
    spec, model, cert = ex2
    grid = np.linspace(-3, 3, 9)
    sets = [(-3.0, -1.0), (-1.0, 1.0), (1.0, 3.0), (-3.0, 3.0)]
    assert rb.verify_minorization(model, grid, sets).passed

    # the closed-form delta stacks worst cases that never coincide, so it
    # carries roughly a 20x safety margin here; push past it to break
    def inflated_by(factor):
        bad = rb.RealLineMHModel(model.proposal, model.log_target, m=1)
        bad.small_set = SmallSet(delta=min(factor * spec.delta, 1.0),
                                 nu=model.small_set.nu, m=1,
                                 interval=model.small_set.interval)
        return rb.verify_minorization(bad, grid, sets)

    assert inflated_by(1.5).passed  # still inside the formula's slack
    assert not inflated_by(26.0).passed


def test_matrix_model_rejects_bad_rows():
    with pytest.raises(ValueError):
        rb.LatticeMatrixModel([[0.5, 0.4], [0.5, 0.5]])


def test_matrix_model_step_law():
    mat = [[0.25, 0.75], [0.6, 0.4]]
    model = rb.LatticeMatrixModel(mat)
    rng = rb.derive_rng(5, 0)
    out = model.step_batch(np.zeros(50_000, dtype=np.int64), rng)
    p_hat = float(np.mean(out == 1))
    assert abs(p_hat - 0.75) < 3 * math.sqrt(0.75 * 0.25 / 50_000)
    states, probs = model.m_step_row(0, 2)
    expect = np.array(mat)[0] @ np.array(mat)
    assert np.allclose(probs, expect[states], atol=1e-15)


def test_integrate_laplace_density_normalized():
    assert abs(integrate(lambda z: 0.5 * math.exp(-abs(z)), -np.inf, np.inf,
                         breakpoints=(0.0,)) - 1.0) < 1e-10


def test_integrate_reports_nonconvergence():
    # a wildly oscillatory integrand defeats the subdivision budget
    with pytest.raises(rb.QuadratureFailure):
        integrate(lambda x: math.sin(3e7 * x * x) * math.exp(-abs(x) / 40),
                  0.0, 35.0)


def test_small_set_validation():
    nu = DiscreteNu([0], [1.0])
    with pytest.raises(ValueError):
        SmallSet(delta=0.0, nu=nu, members=frozenset({0}))
    with pytest.raises(ValueError):
        SmallSet(delta=0.5, nu=nu)  # neither members nor interval
