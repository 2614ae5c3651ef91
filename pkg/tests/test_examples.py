import math

import numpy as np
import pytest

import regenbound as rb
from regenbound.examples import drift_integrals, small_set_delta


def lam_closed_form(x_star):
    """Antiderivative of q(z)(1-e^-z)^2 for the unit Laplace proposal."""
    return (0.5 * ((1 - math.exp(-x_star))
                   - (1 - math.exp(-2 * x_star))
                   + (1 - math.exp(-3 * x_star)) / 3.0)
            - math.exp(-x_star))


def b_closed_form(x_star):
    # (1 + e^-x* + (e^x* - 1)) e = 2 e cosh(x*)
    return 2.0 * math.e * math.cosh(x_star)


def test_geometric_example_constants():
    spec, model, cert = rb.geometric_example(0.5, 1.2)
    assert spec.lam == pytest.approx(1.0 - 1.0 / 2.4 - 0.3 - 0.25, abs=1e-15)
    assert spec.lam == pytest.approx(1.0 / 30.0, rel=1e-12)
    assert spec.b == pytest.approx(0.1, rel=1e-12)
    assert spec.K == 1.2
    assert model.small_set.delta == 1.0


def test_geometric_example_rejects_bad_A():
    # the rate 1 - 1/(2A) - rho A/2 - (1-rho)/2 vanishes exactly at A = 1 and
    # A = 1/rho, so rejection happens at the interval ends
    with pytest.raises(rb.InvalidA):
        rb.geometric_example(0.5, 1.0)
    with pytest.raises(rb.InvalidA):
        rb.geometric_example(0.5, 2.0)
    # just inside the interval the rate is tiny but positive
    spec, _, _ = rb.geometric_example(0.999, 1.0005)
    assert 0.0 < spec.lam < 1e-6


def test_geometric_drift_exact_up_to_500():
    """Three-term exact sums satisfy the drift inequality with equality."""
    spec, model, cert = rb.geometric_example(0.5, 1.2)
    for i in range(0, 501):
        states, probs = model.transition_row(i)
        pv = math.fsum(p * spec.A ** (int(s) + 1) for s, p in zip(states, probs))
        v = spec.A ** (i + 1)
        slack = pv - v + spec.lam * v - (spec.b if i == 0 else 0.0)
        assert slack <= 1e-12 * v


def test_geometric_pi_expectation_closed_forms():
    assert rb.geometric_pi_expectation(lambda i: 1.0, 0.5) == pytest.approx(1.0)
    assert rb.geometric_pi_expectation(lambda i: float(i), 0.5) == pytest.approx(
        1.0, rel=1e-13)
    assert rb.geometric_pi_expectation(lambda i: float(i), 0.3) == pytest.approx(
        0.3 / 0.7, rel=1e-13)


def test_kappa_s_wiring_identity():
    """kappa/(log A)^s (log V(n))^s equals kappa (1+n)^s identically."""
    spec, _, _ = rb.geometric_example(0.5, 1.2)
    for s in (0.5, 1.0, 2.0):
        kt = spec.log_v_kappa(2.0, s)
        for n in range(0, 50, 3):
            log_v = math.log(spec.V(n))
            assert kt * log_v ** s == pytest.approx(2.0 * (1 + n) ** s,
                                                    rel=1e-12)


@pytest.mark.parametrize("x_star", [2.0, 3.0, 4.0])
def test_drift_integrals_match_closed_forms(x_star):
    lam, b = drift_integrals(rb.LaplaceProposal(), x_star)
    assert abs(lam - lam_closed_form(x_star)) < 1e-10
    assert abs(b - b_closed_form(x_star)) < 1e-10


def test_drift_integrals_small_xstar_limit():
    lam, _ = drift_integrals(rb.LaplaceProposal(), 1e-3)
    assert lam == pytest.approx(-1.0, abs=5e-3)


def test_logconcave_example_rejects_small_xstar():
    with pytest.raises(rb.NegativeLambda):
        rb.logconcave_example(rb.LaplaceProposal(), 2.0)  # lam < 0 there
    with pytest.raises(rb.NegativeLambda):
        rb.logconcave_example(rb.LaplaceProposal(), 1.0)  # tail region unmet


def test_logconcave_example_constants(ex2):
    spec, model, cert = ex2
    assert spec.lam == pytest.approx(lam_closed_form(3.0), abs=1e-10)
    assert spec.b == pytest.approx(b_closed_form(3.0), abs=1e-10)
    assert spec.K == pytest.approx(math.exp(4.0), rel=1e-15)
    assert spec.pi_c == pytest.approx(math.erf(3.0 / math.sqrt(2.0)), rel=1e-12)
    # delta = pi(C) inf q / sup pi with inf over gaps of length 2 x*
    want = (spec.pi_c * 0.5 * math.exp(-6.0)
            / (1.0 / math.sqrt(2.0 * math.pi)))
    assert spec.delta == pytest.approx(want, rel=1e-9)


def test_scan_single_feasible_point():
    best, table = rb.scan_xstar(rb.LaplaceProposal(), rb.GaussianTarget(),
                                [3.0], kappa=1.0, s=1.0, n=1024, t=1e8)
    assert best == 3.0
    assert len(table) == 1 and table[0]["bound"] is not None


def test_scan_trends_and_infeasible_rows():
    grid = [2.0, 2.5, 3.0, 3.5, 4.0]
    best, table = rb.scan_xstar(rb.LaplaceProposal(), rb.GaussianTarget(),
                                grid, kappa=1.0, s=1.0, n=4096, t=1e14)
    lams = [row["lam"] for row in table]
    assert all(b > a for a, b in zip(lams[:-1], lams[1:]))  # lam up in x*
    deltas = [row["delta"] for row in table if not math.isnan(row["delta"])]
    assert all(b < a for a, b in zip(deltas[:-1], deltas[1:]))  # delta down
    assert table[0]["bound"] is None  # lam(2.0) < 0 is infeasible
    assert best in grid


def test_scan_all_infeasible():
    with pytest.raises(rb.AllInfeasible):
        rb.scan_xstar(rb.LaplaceProposal(), rb.GaussianTarget(), [2.0, 2.1],
                      kappa=1.0, s=1.0, n=256, t=10.0)


def test_scan_stable_under_refinement():
    coarse = list(np.linspace(2.4, 4.4, 6))
    fine = list(np.linspace(2.4, 4.4, 11))
    kw = dict(kappa=1.0, s=1.0, n=4096, t=1e14)
    best_c, _ = rb.scan_xstar(rb.LaplaceProposal(), rb.GaussianTarget(),
                              coarse, **kw)
    best_f, _ = rb.scan_xstar(rb.LaplaceProposal(), rb.GaussianTarget(),
                              fine, **kw)
    cell = coarse[1] - coarse[0]
    assert abs(best_c - best_f) <= cell + 1e-12


def test_hilbert_bound_values():
    report = rb.hilbert_example_bound(0.0, 0.0, 1.0, 1.0, 1.0, 100)
    assert report.expectation_bound == pytest.approx(4.0 * 10.0, rel=1e-13)
    report0 = rb.hilbert_example_bound(1.5, 2.0, 1.0, 0.5, 1.0, 0)
    want = (2.0 * 1.5
            + 2.0 * math.e * math.log(math.e / 0.5) * 2.0)
    assert report0.expectation_bound == pytest.approx(want, rel=1e-13)


def test_hilbert_bound_tail_curve_attached():
    # the stopping-overshoot term depends only on n, so the tail display is
    # informative only once n beats 144 pi*(theta) d^2 / eps^2
    n = 65536
    report = rb.hilbert_example_bound(1.0, 1.0, 1.0, 0.5, 0.5, n,
                                      d=3.0, e_norm=1.0, pi_f=1.0, eps=0.25)
    assert report.tail_curve is not None
    assert report.lln_tail(1e7, n) < 1.0
    assert report.lln_tail(0.0, n) == 1.0


def test_hilbert_bound_dominates_embedding_mc(ex1):
    """Empirical E || sum G(X_i) || stays below the norm bound."""
    spec, model, cert = ex1
    n, reps = 2 ** 12, 64
    pi0 = 0.5
    pig = 1.0
    p_ge2 = rb.geometric_pi_expectation(lambda i: float(i >= 2), 0.5)

    def g_embed(states):
        s = np.asarray(states, dtype=float)
        return np.stack([(s == 0) - pi0, s - pig, (s >= 2) - p_ge2], axis=-1)

    rng = rb.derive_rng(606, 0)
    norms_mc = np.empty(reps)
    for r in range(reps):
        x = np.zeros(1, dtype=np.int64)
        acc = np.zeros(3)
        for _ in range(n):
            acc += g_embed(x)[0]
            x = model.step_batch(x, rng)
        norms_mc[r] = math.sqrt(float(np.dot(acc, acc)))
    # envelope F = ||G|| <= 3 (1 + n), i.e. kappa = 3, s = 1
    kt = spec.log_v_kappa(3.0, 1.0)
    from regenbound.constants import drift_norm_set
    norms = drift_norm_set(cert, 1.0, kt, 1.0, float(cert.V(0)), 0.5, True)
    report = rb.hilbert_example_bound(norms.a, norms.b, norms.c,
                                      norms.pi_theta, norms.alpha, n)
    mean = norms_mc.mean()
    stderr = norms_mc.std() / math.sqrt(reps)
    assert mean + 3 * stderr <= report.expectation_bound


def test_small_set_delta_helper():
    val = small_set_delta(rb.GaussianTarget(), rb.LaplaceProposal(), 3.0)
    want = (math.erf(3.0 / math.sqrt(2.0)) * 0.5 * math.exp(-6.0)
            * math.sqrt(2.0 * math.pi))
    assert val == pytest.approx(want, rel=1e-9)
