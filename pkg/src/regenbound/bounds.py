"""Explicit tail-bound curves with per-term breakdown.

Each bound is represented as a :class:`TailBoundCurve`: a named sum of
closed-form terms, clamped to [0, 1], equal to 1 below its validity
threshold.  Functional wrappers with the same parameter lists evaluate a
curve at a single point.

Conventions used throughout:

- ``log n`` means ``log(max(n, e))``.
- A term whose scale parameter is zero contributes 0 for t > 0 and its
  coefficient at t = 0 (degenerate zero-norm inputs).
- Curves for statements that bound the tail at a multiple of t carry a
  ``deviation_scale``; ``bound_at_threshold(u)`` always refers to the actual
  deviation u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .constants import drift_norm_set

E8 = math.exp(8.0)


def log_floor(x: float) -> float:
    """log(max(x, e)); keeps logarithmic factors bounded below by 1."""
    return math.log(max(x, math.e))


@dataclass(frozen=True)
class BoundTerm:
    label: str
    fn: object

    def __call__(self, t: float) -> float:
        return self.fn(t)


@dataclass(frozen=True)
class TailBoundCurve:
    name: str
    terms: tuple
    params: dict = field(default_factory=dict)
    valid_from: float = 0.0
    deviation_scale: float = 1.0

    def term_values(self, t: float) -> list[float]:
        return [term(t) for term in self.terms]

    def evaluate(self, t: float) -> float:
        if t < self.valid_from:
            return 1.0
        return min(1.0, math.fsum(self.term_values(t)))

    def bound_at_threshold(self, u: float) -> float:
        """Bound on the tail at actual deviation u."""
        return self.evaluate(u / self.deviation_scale)

    @property
    def deviation_valid_from(self) -> float:
        return self.valid_from * self.deviation_scale

    def term_labels(self) -> list[str]:
        return [term.label for term in self.terms]

    def evaluate_grid(self, ts) -> np.ndarray:
        return np.array([self.evaluate(float(t)) for t in ts])


def _stretched_exp(label, coeff, scale, alpha, t_factor=1.0):
    """coeff * exp(-((t_factor * t) / scale)^alpha), zero-scale convention."""

    def fn(t):
        if t < 0:
            raise ValueError("t must be nonnegative")
        if scale == 0.0:
            return coeff if t == 0.0 else 0.0
        return coeff * math.exp(-((t_factor * t) / scale) ** alpha)

    return BoundTerm(label, fn)


def _bernstein_exp(label, coeff, gauss_coeff, linear_coeff, t_factor=1.0):
    """coeff * exp(-(t_factor*t)^2 / (gauss_coeff + linear_coeff * t_factor*t))."""

    def fn(t):
        if t < 0:
            raise ValueError("t must be nonnegative")
        u = t_factor * t
        denom = gauss_coeff + linear_coeff * u
        if denom == 0.0:
            return coeff if u == 0.0 else 0.0
        return coeff * math.exp(-u * u / denom)

    return BoundTerm(label, fn)


# ---------------------------------------------------------------------------
# additive functionals, general skeleton


def general_markov_curve(*, a, b, c, sigma2, pi_theta, n, m, alpha) -> TailBoundCurve:
    """Four-term bound on P(|sum_{k<n} f(X_k)| > 3t) for an m-skeleton split.

    Requires m | n.  The curve is indexed by the t of the statement; use
    ``bound_at_threshold(u)`` for the actual deviation u = 3t.
    """
    if m < 1 or n % m != 0:
        raise ValueError("the statement requires m | n")
    big_m = c * (3.0 * alpha ** -2 * log_floor(n / m)) ** (1.0 / alpha)
    half_blocks = (n + 2 * m - 1) // (2 * m)
    terms = (
        _stretched_exp("start_excursion", 2.0, a, alpha),
        _stretched_exp("tail_excursion", 2.0 / pi_theta, b, alpha),
        _stretched_exp("block_psi", 2.0 * E8, 4.0 * c * 2.0 ** (1.0 / alpha), alpha),
        _bernstein_exp("gaussian", 4.0, 32.0 * half_blocks * sigma2, 32.0 / 6.0 * big_m),
    )
    params = dict(a=a, b=b, c=c, sigma2=sigma2, pi_theta=pi_theta, n=n, m=m,
                  alpha=alpha, M=big_m)
    return TailBoundCurve("general_markov", terms, params, deviation_scale=3.0)


def general_markov_bound(t, a, b, c, sigma2, pi_theta, n, m, alpha) -> float:
    return general_markov_curve(a=a, b=b, c=c, sigma2=sigma2, pi_theta=pi_theta,
                                n=n, m=m, alpha=alpha).evaluate(t)


# ---------------------------------------------------------------------------
# strongly aperiodic geometric case


def geometric_curve(*, a, b, c, d, sigma2, pi_theta, n, alpha, eta,
                    pi_theta_inv=None) -> TailBoundCurve:
    """Bound on P(|sum_{k<n} g(X_k) - n pi(g)| > t) for m=1 chains.

    The subgaussian coefficient is (1+eta) sigma^2 n with sigma^2 the
    asymptotic variance; tightening eta costs the remaining constants.
    ``pi_theta_inv`` overrides the coefficient of the tail-excursion term
    (an upper bound on 1/pi*(theta), e.g. the regeneration norm d).
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    if pi_theta_inv is None:
        pi_theta_inv = 1.0 / pi_theta
    sigma = math.sqrt(sigma2)
    big_m = ((1.0 + eta) ** 0.75
             * max(4.0 * c * (3.0 * alpha ** -2 * log_floor(n)) ** (1.0 / alpha) / 3.0,
                   29.0 * pi_theta * d * sigma / eta))
    coeff4 = 2.0 ** (1.0 + eta / (2.0 + eta))
    terms = (
        _stretched_exp("start_excursion", 2.0, 25.0 * a, alpha, t_factor=eta),
        _stretched_exp("tail_excursion", 2.0 * pi_theta_inv, 25.0 * b, alpha,
                       t_factor=eta),
        _stretched_exp("block_psi", E8, 14.0 * c * 2.0 ** (1.0 / alpha), alpha,
                       t_factor=eta),
        _bernstein_exp("gaussian", coeff4, 2.0 * (1.0 + eta) * sigma2 * n,
                       2.0 * big_m),
    )
    params = dict(a=a, b=b, c=c, d=d, sigma2=sigma2, pi_theta=pi_theta,
                  pi_theta_inv=pi_theta_inv, n=n, alpha=alpha, eta=eta, M=big_m)
    return TailBoundCurve("geometric", terms, params)


def geometric_bound(t, a, b, c, d, sigma2, pi_theta, n, alpha, eta) -> float:
    return geometric_curve(a=a, b=b, c=c, d=d, sigma2=sigma2, pi_theta=pi_theta,
                           n=n, alpha=alpha, eta=eta).evaluate(t)


def theorem_a_curve(model, cert, kappa, s, x, eta, n):
    """End-to-end drift pipeline for the geometric case.

    Assembles the drift-derived norm bundle, caps the asymptotic variance by
    pi*(theta) times the squared L2 block bound, replaces the 1/pi*(theta)
    coefficient by the regeneration norm bound d, and returns the resulting
    curve together with the bundle.
    """
    small = model.small_set
    if small is None or small.m != 1:
        raise ValueError("the end-to-end pipeline needs an m=1 small set")
    if model.pi_c is None:
        raise ValueError("model must carry pi(C) to assemble the constants")
    norms = drift_norm_set(cert, small.delta, kappa, s, float(cert.V(x)),
                           model.pi_c, small.contains(x))
    curve = geometric_curve(a=norms.a, b=norms.b, c=norms.c, d=norms.d,
                            sigma2=norms.sigma2_cap, pi_theta=norms.pi_theta,
                            n=n, alpha=norms.alpha, eta=eta,
                            pi_theta_inv=norms.d)
    return curve, norms


def theorem_a_bound(model, cert, kappa, s, x, eta, n, t) -> float:
    curve, _ = theorem_a_curve(model, cert, kappa, s, x, eta, n)
    return curve.evaluate(t)


# ---------------------------------------------------------------------------
# empirical processes of Markov chains


def empirical_process_threshold(eps, a, b, e_norm, d, pi_theta, pi_f, alpha) -> float:
    """Validity threshold C(eps) of the empirical-process bound."""
    g1 = float(gamma_fn(1.0 + 1.0 / alpha))
    return (1.0 / eps) * (
        (9.0 + 9.0 * e_norm + 27.0 * pi_theta * d * d / eps) * pi_f
        + 9.0 * g1 * a
        + 9.0 * 2.0 ** (1.0 / alpha - 1.0) * math.e * g1
        * math.log(math.e / pi_theta) ** (1.0 / alpha) * b)


def empirical_process_curve(*, a, b, c, d, e_norm, sigma2, pi_theta, pi_f, n,
                            alpha, eps) -> TailBoundCurve:
    """Six-term bound on P(Z >= (1 + 7 eps) E Z + t), valid for t >= C(eps)."""
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    big_m = c * (3.0 * alpha ** -2 * log_floor(n)) ** (1.0 / alpha)
    one_m2e = 1.0 - 2.0 * eps
    d_eps = (1.0 + 1.0 / eps) * (3.0 + 4.0 / eps)
    bern_scale = 2.0 * (1.0 + eps) ** 2 * n * sigma2 / one_m2e ** 4

    def gaussian(t):
        if bern_scale == 0.0:
            return 1.0 if t == 0.0 else 0.0
        return math.exp(-t * t / bern_scale)

    lin_scale = 2.0 * big_m * d_eps / one_m2e ** 2

    def linear(t):
        if lin_scale == 0.0:
            return math.e if t == 0.0 else 0.0
        return math.e * math.exp(-t / lin_scale)

    fixed_n = math.e * math.exp(-eps * eps * n / (144.0 * pi_theta * d * d))

    terms = (
        BoundTerm("gaussian", gaussian),
        BoundTerm("bounded_linear", linear),
        _stretched_exp("block_psi", E8, 2.0 ** (1.0 / alpha) * c, alpha,
                       t_factor=eps * one_m2e),
        BoundTerm("stopping_overshoot", lambda t: fixed_n),
        _stretched_exp("start_excursion", 2.0, 2.0 * a, alpha, t_factor=eps),
        _stretched_exp("tail_excursion", 2.0 / pi_theta, 2.0 * b, alpha,
                       t_factor=eps),
    )
    c_eps = empirical_process_threshold(eps, a, b, e_norm, d, pi_theta, pi_f, alpha)
    params = dict(a=a, b=b, c=c, d=d, e=e_norm, sigma2=sigma2,
                  pi_theta=pi_theta, pi_f=pi_f, n=n, alpha=alpha, eps=eps,
                  M=big_m, threshold=c_eps)
    return TailBoundCurve("empirical_process", terms, params, valid_from=c_eps)


def empirical_process_bound(t, a, b, c, d, e, sigma2, pi_theta, pi_f, n,
                            alpha, eps) -> float:
    return empirical_process_curve(a=a, b=b, c=c, d=d, e_norm=e, sigma2=sigma2,
                                   pi_theta=pi_theta, pi_f=pi_f, n=n,
                                   alpha=alpha, eps=eps).evaluate(t)


# ---------------------------------------------------------------------------
# independent / one-dependent building blocks


def independent_onedep_curve(*, c, sigma2, n, m, alpha) -> TailBoundCurve:
    """Bound for maxima of partial sums of a one-dependent psi_alpha sequence."""
    big_m = c * (3.0 * alpha ** -2 * log_floor(n / m)) ** (1.0 / alpha)
    half_blocks = (n + 2 * m - 1) // (2 * m)
    terms = (
        _stretched_exp("unbounded_part", 2.0 * E8, 4.0 * c * 2.0 ** (1.0 / alpha),
                       alpha),
        _bernstein_exp("bounded_part", 4.0, 32.0 * half_blocks * sigma2,
                       32.0 / 6.0 * big_m),
    )
    return TailBoundCurve("independent_onedep", terms,
                          dict(c=c, sigma2=sigma2, n=n, m=m, alpha=alpha, M=big_m))


def independent_onedep_bound(t, c, sigma2, n, m, alpha) -> float:
    return independent_onedep_curve(c=c, sigma2=sigma2, n=n, m=m,
                                    alpha=alpha).evaluate(t)


def independent_stopped_curve(*, c, sigma2, n, alpha, eps, a_center,
                              psi1_excess, p) -> TailBoundCurve:
    """Bound for a sum stopped at a time N <= n with ||(N-a)_+||_psi1 control."""
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    q = p / (p - 1.0)
    big_m = c * (3.0 * alpha ** -2 * log_floor(n)) ** (1.0 / alpha)
    sigma = math.sqrt(sigma2)
    mu_bounded = 3.0 / (4.0 * big_m * (1.0 + eps)) if big_m > 0 else math.inf
    if sigma > 0.0 and psi1_excess > 0.0:
        mu_stop = math.sqrt(eps) / ((1.0 + eps) * sigma * math.sqrt(psi1_excess))
    else:
        mu_stop = math.inf
    mu = min(mu_bounded, mu_stop)
    mu_inv = 0.0 if math.isinf(mu) else 1.0 / mu
    coeff2 = 2.0 ** (1.0 + eps / (1.0 + eps))
    terms = (
        _stretched_exp("unbounded_part", E8, c * 2.0 ** (1.0 / alpha), alpha,
                       t_factor=1.0 / p),
        _bernstein_exp("bounded_part", coeff2,
                       2.0 * (1.0 + eps) * a_center * sigma2 * q * q,
                       2.0 * mu_inv * q, t_factor=1.0),
    )
    # bounded_part exponent: q^-2 t^2 / (2((1+eps) a sigma^2 + mu^-1 t q^-1))
    #                      =    t^2 / (2 q^2 (1+eps) a sigma^2 + 2 mu^-1 q t)
    params = dict(c=c, sigma2=sigma2, n=n, alpha=alpha, eps=eps,
                  a_center=a_center, psi1_excess=psi1_excess, p=p, q=q,
                  mu=mu, M=big_m)
    return TailBoundCurve("independent_stopped", terms, params)


def independent_stopped_bound(t, c, sigma2, n, alpha, eps, a_center,
                              psi1_excess, p) -> float:
    return independent_stopped_curve(
        c=c, sigma2=sigma2, n=n, alpha=alpha, eps=eps, a_center=a_center,
        psi1_excess=psi1_excess, p=p).evaluate(t)


def bernstein_psi1_curve(*, c, n) -> TailBoundCurve:
    if c <= 0.0:
        raise ValueError("c must be positive")
    terms = (_bernstein_exp("psi1_bernstein", 1.0, 4.0 * n * c * c, 2.0 * c),)
    return TailBoundCurve("bernstein_psi1", terms, dict(c=c, n=n))


def bernstein_psi1_tail(t, c, n) -> float:
    """One-sided tail exp(-t^2 / (4 n c^2 + 2 c t)) for centered psi_1 sums."""
    return bernstein_psi1_curve(c=c, n=n).evaluate(t)


def n_deviation_psi1(n, pi_theta, d, eps):
    """Deviation control for the stopping index N of the decomposition.

    Returns ``(tail_fn, psi1_excess)``: ``tail_fn(k)`` bounds P(N > k) for
    integers k >= pi*(theta) n (1 + eps) (and is 1 below that), and
    ``psi1_excess`` bounds ||(N - (1+eps) pi*(theta) n)_+||_psi1.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    rate = 36.0 * pi_theta ** 2 * d * d / eps
    start = pi_theta * n * (1.0 + eps)

    def tail_fn(k):
        if k < start:
            return 1.0
        return min(1.0, math.exp(-(k - pi_theta * n) / rate))

    return tail_fn, 144.0 * pi_theta ** 2 * d * d / eps


def klein_rio_curve(*, sigma2, n, big_m, es, eps) -> TailBoundCurve:
    """Talagrand-type bound for bounded classes: P(S* >= (1+eps) E S + t)."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    d_eps = (1.0 + 1.0 / eps) * (3.0 + 4.0 / eps)
    terms = (
        _bernstein_exp("gaussian", 1.0, 2.0 * (1.0 + eps) * n * sigma2, 0.0),
        _stretched_exp("bounded_linear", 1.0, big_m * d_eps, 1.0),
    )
    return TailBoundCurve("klein_rio", terms,
                          dict(sigma2=sigma2, n=n, M=big_m, es=es, eps=eps,
                               d_eps=d_eps))


def klein_rio_tail(t, sigma2, n, M, ES, eps) -> float:
    return klein_rio_curve(sigma2=sigma2, n=n, big_m=M, es=ES, eps=eps).evaluate(t)


def klein_rio_tail_basic(t, sigma2, n, M, ES) -> float:
    """The eps-free form: P(S* >= E S + t) <= exp(-t^2/(2 sigma^2 n + (4 ES + 3t) M))."""
    denom = 2.0 * sigma2 * n + (4.0 * ES + 3.0 * t) * M
    if denom == 0.0:
        return 1.0 if t == 0.0 else 0.0
    return min(1.0, math.exp(-t * t / denom))


def truncated_empirical_curve(*, c, sigma2, n, alpha, eps) -> TailBoundCurve:
    """Unbounded-envelope empirical-process bound for i.i.d. samples."""
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    big_m = c * (3.0 * alpha ** -2 * log_floor(n)) ** (1.0 / alpha)
    one_m2e = 1.0 - 2.0 * eps
    d_eps = (1.0 + 1.0 / eps) * (3.0 + 4.0 / eps)
    terms = (
        _bernstein_exp("gaussian", 1.0,
                       2.0 * (1.0 + eps) * n * sigma2 / one_m2e ** 2, 0.0),
        _stretched_exp("bounded_linear", math.e, 2.0 * big_m * d_eps / one_m2e, 1.0),
        _stretched_exp("unbounded_part", E8, 2.0 ** (1.0 / alpha) * c, alpha,
                       t_factor=eps),
    )
    return TailBoundCurve("truncated_empirical", terms,
                          dict(c=c, sigma2=sigma2, n=n, alpha=alpha, eps=eps,
                               M=big_m))


def truncated_empirical_bound(t, c, sigma2, n, alpha, eps) -> float:
    return truncated_empirical_curve(c=c, sigma2=sigma2, n=n, alpha=alpha,
                                     eps=eps).evaluate(t)


def uw_expectation_bounds(a, b, pi_theta, alpha):
    """Expectation bounds for the start and tail excursions of the envelope."""
    g1 = float(gamma_fn(1.0 + 1.0 / alpha))
    eu = 2.0 * g1 * a
    ew = (2.0 ** (1.0 / alpha) * math.e * g1
          * math.log(math.e / pi_theta) ** (1.0 / alpha) * b)
    return eu, ew
