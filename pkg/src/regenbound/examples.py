"""The two built-in Metropolis-Hastings examples and derived quantities.

Example "geometric": a nearest-neighbour MH walk on the nonnegative integers
targeting a geometric-type distribution (pi(i+1) <= rho * pi(i)); the origin
is an atom, so delta = 1 and the drift constants are exact closed forms.

Example "logconcave": a symmetric random-walk MH sampler on the real line for
a positive symmetric target that is log-concave in the tails (normalized so
the tail log-slope is at least 2); the small set is an interval [-x*, x*] and
the drift constants come from quadrature of the proposal density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import (DriftCertificate, DriftKind, KernelStepNu, LatticeMHModel,
                    RealLineMHModel, SmallSet, TruncatedTargetNu, integrate)
from .constants import drift_norm_set
from .bounds import geometric_curve, empirical_process_curve, TailBoundCurve
from scipy.special import gamma as gamma_fn


class InvalidA(ValueError):
    """Drift base A outside (1, 1/rho), or the induced rate is not positive."""


class NegativeLambda(ValueError):
    """The drift rate came out nonpositive; enlarge the small set."""


class AllInfeasible(RuntimeError):
    """No candidate in the scan grid produced a positive drift rate."""


# ---------------------------------------------------------------------------
# geometric target on the integers


@dataclass(frozen=True)
class GeometricExampleSpec:
    rho: float
    A: float
    lam: float
    b: float
    K: float
    delta: float = 1.0
    atom: int = 0

    def V(self, n):
        return self.A ** (np.asarray(n, dtype=float) + 1.0)

    def log_v_kappa(self, kappa: float, s: float) -> float:
        """Constant for |g| <= kappa (1+n)^s rewritten against (log V)^s."""
        return kappa / math.log(self.A) ** s


def geometric_example(rho: float, A: float):
    """Geometric-target MH walk with drift V(n) = A^(n+1).

    The rate is lam = 1 - 1/(2A) - rho*A/2 - (1-rho)/2, with b = (A-1)/2 and
    K = V(0) = A; the origin is an atom with delta = 1 and nu = P(0, .).
    Returns (spec, model, certificate).
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if not 1.0 < A < 1.0 / rho:
        raise InvalidA(f"A must lie in (1, {1.0 / rho:g}), got {A}")
    lam = 1.0 - 1.0 / (2.0 * A) - rho * A / 2.0 - (1.0 - rho) / 2.0
    if lam <= 0.0:
        raise InvalidA(f"A={A} gives nonpositive drift rate {lam:g}")
    spec = GeometricExampleSpec(rho=rho, A=A, lam=lam, b=(A - 1.0) / 2.0, K=A)

    def ratio(i, j):
        return rho ** (np.asarray(j, dtype=float) - np.asarray(i, dtype=float))

    model = LatticeMHModel(target_ratio=ratio, m=1)
    model.small_set = SmallSet(delta=1.0, nu=KernelStepNu(model, spec.atom),
                               m=1, members=frozenset({spec.atom}))
    model.pi_c = 1.0 - rho  # pi({0}) for the exactly geometric target
    cert = DriftCertificate(V=spec.V, lam=lam, b=spec.b, K=spec.K,
                            kind=DriftKind.GEOMETRIC_PV)
    return spec, model, cert


def geometric_pi_pmf(rho: float, i):
    return (1.0 - rho) * rho ** np.asarray(i, dtype=float)


def geometric_pi_expectation(fn, rho: float, tol: float = 1e-18) -> float:
    """Exact-to-machine expectation of fn under the geometric target."""
    total = 0.0
    i = 0
    while True:
        w = (1.0 - rho) * rho ** i
        term = w * float(fn(i))
        total += term
        i += 1
        if w < tol * max(abs(total), 1.0) and i > 16:
            return total


# ---------------------------------------------------------------------------
# log-concave-in-tails target on the real line


@dataclass(frozen=True)
class LaplaceProposal:
    """Two-sided exponential increment density scale * exp(-|z|/scale) / 2."""

    scale: float = 1.0

    def density(self, z):
        return np.exp(-np.abs(z) / self.scale) / (2.0 * self.scale)

    def sample_batch(self, size, rng):
        return rng.laplace(0.0, self.scale, size)

    def tail_integral(self, x: float) -> float:
        """Closed form of the upper-tail integral of the density from x > 0."""
        return 0.5 * math.exp(-x / self.scale)


@dataclass(frozen=True)
class GaussianProposal:
    scale: float = 1.0

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return np.exp(-0.5 * (z / self.scale) ** 2) / (self.scale * math.sqrt(2 * math.pi))

    def sample_batch(self, size, rng):
        return rng.normal(0.0, self.scale, size)


@dataclass(frozen=True)
class GaussianTarget:
    """Standard-deviation-sigma Gaussian target; log-concave in the tails
    with slope >= 2 beyond x1 = 2 sigma^2."""

    sigma: float = 1.0

    def log_density(self, x):
        return -0.5 * (np.asarray(x, dtype=float) / self.sigma) ** 2

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x / self.sigma) ** 2) / (self.sigma * math.sqrt(2 * math.pi))

    def sample_batch(self, size, rng):
        return rng.normal(0.0, self.sigma, size)

    def interval_prob(self, lo: float, hi: float) -> float:
        z = 1.0 / (self.sigma * math.sqrt(2.0))
        return 0.5 * (math.erf(hi * z) - math.erf(lo * z))

    def sup_density(self, lo: float, hi: float) -> float:
        peak = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
        return float(self.density(peak))

    @property
    def tail_slope_start(self) -> float:
        return 2.0 * self.sigma ** 2


@dataclass(frozen=True)
class LogConcaveExampleSpec:
    x_star: float
    lam: float
    b: float
    K: float
    delta: float
    pi_c: float
    sup_pi: float

    def V(self, x):
        return np.exp(np.abs(np.asarray(x, dtype=float)) + 1.0)


def drift_integrals(proposal, x_star: float):
    """Drift rate and offset for V(x) = exp(|x|+1) from the proposal density.

    lam = int_0^{x*} q(z)(1 - e^{-z})^2 dz - 2 int_{x*}^inf q(z) dz and
    b = (1 + 2 int_{x*}^inf q + 2 e^{x*} int_0^{x*} q) * e, both to absolute
    1e-10.  Pure quadrature; callers decide whether lam > 0 is acceptable.
    """
    if x_star <= 0.0:
        raise ValueError("x_star must be positive")
    q = proposal.density
    if hasattr(proposal, "tail_integral"):
        upper = proposal.tail_integral(x_star)
    else:
        upper = integrate(lambda z: float(q(z)), x_star, np.inf)
    core = integrate(lambda z: float(q(z)) * (1.0 - math.exp(-z)) ** 2, 0.0, x_star)
    lower = integrate(lambda z: float(q(z)), 0.0, x_star)
    lam = core - 2.0 * upper
    b = (1.0 + 2.0 * upper + 2.0 * math.exp(x_star) * lower) * math.e
    return lam, b


def small_set_delta(target, proposal, x_star: float) -> float:
    """delta = pi(C) inf_{x,y in C} q(y-x) / sup_{x in C} pi(x) on C = [-x*, x*]."""
    gaps = np.linspace(0.0, 2.0 * x_star, 513)
    inf_q = float(np.min(proposal.density(gaps)))
    pi_c = target.interval_prob(-x_star, x_star)
    return pi_c * inf_q / target.sup_density(-x_star, x_star)


def logconcave_example(proposal, x_star: float, target=None):
    """Random-walk MH for a log-concave-in-tails target, small set [-x*, x*].

    Raises :class:`NegativeLambda` when the drift rate at this x* is not
    positive (x* too small).  Returns (spec, model, certificate).
    """
    target = target if target is not None else GaussianTarget()
    if x_star <= getattr(target, "tail_slope_start", 0.0):
        raise NegativeLambda(
            f"x* = {x_star:g} does not reach the log-concave tail region "
            f"(starts at {target.tail_slope_start:g})")
    lam, b = drift_integrals(proposal, x_star)
    if lam <= 0.0:
        raise NegativeLambda(f"drift rate {lam:g} <= 0 at x* = {x_star:g}")
    pi_c = target.interval_prob(-x_star, x_star)
    sup_pi = target.sup_density(-x_star, x_star)
    delta = small_set_delta(target, proposal, x_star)
    spec = LogConcaveExampleSpec(x_star=x_star, lam=lam, b=b,
                                 K=math.exp(x_star + 1.0), delta=delta,
                                 pi_c=pi_c, sup_pi=sup_pi)
    model = RealLineMHModel(proposal=proposal, log_target=target.log_density, m=1)
    model.small_set = SmallSet(delta=delta,
                               nu=TruncatedTargetNu(target, -x_star, x_star),
                               m=1, interval=(-x_star, x_star))
    model.pi_c = pi_c
    cert = DriftCertificate(V=spec.V, lam=lam, b=b, K=spec.K,
                            kind=DriftKind.GEOMETRIC_PV)
    return spec, model, cert


def scan_xstar(proposal, target, grid, *, kappa: float, s: float, n: int,
               t: float, eta: float = 0.5):
    """Scan candidate small-set radii and score the end-to-end bound at (n, t).

    Returns ``(best_x_star, table)`` where each table row is a dict with
    x_star, lam, b, delta, and the bound value (None when lam <= 0).  The
    best radius minimizes the bound over feasible rows.
    """
    table = []
    best = None
    best_value = math.inf
    for x_star in grid:
        row = {"x_star": float(x_star), "lam": math.nan, "b": math.nan,
               "delta": math.nan, "bound": None}
        try:
            spec, model, cert = logconcave_example(proposal, x_star, target)
        except NegativeLambda:
            lam, b = drift_integrals(proposal, x_star)
            row["lam"], row["b"] = lam, b
            table.append(row)
            continue
        row["lam"], row["b"], row["delta"] = spec.lam, spec.b, spec.delta
        norms = drift_norm_set(cert, spec.delta, kappa, s, float(spec.V(0.0)),
                               spec.pi_c, True)
        curve = geometric_curve(a=norms.a, b=norms.b, c=norms.c, d=norms.d,
                                sigma2=norms.sigma2_cap, pi_theta=norms.pi_theta,
                                n=n, alpha=norms.alpha, eta=eta,
                                pi_theta_inv=norms.d)
        value = curve.evaluate(t)
        row["bound"] = value
        table.append(row)
        if value < best_value:
            best, best_value = float(x_star), value
    if best is None:
        raise AllInfeasible("no grid point produced a positive drift rate")
    return best, table


# ---------------------------------------------------------------------------
# Hilbert-space-valued sums


@dataclass(frozen=True)
class ExpectationAndTailReport:
    expectation_bound: float
    sigma2_cap: float
    tail_curve: TailBoundCurve | None

    def lln_tail(self, t: float, n: int) -> float:
        """Bound on P(||mean of G(X_i)|| >= (1+7 eps) E-bound / n + t)."""
        if self.tail_curve is None:
            raise ValueError("tail curve needs d, e, pi_f, eps inputs")
        return self.tail_curve.evaluate(n * t)


def hilbert_example_bound(a, b, c, pi_theta, alpha, n, *, d=None, e_norm=None,
                          pi_f=None, eps=0.25, sigma2=None) -> ExpectationAndTailReport:
    """Norm bound for Hilbert-space-valued sums over the chain.

    E || sum_{i<n} G(X_i) || <= 2 Gamma(1+1/alpha) a
    + 2^(1/alpha) e Gamma(1+1/alpha) log^(1/alpha)(e/pi*(theta)) b
    + 4 alpha^(-1/2) Gamma(2/alpha)^(1/2) c sqrt(n).

    When d, e_norm and pi_f are supplied, the matching tail display (the
    empirical-process bound over the unit ball, evaluated at n*t) is attached.
    """
    g1 = float(gamma_fn(1.0 + 1.0 / alpha))
    expectation = (2.0 * g1 * a
                   + 2.0 ** (1.0 / alpha) * math.e * g1
                   * math.log(math.e / pi_theta) ** (1.0 / alpha) * b
                   + 4.0 * alpha ** -0.5 * float(gamma_fn(2.0 / alpha)) ** 0.5
                   * c * math.sqrt(n))
    sigma2_cap = pi_theta * (2.0 * alpha ** -0.5
                             * float(gamma_fn(2.0 / alpha)) ** 0.5 * c) ** 2
    curve = None
    if d is not None and e_norm is not None and pi_f is not None:
        curve = empirical_process_curve(
            a=a, b=b, c=c, d=d, e_norm=e_norm,
            sigma2=sigma2 if sigma2 is not None else sigma2_cap,
            pi_theta=pi_theta, pi_f=pi_f, n=n, alpha=alpha, eps=eps)
    return ExpectationAndTailReport(expectation_bound=expectation,
                                    sigma2_cap=sigma2_cap, tail_curve=curve)
