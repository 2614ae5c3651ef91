"""The explicit constant pipeline.

Everything here is a pure function mapping drift/minorization data to the
numerical constants that feed the tail-bound evaluators: the splitting root
r, the exponential block norms of the original chain (cal_a .. cal_d) and of
the split chain (a, b, c), the regeneration-time norms d and e, and the cap
on the block second moment that bounds the asymptotic variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from .chain import DriftCertificate, DriftKind

LOG2 = math.log(2.0)


class BracketFailure(RuntimeError):
    """Root bracketing for the splitting equation failed (should not happen)."""


class GammaUndefined(ValueError):
    """The interpolation exponent alpha*beta/(beta-alpha) needs beta > alpha."""


class Provenance(str, Enum):
    DRIFT_DERIVED = "drift_derived"
    EMPIRICAL = "empirical"
    USER_SUPPLIED = "user_supplied"


R_RESIDUAL_TOL = 1e-12


def r_upper_bound(delta: float) -> float:
    return math.log(6.0 / (2.0 - delta)) / math.log(2.0 / (2.0 - delta))


def solve_r(delta: float) -> float:
    """Root r >= 1 of 2^(1/r) delta^(1-1/r) + 2^(1+1/r) (1-delta)^(1-1/r) = 2.

    For delta = 1 the residual term vanishes and r = 1 exactly.  Otherwise
    the left-hand side decreases in r from a value above 2 at r = 1 to
    2 - delta at infinity, and the root is below
    log(6/(2-delta)) / log(2/(2-delta)).
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if delta == 1.0:
        return 1.0

    def residual(r):
        return (2.0 ** (1.0 / r) * delta ** (1.0 - 1.0 / r)
                + 2.0 ** (1.0 + 1.0 / r) * (1.0 - delta) ** (1.0 - 1.0 / r)
                - 2.0)

    hi = r_upper_bound(delta)
    if residual(1.0) < -R_RESIDUAL_TOL or residual(hi) > R_RESIDUAL_TOL:
        raise BracketFailure(f"splitting equation not bracketed on [1, {hi:g}]")
    root = brentq(residual, 1.0, hi, xtol=1e-15, rtol=8.9e-16)
    if abs(residual(root)) > R_RESIDUAL_TOL:
        raise BracketFailure(f"residual {residual(root):.3e} above tolerance")
    return float(root)


def combine_orlicz(alpha, cal_a, cal_b, cal_c, cal_d, r):
    """Split-chain norms from the original-chain norms.

    a = r^(1/alpha) ((max(cal_a, cal_c))^alpha + cal_d^alpha)^(1/alpha), the
    analogue with cal_b for b, and c = r^(1/alpha) (cal_c^alpha +
    cal_d^alpha)^(1/alpha).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if r < 1.0:
        raise ValueError("r must be >= 1")
    if min(cal_a, cal_b, cal_c, cal_d) < 0.0:
        raise ValueError("norms must be nonnegative")
    scale = r ** (1.0 / alpha)
    a = scale * (max(cal_a, cal_c) ** alpha + cal_d ** alpha) ** (1.0 / alpha)
    b = scale * (max(cal_b, cal_c) ** alpha + cal_d ** alpha) ** (1.0 / alpha)
    c = scale * (cal_c ** alpha + cal_d ** alpha) ** (1.0 / alpha)
    return a, b, c


@dataclass(frozen=True)
class TauNorms:
    """psi_beta norms of the return time to C: from a fixed start, from the
    stationary start, and supremum over starts inside C."""

    from_x: float
    from_pi: float
    sup_c: float
    beta: float = 1.0


def tau_psi1_norms(cert: DriftCertificate, V_x: float, pi_v: float,
                   pi_c: float, x_in_c: bool) -> TauNorms:
    """psi_1 norms of the C-return time under the geometric drift condition."""
    _require_geometric(cert)
    lam, b, K = cert.lam, cert.b, cert.K
    scale = 1.0 / math.log(1.0 / (1.0 - lam))
    inside = b / (1.0 - lam) + K
    start = inside if x_in_c else V_x
    from_x = max(math.log(start) / LOG2, 1.0) * scale
    from_pi = max(math.log(pi_v + inside * pi_c) / LOG2, 1.0) * scale
    sup_c = max(math.log(inside) / LOG2, 1.0) * scale
    return TauNorms(from_x=from_x, from_pi=from_pi, sup_c=sup_c, beta=1.0)


def regular_drift_norms(cert: DriftCertificate, tau_norms: TauNorms, c: float,
                        V_x: float, pi_v: float, alpha: float):
    """Block norms under the regular drift with exp(h) decrease.

    With gamma = alpha*beta/(beta - alpha):
    cal_c = cal_d = c1 * c * max(log(b+K)/log 2, 1)^(1/gamma) where c1 is the
    sup-over-C tau norm; cal_a and cal_b use log(V(x)+b) and log(pi_V + b)
    with the start-specific tau norms.
    """
    beta = tau_norms.beta
    if beta <= alpha:
        raise GammaUndefined(f"beta={beta} must exceed alpha={alpha}")
    if c <= 0.0:
        raise ValueError("c must be positive")
    gamma = alpha * beta / (beta - alpha)
    b = cert.b

    def factor(arg):
        return c * max(math.log(arg) / LOG2, 1.0) ** (1.0 / gamma)

    cal_c = tau_norms.sup_c * factor(b + cert.K)
    cal_d = cal_c
    cal_a = tau_norms.from_x * factor(V_x + b)
    cal_b = tau_norms.from_pi * factor(pi_v + b)
    return cal_a, cal_b, cal_c, cal_d


@dataclass(frozen=True)
class GeometricNormBundle:
    cal_a_drift: float
    cal_b_drift: float
    cal_c_drift: float
    pi_g_bound: float
    pi_v_bound: float


def geometric_drift_norms(cert: DriftCertificate, kappa: float, s: float,
                          V_x: float, pi_c: float, x_in_c: bool) -> GeometricNormBundle:
    """Drift-only bounds on the block norms for |g| <= kappa (log V)^s.

    Works with alpha = 1/(s+1); the pi|g| bound and pi_V <= b pi(C)/lambda
    are computed first and then substituted into the three norm bounds.
    """
    _require_geometric(cert)
    if kappa < 0.0:
        raise ValueError("kappa must be nonnegative")
    if s <= 0.0:
        raise ValueError("s must be positive")
    lam, b, K = cert.lam, cert.b, cert.K
    alpha = 1.0 / (s + 1.0)
    pi_v = b * pi_c / lam
    if pi_v < 1.0:
        raise ValueError(
            f"b*pi(C)/lambda = {pi_v:g} < 1 contradicts V >= 1; "
            "certificate and pi(C) are inconsistent")

    log_arg = math.log(b * pi_c / lam)
    if s <= 1.0:  # alpha >= 1/2
        pi_g = kappa * log_arg ** s
    else:
        shift = s - 1.0
        pi_g = kappa * ((log_arg + shift) ** s - shift ** s)

    if kappa == 0.0:
        return GeometricNormBundle(0.0, 0.0, 0.0, 0.0, pi_v)

    scale = kappa / math.log(1.0 / (1.0 - lam))
    inside = b / (1.0 - lam) + K
    ratio_term = (pi_g / kappa) ** alpha / LOG2 ** (1.0 - alpha)

    def bracket(arg):
        return (max(math.log(arg) / LOG2, 1.0) ** (1.0 - alpha)
                + ratio_term) ** (1.0 / alpha)

    start = inside if x_in_c else V_x
    cal_a = scale * max(math.log(start) / LOG2, 1.0) * bracket((V_x + b) / lam)
    cal_b = (scale * max(math.log(pi_v + inside * pi_c) / LOG2, 1.0)
             * bracket((pi_v + b) / lam))
    cal_c = scale * max(math.log(inside) / LOG2, 1.0) * bracket((b + K) / lam)
    return GeometricNormBundle(cal_a_drift=cal_a, cal_b_drift=cal_b,
                               cal_c_drift=cal_c, pi_g_bound=pi_g,
                               pi_v_bound=pi_v)


def bound_d(cert: DriftCertificate, delta: float) -> float:
    """psi_1 bound on the regeneration gap sigma(1) - sigma(0), m=1 chains."""
    _require_geometric(cert)
    r = solve_r(delta)
    inside = cert.b / (1.0 - cert.lam) + cert.K
    return (2.0 * r * max(math.log(inside) / LOG2, 1.0)
            / math.log(1.0 / (1.0 - cert.lam)))


def bound_e(cert: DriftCertificate, delta: float, V_x: float,
            x_in_c: bool) -> float:
    """psi_1 bound on the first regeneration time from a fixed start, m=1."""
    _require_geometric(cert)
    r = solve_r(delta)
    inside = cert.b / (1.0 - cert.lam) + cert.K
    start = inside if x_in_c else V_x
    head = max(math.log(start) / LOG2, math.log(inside) / LOG2, 1.0)
    return r * (head + 1.0) / math.log(1.0 / (1.0 - cert.lam))


def sigma_upper(c: float, alpha: float) -> float:
    """L2 bound on a block sum from its psi_alpha norm:
    ||s_0||_2 <= 2 alpha^(-1/2) Gamma(2/alpha)^(1/2) c."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if c < 0.0:
        raise ValueError("c must be nonnegative")
    return 2.0 * alpha ** -0.5 * float(gamma_fn(2.0 / alpha)) ** 0.5 * c


@dataclass(frozen=True)
class MultiplicativeDriftBound:
    psi1_bound: float    # on sup_C || sum |Z_k(f)|^alpha ||_psi1
    moment_bound: float  # on E_x exp(sum_{k<tau_C} g(X_k^m))


def multiplicative_drift_bound(b: float, K: float, c: float, V_x: float,
                               x_in_c: bool) -> MultiplicativeDriftBound:
    """Consequences of the multiplicative drift exp(-V) P^m(exp V) <= exp(-g + b 1_C)."""
    psi1 = max(1.0, (b + K) / LOG2) * c
    moment = math.exp((b if x_in_c else 0.0) + V_x)
    return MultiplicativeDriftBound(psi1_bound=psi1, moment_bound=moment)


@dataclass
class MultiplicativeDriftCheck:
    status: str
    max_violation: float
    arg_max: object

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


def multiplicative_drift_check(model, V, g, b: float, in_c, grid,
                               tol: float = 1e-10) -> MultiplicativeDriftCheck:
    """Grid diagnostic of the multiplicative drift condition.

    Checks log (P^m exp(V))(x) - V(x) + g(x) - b*1_C(x) <= 0 pointwise; this
    is a diagnostic only, the bound functions trust the caller's assertion.
    """
    worst = -math.inf
    arg = None
    for x in grid:
        pev = model.pv(x, lambda y: math.exp(float(V(y))))
        margin = math.log(pev) - float(V(x)) + float(g(x))
        if in_c(x):
            margin -= b
        if margin > worst:
            worst, arg = margin, x
    status = "PASS" if worst <= tol else "FAIL"
    return MultiplicativeDriftCheck(status=status, max_violation=worst, arg_max=arg)


def excursion_mgf_estimate(model, g, x, replicas: int, rng,
                           max_steps: int = 100_000) -> float:
    """Monte Carlo estimate of E_x exp(sum_{k=0}^{sigma_C} g(X_k^m)).

    This is the quantity whose logarithm would serve as a drift function in
    the converse construction; it is exposed as a sampled diagnostic, not a
    certified constant.
    """
    small = model.small_set
    total = 0.0
    for _ in range(replicas):
        state = x
        acc = float(g(state))
        steps = 0
        while not small.contains(state):
            state = _skeleton_step(model, state, rng)
            acc += float(g(state))
            steps += 1
            if steps > max_steps:
                raise RuntimeError("excursion did not return to C")
        total += math.exp(acc)
    return total / replicas


def _skeleton_step(model, state, rng):
    for _ in range(model.small_set.m):
        state = model.step(state, rng)
    return state


def _require_geometric(cert: DriftCertificate) -> None:
    if cert.kind is not DriftKind.GEOMETRIC_PV:
        raise ValueError("this bound needs a geometric drift certificate")


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockNormSet:
    """Full constant bundle consumed by the tail-bound evaluators."""

    alpha: float
    r: float
    cal_a: float
    cal_b: float
    cal_c: float
    cal_d: float
    a: float
    b: float
    c: float
    d: float
    e: float
    pi_theta: float
    source: Provenance

    @property
    def sigma2_cap(self) -> float:
        """pi*(theta) times the squared L2 cap on the block sums."""
        return self.pi_theta * sigma_upper(self.c, self.alpha) ** 2

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "r": self.r,
            "calA": self.cal_a,
            "calB": self.cal_b,
            "calC": self.cal_c,
            "calD": self.cal_d,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "e": self.e,
            "pi_theta": self.pi_theta,
            "sigma_cap": math.sqrt(self.sigma2_cap),
            "provenance": self.source.value,
        }


def drift_norm_set(cert: DriftCertificate, delta: float, kappa: float, s: float,
                   V_x: float, pi_c: float, x_in_c: bool) -> BlockNormSet:
    """Assemble the full drift-derived bundle for an m=1 geometric chain."""
    bundle = geometric_drift_norms(cert, kappa, s, V_x, pi_c, x_in_c)
    alpha = 1.0 / (s + 1.0)
    r = solve_r(delta)
    a, b, c = combine_orlicz(alpha, bundle.cal_a_drift, bundle.cal_b_drift,
                             bundle.cal_c_drift, bundle.cal_c_drift, r)
    return BlockNormSet(alpha=alpha, r=r,
                        cal_a=bundle.cal_a_drift, cal_b=bundle.cal_b_drift,
                        cal_c=bundle.cal_c_drift, cal_d=bundle.cal_c_drift,
                        a=a, b=b, c=c,
                        d=bound_d(cert, delta),
                        e=bound_e(cert, delta, V_x, x_in_c),
                        pi_theta=delta * pi_c,
                        source=Provenance.DRIFT_DERIVED)
