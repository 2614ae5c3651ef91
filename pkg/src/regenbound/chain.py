"""Chain models, small sets, drift certificates, and numerical verification.

Two state spaces are supported: the nonnegative integer lattice (exact row
summation) and the real line (adaptive quadrature).  Built-in kernels are
Metropolis-Hastings random walks; arbitrary discrete kernels can be supplied
as a finite transition matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import quad


class QuadratureFailure(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class StateSpace(Enum):
    INTEGER_LATTICE = "integer_lattice"
    REAL_LINE = "real_line"


class DriftKind(Enum):
    GEOMETRIC_PV = "geometric_pv"   # (PV)(x) - V(x) <= -lambda*V(x) + b*1_C(x)
    REGULAR_EXP_H = "regular_exp_h"  # (P^m V)(x) - V(x) <= -exp(h(x)) + b*1_C(x)


QUAD_ABS_TOL = 1e-10
# integrand values below this fraction of the peak are treated as zero tail
SUPPORT_FLOOR = 1e-16


def integrate(fn, lo: float, hi: float, abs_tol: float = QUAD_ABS_TOL,
              breakpoints=()) -> float:
    """Adaptive Gauss-Kronrod integration with exponential-tail truncation.

    Infinite endpoints are truncated where a coarse scan of the integrand
    falls below ``SUPPORT_FLOOR`` times its peak; quadrature then runs on the
    finite window, split at any supplied breakpoints (integrand kinks).
    Raises :class:`QuadratureFailure` when the summed error estimate exceeds
    ``100 * abs_tol``.
    """
    lo_f, hi_f = _effective_window(fn, lo, hi)
    if lo_f >= hi_f:
        return 0.0
    cuts = sorted({lo_f, hi_f, *(b for b in breakpoints if lo_f < b < hi_f)})
    total = 0.0
    total_err = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, err = quad(fn, a, b, epsabs=abs_tol, epsrel=abs_tol, limit=400)
        total += val
        total_err += err
    if total_err > 100 * abs_tol:
        raise QuadratureFailure(
            f"integral on [{lo_f:g}, {hi_f:g}] converged only to {total_err:.3e}")
    return total


def _effective_window(fn, lo, hi):
    """Truncate infinite integration limits at the integrand's effective support."""
    finite_lo = np.isfinite(lo)
    finite_hi = np.isfinite(hi)
    if finite_lo and finite_hi:
        return lo, hi
    anchor = 0.0
    if finite_lo:
        anchor = lo
    elif finite_hi:
        anchor = hi
    span = 1.0
    grid = None
    peak = 0.0
    for _ in range(12):
        span *= 2.0
        g_lo = lo if finite_lo else anchor - span
        g_hi = hi if finite_hi else anchor + span
        grid = np.linspace(g_lo, g_hi, 257)
        vals = np.abs([fn(x) for x in grid])
        peak = max(np.max(vals), 1e-300)
        edge_ok_lo = finite_lo or vals[0] <= SUPPORT_FLOOR * peak
        edge_ok_hi = finite_hi or vals[-1] <= SUPPORT_FLOOR * peak
        if edge_ok_lo and edge_ok_hi:
            break
    else:
        raise QuadratureFailure("could not locate integrand support")
    live = np.flatnonzero(vals > SUPPORT_FLOOR * peak)
    if live.size == 0:
        return 0.0, 0.0
    g_lo = grid[max(live[0] - 1, 0)]
    g_hi = grid[min(live[-1] + 1, len(grid) - 1)]
    return g_lo, g_hi


# ---------------------------------------------------------------------------
# restart measures (the nu of the minorization)


class KernelStepNu:
    """Restart measure equal to one kernel step from a fixed atom state.

    For an atom ``C = {a}`` with ``delta = 1`` the minorization forces
    ``nu = P(a, .)``; sampling nu is then exactly one plain kernel step, so a
    split simulation consumes the same random draws as a direct one.
    """

    def __init__(self, model, atom):
        self.model = model
        self.atom = atom

    def sample(self, rng):
        return self.model.step(self.atom, rng)

    def sample_batch(self, size, rng):
        states = np.full(size, self.atom, dtype=np.int64)
        return self.model.step_batch(states, rng)

    def pmf(self, y) -> float:
        states, probs = self.model.transition_row(self.atom)
        hit = np.flatnonzero(states == y)
        return float(probs[hit[0]]) if hit.size else 0.0

    def prob(self, test_set) -> float:
        states, probs = self.model.transition_row(self.atom)
        members = set(int(s) for s in test_set)
        return float(sum(p for s, p in zip(states, probs) if int(s) in members))


class TruncatedTargetNu:
    """Target distribution conditioned on an interval: density pi(y)1_C(y)/pi(C)."""

    def __init__(self, target, lo: float, hi: float):
        self.target = target
        self.lo = float(lo)
        self.hi = float(hi)
        self._mass = integrate(target.density, self.lo, self.hi)

    def sample(self, rng):
        return float(self.sample_batch(1, rng)[0])

    def sample_batch(self, size, rng):
        out = np.empty(size, dtype=float)
        todo = np.arange(size)
        while todo.size:
            draw = self.target.sample_batch(todo.size, rng)
            ok = (draw >= self.lo) & (draw <= self.hi)
            out[todo[ok]] = draw[ok]
            todo = todo[~ok]
        return out

    def density(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= self.lo) & (y <= self.hi)
        return np.where(inside, self.target.density(y) / self._mass, 0.0)

    def prob(self, interval) -> float:
        lo = max(self.lo, interval[0])
        hi = min(self.hi, interval[1])
        if lo >= hi:
            return 0.0
        return integrate(self.target.density, lo, hi) / self._mass


class DiscreteNu:
    """Explicit discrete restart measure supported on a finite set of states."""

    def __init__(self, states, probs):
        self.states = np.asarray(states, dtype=np.int64)
        self.probs = np.asarray(probs, dtype=float)
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"nu weights sum to {total!r}, expected 1")
        self._cdf = np.cumsum(self.probs)

    def sample(self, rng):
        return int(self.states[np.searchsorted(self._cdf, rng.random())])

    def sample_batch(self, size, rng):
        return self.states[np.searchsorted(self._cdf, rng.random(size))]

    def pmf(self, y) -> float:
        hit = np.flatnonzero(self.states == y)
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def prob(self, test_set) -> float:
        members = set(int(s) for s in test_set)
        return float(sum(p for s, p in zip(self.states, self.probs) if int(s) in members))


# ---------------------------------------------------------------------------


@dataclass
class SmallSet:
    """Minorization data: P^m(x, .) >= delta * nu(.) for all x in C.

    ``members`` gives C on the lattice, ``interval`` on the real line;
    exactly one of the two must be set.
    """

    delta: float
    nu: object
    m: int = 1
    members: frozenset | None = None
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if (self.members is None) == (self.interval is None):
            raise ValueError("exactly one of members/interval must be given")
        if self.m < 1:
            raise ValueError("m must be a positive integer")

    def contains(self, x) -> bool:
        if self.members is not None:
            return int(x) in self.members
        lo, hi = self.interval
        return lo <= x <= hi

    def contains_batch(self, xs) -> np.ndarray:
        if self.members is not None:
            table = np.asarray(sorted(self.members), dtype=np.int64)
            idx = np.searchsorted(table, xs)
            idx = np.clip(idx, 0, table.size - 1)
            return table[idx] == xs
        lo, hi = self.interval
        return (xs >= lo) & (xs <= hi)


@dataclass(frozen=True)
class DriftCertificate:
    """Lyapunov drift data (V, lambda, b, K), or (V, b, K, beta) for the
    regular variant where -exp(h(x)) replaces -lambda*V(x)."""

    V: Callable
    lam: float
    b: float
    K: float
    kind: DriftKind = DriftKind.GEOMETRIC_PV
    beta: float = 1.0

    def __post_init__(self):
        if self.kind is DriftKind.GEOMETRIC_PV and not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.b < 0.0:
            raise ValueError("b must be nonnegative")
        if self.K < 1.0:
            raise ValueError("K = sup_C V must be >= 1 since V >= 1")
        if self.kind is DriftKind.REGULAR_EXP_H and not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")


# ---------------------------------------------------------------------------
# models


class LatticeMHModel:
    """Metropolis-Hastings walk on {0, 1, 2, ...}.

    Proposal: q(0,0) = q(0,1) = 1/2 and q(i, i+/-1) = 1/2 for i > 0.
    Acceptance uses only the target ratio pi(y)/pi(x); ``target_ratio`` must
    accept numpy arrays.
    """

    state_space = StateSpace.INTEGER_LATTICE

    def __init__(self, target_ratio, m: int = 1, small_set: SmallSet | None = None):
        self.target_ratio = target_ratio
        self.m = m
        self.small_set = small_set
        self.pi_c: float | None = None  # stationary mass of C, when known

    def step(self, state, rng):
        return int(self.step_batch(np.array([state], dtype=np.int64), rng)[0])

    def step_batch(self, states, rng):
        states = np.asarray(states, dtype=np.int64)
        up = rng.random(states.shape) < 0.5
        prop = np.where(up, states + 1, np.maximum(states - 1, 0))
        ratio = np.minimum(self.target_ratio(states, prop), 1.0)
        accept = rng.random(states.shape) < ratio
        return np.where(accept, prop, states)

    def transition_row(self, i: int):
        """Exact one-step transition row; stay mass is the complement so the
        row sums to 1 by construction."""
        i = int(i)
        if i == 0:
            a_up = min(float(self.target_ratio(np.int64(0), np.int64(1))), 1.0)
            return (np.array([0, 1], dtype=np.int64),
                    np.array([1.0 - 0.5 * a_up, 0.5 * a_up]))
        a_up = min(float(self.target_ratio(np.int64(i), np.int64(i + 1))), 1.0)
        a_dn = min(float(self.target_ratio(np.int64(i), np.int64(i - 1))), 1.0)
        p_up = 0.5 * a_up
        p_dn = 0.5 * a_dn
        return (np.array([i - 1, i, i + 1], dtype=np.int64),
                np.array([p_dn, 1.0 - (p_up + p_dn), p_up]))

    def m_step_row(self, i: int, m: int | None = None):
        """Exact m-step row by repeated convolution of one-step rows."""
        m = self.m if m is None else m
        states = np.array([int(i)], dtype=np.int64)
        probs = np.array([1.0])
        for _ in range(m):
            acc: dict[int, list[float]] = {}
            for s, p in zip(states, probs):
                row_s, row_p = self.transition_row(int(s))
                for t, q in zip(row_s, row_p):
                    acc.setdefault(int(t), []).append(p * q)
            states = np.array(sorted(acc), dtype=np.int64)
            probs = np.array([math.fsum(acc[int(s)]) for s in states])
        return states, probs

    def pv(self, x, V) -> float:
        states, probs = self.m_step_row(x)
        return math.fsum(p * float(V(s)) for s, p in zip(states, probs))

    def transition_prob(self, x, test_set, m: int | None = None) -> float:
        states, probs = self.m_step_row(x, m)
        members = set(int(s) for s in test_set)
        return float(math.fsum(p for s, p in zip(states, probs) if int(s) in members))


class LatticeMatrixModel:
    """Chain on {0, ..., k-1} given by an explicit row-stochastic matrix."""

    state_space = StateSpace.INTEGER_LATTICE

    def __init__(self, matrix, m: int = 1, small_set: SmallSet | None = None):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("transition matrix must be square")
        row_sums = matrix.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-12) or np.any(matrix < 0):
            raise ValueError("rows must be nonnegative and sum to 1")
        self.matrix = matrix
        self._cdf = np.cumsum(matrix, axis=1)
        self.m = m
        self.small_set = small_set
        self.pi_c: float | None = None

    def step(self, state, rng):
        return int(np.searchsorted(self._cdf[int(state)], rng.random()))

    def step_batch(self, states, rng):
        states = np.asarray(states, dtype=np.int64)
        u = rng.random(states.shape)
        rows = self._cdf[states]
        return np.int64((u[:, None] > rows).sum(axis=1))

    def transition_row(self, i: int):
        row = self.matrix[int(i)]
        states = np.flatnonzero(row)
        return states.astype(np.int64), row[states]

    def m_step_row(self, i: int, m: int | None = None):
        m = self.m if m is None else m
        row = np.linalg.matrix_power(self.matrix, m)[int(i)]
        states = np.flatnonzero(row)
        return states.astype(np.int64), row[states]

    def pv(self, x, V) -> float:
        states, probs = self.m_step_row(x)
        return math.fsum(p * float(V(s)) for s, p in zip(states, probs))

    def transition_prob(self, x, test_set, m: int | None = None) -> float:
        states, probs = self.m_step_row(x, m)
        members = set(int(s) for s in test_set)
        return float(math.fsum(p for s, p in zip(states, probs) if int(s) in members))


class RealLineMHModel:
    """Symmetric random-walk Metropolis-Hastings sampler on the real line.

    ``proposal`` supplies a symmetric increment density and sampler;
    ``log_target`` is the (unnormalized) log density of pi.  The one-step law
    from x has absolutely continuous part q(y-x) * min(pi(y)/pi(x), 1) plus a
    rejection atom at x.
    """

    state_space = StateSpace.REAL_LINE

    def __init__(self, proposal, log_target, m: int = 1,
                 small_set: SmallSet | None = None):
        if m != 1:
            raise NotImplementedError("real-line models support m=1 only")
        self.proposal = proposal
        self.log_target = log_target
        self.m = m
        self.small_set = small_set
        self.pi_c: float | None = None

    def step(self, state, rng):
        return float(self.step_batch(np.array([state], dtype=float), rng)[0])

    def step_batch(self, states, rng):
        states = np.asarray(states, dtype=float)
        prop = states + self.proposal.sample_batch(states.shape[0], rng)
        log_ratio = self.log_target(prop) - self.log_target(states)
        accept = np.log(rng.random(states.shape)) < np.minimum(log_ratio, 0.0)
        return np.where(accept, prop, states)

    def transition_density(self, x, y):
        """Density of the absolutely continuous part of P(x, .) at y != x."""
        y = np.asarray(y, dtype=float)
        log_ratio = self.log_target(y) - self.log_target(np.asarray(x, dtype=float))
        return self.proposal.density(y - x) * np.exp(np.minimum(log_ratio, 0.0))

    def _kinks(self, x):
        # density kink at y = x, symmetric-target acceptance kink at y = -x,
        # and a possible kink of V or pi at the origin
        return (float(x), -float(x), 0.0)

    def move_mass(self, x) -> float:
        """Total mass of the absolutely continuous part (acceptance probability)."""
        return integrate(lambda y: float(self.transition_density(x, y)),
                         -np.inf, np.inf, breakpoints=self._kinks(x))

    def rejection_mass(self, x) -> float:
        return max(1.0 - self.move_mass(x), 0.0)

    def transition_prob(self, x, interval, m: int | None = None) -> float:
        lo, hi = interval
        mass = integrate(lambda y: float(self.transition_density(x, y)), lo, hi,
                         breakpoints=self._kinks(x))
        if lo <= x <= hi:
            mass += self.rejection_mass(x)
        return mass

    def pv(self, x, V) -> float:
        moved = integrate(lambda y: float(self.transition_density(x, y) * V(y)),
                          -np.inf, np.inf, breakpoints=self._kinks(x))
        return moved + self.rejection_mass(x) * float(V(x))


def step(model, state, rng):
    """One transition of the model's kernel from ``state``."""
    return model.step(state, rng)


# ---------------------------------------------------------------------------
# verification


@dataclass
class DriftReport:
    status: str
    max_violation: float
    max_violation_rel: float
    arg_max: object
    tolerance: float
    n_points: int

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


@dataclass
class MinorizationReport:
    status: str
    min_slack: float
    worst_state: object
    worst_set: object
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


# PASS thresholds: exact summation vs quadrature noise
DRIFT_TOL_EXACT = 1e-10
DRIFT_TOL_QUAD = 1e-6
MINORIZATION_TOL = -1e-8


def verify_drift(model, cert: DriftCertificate, grid) -> DriftReport:
    """Check (PV)(x) - V(x) + lambda*V(x) - b*1_C(x) <= 0 over a state grid.

    Violations are reported both absolutely and relative to V(x); PASS uses
    the V-relative violation (drift functions grow exponentially, so a fixed
    absolute tolerance would be unattainable in floating point) with the
    tolerance appropriate to the state space: exact summation on the lattice,
    quadrature on the real line.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("verification grid is empty")
    if cert.kind is not DriftKind.GEOMETRIC_PV:
        raise ValueError("verify_drift applies to the geometric drift form")
    small = model.small_set
    worst = -math.inf
    worst_rel = -math.inf
    arg = None
    for x in grid:
        v = float(cert.V(x))
        pv = model.pv(x, cert.V)
        margin = pv - v + cert.lam * v
        if small is not None and small.contains(x):
            margin -= cert.b
        if margin > worst:
            worst, arg = margin, x
        worst_rel = max(worst_rel, margin / v)
    tol = (DRIFT_TOL_EXACT if model.state_space is StateSpace.INTEGER_LATTICE
           else DRIFT_TOL_QUAD)
    status = "PASS" if worst_rel <= tol else "FAIL"
    return DriftReport(status=status, max_violation=worst,
                       max_violation_rel=worst_rel, arg_max=arg,
                       tolerance=tol, n_points=len(grid))


def verify_minorization(model, grid, sets) -> MinorizationReport:
    """Check min over x in C-and-grid, B in sets of P^m(x,B) - delta*nu(B)."""
    small = model.small_set
    if small is None:
        raise ValueError("model carries no small set")
    xs = [x for x in grid if small.contains(x)]
    if not xs:
        raise ValueError("grid contains no states of the small set")
    worst = math.inf
    worst_x = worst_b = None
    for test_set in sets:
        nu_mass = small.nu.prob(test_set)
        for x in xs:
            slack = model.transition_prob(x, test_set, small.m) - small.delta * nu_mass
            if slack < worst:
                worst, worst_x, worst_b = slack, x, test_set
    status = "PASS" if worst >= MINORIZATION_TOL else "FAIL"
    return MinorizationReport(status=status, min_slack=worst, worst_state=worst_x,
                              worst_set=worst_b, tolerance=MINORIZATION_TOL)
