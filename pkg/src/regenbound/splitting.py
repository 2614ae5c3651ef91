"""Split-chain simulation, regeneration ledgers, and the path decomposition.

The split construction augments the m-skeleton with level bits: on entering
the small set C at skeleton time k, the level is 1 with probability delta and
the next skeleton state is then drawn from nu; otherwise the next state comes
from the residual kernel (P^m(x, .) - delta*nu(.)) / (1 - delta).  Skeleton
times with level 1 are the regeneration times sigma(i); sums of the target
function over the excursions between them are the block sums s_i.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import StateSpace


class NoRegeneration(RuntimeError):
    """No qualifying regeneration observed; lengthen the simulation."""


class ResidualKernelNegative(RuntimeError):
    """Residual density went negative: the minorization data are inconsistent."""


class InsufficientBlocks(ValueError):
    """Too few regeneration blocks for the requested statistic."""


RESIDUAL_SLACK = 1e-12


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic, independent stream for (seed, key...) via spawn keys."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class SplitTrajectory:
    """States X_0..X_{mK} plus level bits Y_0..Y_{K-1} of the split skeleton."""

    states: np.ndarray
    levels: np.ndarray
    m: int
    initial: object
    n: int  # nominal horizon the trajectory was simulated for

    def __post_init__(self):
        if len(self.states) != self.m * len(self.levels) + 1:
            raise ValueError("states must hold m * len(levels) + 1 entries")

    @property
    def sigma(self) -> np.ndarray:
        """Regeneration skeleton times (level-1 times)."""
        return np.flatnonzero(self.levels)


@dataclass
class RegenerationLedger:
    """Decomposition record of one split trajectory for a fixed function.

    ``blocks[i]`` is s_i summed over skeleton indices sigma(i)+1 .. sigma(i+1);
    ``Z[j]`` sums the function over the j-th skeleton block of length m.  The
    stopping index N is the first i with m*sigma(i) + m - 1 >= n - 1, and the
    start/middle/tail pieces satisfy |sum_{k<n} f(X_k)| <= U + |Vsum| + W.
    """

    sigma: np.ndarray
    tau_c: np.ndarray
    blocks: np.ndarray
    Z: np.ndarray
    N: int
    U: float
    Vsum: float
    W: float
    n: int
    m: int
    total: float  # sum_{k<n} f(X_k), kept for decomposition checks

    def check_stopping_identity(self) -> bool:
        ok = self.m * self.sigma[self.N] + self.m - 1 >= self.n - 1
        if self.N > 0:
            ok = ok and self.m * self.sigma[self.N - 1] + self.m - 1 < self.n - 1
        return bool(ok)

    def check_decomposition(self, tol: float = 0.0) -> bool:
        return abs(self.total) <= self.U + abs(self.Vsum) + self.W + tol

    def gaps(self) -> np.ndarray:
        return np.diff(self.sigma)


# ---------------------------------------------------------------------------
# split stepping


def _nu_is_plain_step(small, x) -> bool:
    nu = small.nu
    return getattr(nu, "atom", None) == x and hasattr(nu, "model")


def _residual_step_lattice(model, x, rng):
    small = model.small_set
    states, probs = model.m_step_row(x, small.m)
    nu_mass = np.array([small.nu.pmf(int(s)) for s in states])
    leftover = 1.0 - math.fsum(nu_mass)
    if leftover > RESIDUAL_SLACK:
        raise ResidualKernelNegative(
            "nu puts mass outside the m-step support of the kernel")
    resid = probs - small.delta * nu_mass
    if np.min(resid) < -RESIDUAL_SLACK:
        raise ResidualKernelNegative(
            f"residual mass {np.min(resid):.3e} at state "
            f"{int(states[int(np.argmin(resid))])}")
    resid = np.clip(resid, 0.0, None)
    resid /= resid.sum()
    return int(states[np.searchsorted(np.cumsum(resid), rng.random())])


def _residual_step_real(model, x, rng):
    # rejection against P(x, .): accept y with prob 1 - delta*nu(y)/p(x, y);
    # the rejection atom at x carries no nu mass and is always accepted
    small = model.small_set
    delta = small.delta
    while True:
        y = model.step(x, rng)
        if y == x:
            return y
        dens = float(model.transition_density(x, y))
        accept = 1.0 - delta * float(small.nu.density(y)) / dens
        if accept < -RESIDUAL_SLACK:
            raise ResidualKernelNegative(
                f"residual density {accept:.3e} at y={y:.6g} from x={x:.6g}")
        if rng.random() < min(max(accept, 0.0), 1.0):
            return y


def _bridge_path(model, x, y, m, rng):
    """Intermediate states of an m-step segment from x conditioned to end at y."""
    path = []
    cur = int(x)
    for j in range(1, m):
        states, probs = model.transition_row(cur)
        back = np.array([model.transition_prob(int(s), [int(y)], m - j)
                         for s in states])
        w = probs * back
        total = w.sum()
        if total <= 0.0:
            raise ResidualKernelNegative(
                f"endpoint {y} unreachable from {x} in {m} steps")
        w /= total
        cur = int(states[np.searchsorted(np.cumsum(w), rng.random())])
        path.append(cur)
    return path


def _split_segment(model, x, rng):
    """One skeleton transition of the split chain from x.

    Returns (level_bit, intermediate_states, endpoint).
    """
    small = model.small_set
    m = small.m
    if not small.contains(x):
        if m == 1:
            return False, [], model.step(x, rng)
        path = [model.step(x, rng)]
        for _ in range(m - 1):
            path.append(model.step(path[-1], rng))
        return False, path[:-1], path[-1]

    bit = True if small.delta >= 1.0 else bool(rng.random() < small.delta)
    if bit:
        if m == 1 and _nu_is_plain_step(small, x):
            return True, [], model.step(x, rng)
        endpoint = small.nu.sample(rng)
    elif model.state_space is StateSpace.REAL_LINE:
        endpoint = _residual_step_real(model, x, rng)
    else:
        endpoint = _residual_step_lattice(model, x, rng)
    if m == 1:
        return bit, [], endpoint
    return bit, _bridge_path(model, x, endpoint, m, rng), endpoint


def simulate_split(model, n: int, start, rng, max_doublings: int = 6) -> SplitTrajectory:
    """Simulate the split chain until the stopping regeneration is observed.

    The trajectory runs for at least ceil(n/m) skeleton steps and then
    continues until some level-1 time k satisfies m*k + m - 1 >= n - 1, so
    that the ledger for horizon n is extractable.  The continuation budget is
    doubled at most ``max_doublings`` times before giving up.
    """
    small = model.small_set
    if small is None:
        raise ValueError("model carries no small set; cannot split")
    m = small.m
    if n < m:
        raise ValueError("horizon n must be at least m")
    if model.state_space is StateSpace.REAL_LINE and m != 1:
        raise NotImplementedError("real-line bridge sampling is limited to m=1")

    threshold = math.ceil(n / m) - 1  # first qualifying skeleton time
    states = [start]
    levels = []
    budget = threshold + 1
    x = start
    found = False
    for round_ in range(max_doublings + 1):
        while len(levels) < budget:
            k = len(levels)
            bit, mids, endpoint = _split_segment(model, x, rng)
            levels.append(bit)
            states.extend(mids)
            states.append(endpoint)
            x = endpoint
            if bit and k >= threshold:
                found = True
                break
        if found:
            break
        budget += (threshold + 1) * 2 ** round_
    if not found:
        raise NoRegeneration(
            f"no regeneration at skeleton time >= {threshold} within "
            f"{len(levels)} steps; lengthen the simulation")
    dtype = np.int64 if model.state_space is StateSpace.INTEGER_LATTICE else float
    return SplitTrajectory(states=np.asarray(states, dtype=dtype),
                           levels=np.asarray(levels, dtype=bool),
                           m=m, initial=start, n=n)


def _split_step_batch(model, x, rng):
    """One vectorized split transition (m=1): returns (level_bits, next_states).

    A plain kernel draw is made for every replica first; level-1 replicas are
    then overridden by a nu draw (except in the atom case where nu is exactly
    the kernel step and the plain draw already has the right law), and level-0
    replicas inside C go through rejection against the kernel to realize the
    residual law.
    """
    small = model.small_set
    delta = small.delta
    replicas = x.shape[0]
    in_c = small.contains_batch(x)
    if delta >= 1.0:
        bits = in_c.copy()
    else:
        bits = in_c & (rng.random(replicas) < delta)
    out = model.step_batch(x, rng)
    plain_nu = delta >= 1.0 and all(
        _nu_is_plain_step(small, xv) for xv in np.unique(x[bits]))
    if not plain_nu:
        hit = np.flatnonzero(bits)
        if hit.size:
            out[hit] = small.nu.sample_batch(hit.size, rng)
    resid_idx = np.flatnonzero(in_c & ~bits)
    while resid_idx.size:
        y = out[resid_idx]
        x0 = x[resid_idx]
        if model.state_space is StateSpace.REAL_LINE:
            # the rejection atom at y = x carries no nu mass: always accepted
            moved = y != x0
            accept = np.ones(resid_idx.size)
            if np.any(moved):
                dens = model.transition_density(x0[moved], y[moved])
                accept[moved] = 1.0 - delta * small.nu.density(y[moved]) / dens
        else:
            dens = np.array([_row_pmf(model, int(a), int(b))
                             for a, b in zip(x0, y)])
            nu_mass = np.array([small.nu.pmf(int(b)) for b in y])
            accept = 1.0 - delta * nu_mass / dens
        if np.min(accept) < -RESIDUAL_SLACK:
            raise ResidualKernelNegative(f"residual density {np.min(accept):.3e}")
        rejected = rng.random(resid_idx.size) >= np.clip(accept, 0.0, 1.0)
        resid_idx = resid_idx[rejected]
        if resid_idx.size:
            out[resid_idx] = model.step_batch(x[resid_idx], rng)
    return bits, out


def _row_pmf(model, x: int, y: int) -> float:
    states, probs = model.transition_row(x)
    hit = np.flatnonzero(states == y)
    return float(probs[hit[0]]) if hit.size else 0.0


def split_states_batch(model, steps: int, replicas: int, start, seed: int):
    """Fixed-horizon vectorized split run (m=1): states (steps+1, R),
    level bits (steps, R).  Deterministic given (model, steps, replicas,
    start, seed)."""
    small = model.small_set
    if small is None or small.m != 1:
        raise NotImplementedError("batch split simulation requires m=1")
    rng = derive_rng(seed, 0)
    lattice = model.state_space is StateSpace.INTEGER_LATTICE
    x = np.full(replicas, start, dtype=np.int64 if lattice else float)
    rows_states = [x.copy()]
    rows_levels = []
    for _ in range(steps):
        bits, x = _split_step_batch(model, x, rng)
        rows_levels.append(bits)
        rows_states.append(x.copy())
    return np.stack(rows_states), np.stack(rows_levels)


def simulate_split_batch(model, n: int, replicas: int, start, seed: int,
                         max_doublings: int = 6) -> list[SplitTrajectory]:
    """Vectorized split simulation of independent replicas (m=1 only).

    All replicas advance on a single deterministic stream derived from
    ``seed``, so the result depends only on (model, n, replicas, start, seed).
    Each replica runs until its own stopping regeneration is observed.
    """
    small = model.small_set
    if small is None or small.m != 1:
        raise NotImplementedError("batch split simulation requires m=1")
    rng = derive_rng(seed, 0)
    lattice = model.state_space is StateSpace.INTEGER_LATTICE
    x = np.full(replicas, start, dtype=np.int64 if lattice else float)
    rows_states = [x.copy()]
    rows_levels = []
    done_at = np.full(replicas, -1, dtype=np.int64)  # qualifying sigma per replica
    threshold = n - 1
    cap = (threshold + 1) * (2 ** max_doublings + 1)
    k = 0
    while np.any(done_at < 0) and k < cap:
        bits, x = _split_step_batch(model, x, rng)
        rows_levels.append(bits)
        rows_states.append(x.copy())
        newly = bits & (done_at < 0) & (k >= threshold)
        done_at[newly] = k
        k += 1
    if np.any(done_at < 0):
        raise NoRegeneration(
            f"{int(np.sum(done_at < 0))} of {replicas} replicas saw no "
            f"regeneration within {k} steps")
    all_states = np.stack(rows_states)   # (k+1, R)
    all_levels = np.stack(rows_levels)   # (k, R)
    out_trajs = []
    for r in range(replicas):
        upto = int(done_at[r])
        out_trajs.append(SplitTrajectory(
            states=all_states[:upto + 2, r].copy(),
            levels=all_levels[:upto + 1, r].copy(),
            m=1, initial=start, n=n))
    return out_trajs


def simulate_sums_batch(model, g, n: int, replicas: int, seed: int, start,
                        center: float = 0.0, chunk: int = 2048,
                        threads: int = 1) -> np.ndarray:
    """Accumulate sum_{k<n} g(X_k) - n*center over independent replicas.

    Replicas are advanced with the model's plain kernel (the split bits do
    not change the law of the X path) in fixed-size chunks; chunk i uses the
    stream derived from (seed, i), and results are concatenated in chunk
    order, so the output is reproducible regardless of thread scheduling.
    """
    n_chunks = math.ceil(replicas / chunk)
    sizes = [min(chunk, replicas - i * chunk) for i in range(n_chunks)]
    lattice = model.state_space is StateSpace.INTEGER_LATTICE
    dtype = np.int64 if lattice else float

    def run_chunk(i):
        rng = derive_rng(seed, 1, i)
        x = np.full(sizes[i], start, dtype=dtype)
        acc = np.asarray(g(x), dtype=float).copy()
        for _ in range(n - 1):
            x = model.step_batch(x, rng)
            acc += g(x)
        return acc - n * center

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, range(n_chunks)))
    else:
        parts = [run_chunk(i) for i in range(n_chunks)]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# ledger extraction


def extract_ledger(traj: SplitTrajectory, f, n: int,
                   contains=None) -> RegenerationLedger:
    """Decompose sum_{k<n} f(X_k) into start excursion, blocks, and overshoot.

    ``contains`` (a vectorized membership predicate for C) fills the ledger's
    C-return times; without it they are left empty.
    """
    m = traj.m
    if n > len(traj.states):
        raise ValueError("trajectory shorter than requested horizon")
    values = np.asarray(f(traj.states), dtype=float)
    K = len(traj.levels)
    Z = values[:m * K].reshape(K, m).sum(axis=1)
    sigma = traj.sigma
    if sigma.size == 0:
        raise NoRegeneration("no regeneration in trajectory")
    qualifying = np.flatnonzero(m * sigma + m - 1 >= n - 1)
    if qualifying.size == 0:
        raise NoRegeneration(
            "no regeneration at or beyond the horizon; lengthen the simulation")
    N = int(qualifying[0])

    csum = np.concatenate(([0.0], np.cumsum(values)))
    total = csum[n] - csum[0]
    u_end = min(m * int(sigma[0]) + m - 1, n - 1)
    U = abs(csum[u_end + 1])
    blocks = np.array([
        csum[m * int(sigma[i + 1]) + m] - csum[m * (int(sigma[i]) + 1)]
        for i in range(sigma.size - 1)
    ])
    Vsum = float(blocks[:N].sum()) if N > 0 else 0.0
    if N > 0:
        W = abs(csum[m * int(sigma[N]) + m] - csum[n])
    else:
        W = 0.0

    if contains is not None:
        tau_c = skeleton_c_returns(traj, contains)
    else:
        tau_c = np.array([], dtype=np.int64)
    return RegenerationLedger(sigma=sigma.astype(np.int64), tau_c=tau_c,
                              blocks=blocks, Z=Z, N=N, U=float(U),
                              Vsum=float(Vsum), W=float(W), n=n, m=m,
                              total=float(total))


def skeleton_c_returns(traj: SplitTrajectory, contains) -> np.ndarray:
    """Skeleton times k >= 1 with X_{km} in C, for a membership predicate."""
    skeleton = traj.states[::traj.m]
    hits = np.flatnonzero(contains(skeleton))
    return hits[hits >= 1].astype(np.int64)


def attach_c_returns(ledger: RegenerationLedger, traj: SplitTrajectory, small) -> None:
    ledger.tau_c = skeleton_c_returns(traj, small.contains_batch)


# ---------------------------------------------------------------------------
# block dependence diagnostics


@dataclass
class DependenceReport:
    lag_correlations: dict
    n_blocks: int
    band: float            # +/- 3/sqrt(n_blocks)
    p_value_lag2: float

    @property
    def lag2_within_band(self) -> bool:
        return abs(self.lag_correlations[2]) < self.band


def _pooled_lag_corr(series: list[np.ndarray], lag: int):
    xs, ys = [], []
    for s in series:
        if s.size > lag:
            xs.append(s[:-lag])
            ys.append(s[lag:])
    if not xs:
        return math.nan
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def block_dependence_report(ledgers, max_lag: int = 5, n_permutations: int = 500,
                            seed: int = 0) -> DependenceReport:
    """Lag correlations of the block sums plus a permutation test at lag 2.

    Blocks with index gap >= 2 are independent, so the even-thinned block
    sequence is i.i.d.; the permutation test shuffles that thinned sequence,
    which makes the lag-2 null exact even in the one-dependent case.
    """
    series = [np.asarray(led.blocks, dtype=float) for led in ledgers
              if np.asarray(led.blocks).size > 0]
    n_blocks = int(sum(s.size for s in series))
    if n_blocks < 1000:
        raise InsufficientBlocks(f"{n_blocks} blocks pooled; need >= 1000")
    lags = {k: _pooled_lag_corr(series, k) for k in range(1, max_lag + 1)}

    thinned = [s[::2] for s in series if s.size >= 4]
    obs = _pooled_lag_corr(thinned, 1)
    rng = np.random.default_rng(seed)
    flat = np.concatenate(thinned)
    hits = 0
    for _ in range(n_permutations):
        perm = rng.permutation(flat)
        # re-split to the same shape so pair counts match the observed statistic
        parts, at = [], 0
        for s in thinned:
            parts.append(perm[at:at + s.size])
            at += s.size
        if abs(_pooled_lag_corr(parts, 1)) >= abs(obs):
            hits += 1
    p_value = (1 + hits) / (1 + n_permutations)
    return DependenceReport(lag_correlations=lags, n_blocks=n_blocks,
                            band=3.0 / math.sqrt(n_blocks), p_value_lag2=p_value)


# ---------------------------------------------------------------------------
# persistence


def save_ledger(ledger: RegenerationLedger, csv_path, json_path, seed=None) -> None:
    """Columnar CSV (one row per block: i, sigma_i, s_i) plus a JSON header."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "sigma_i", "s_i"])
        for i, s in enumerate(ledger.blocks):
            writer.writerow([i, int(ledger.sigma[i]), repr(float(s))])
    header = {
        "n": ledger.n,
        "m": ledger.m,
        "seed": seed,
        "N": ledger.N,
        "U": ledger.U,
        "W": ledger.W,
    }
    with open(json_path, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ledger(csv_path, json_path) -> RegenerationLedger:
    with open(json_path) as fh:
        header = json.load(fh)
    sigma, blocks = [], []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            sigma.append(int(row["sigma_i"]))
            blocks.append(float(row["s_i"]))
    blocks_arr = np.asarray(blocks)
    n_kept = min(header["N"], len(blocks))
    return RegenerationLedger(
        sigma=np.asarray(sigma, dtype=np.int64), tau_c=np.array([], dtype=np.int64),
        blocks=blocks_arr, Z=np.array([]), N=header["N"], U=header["U"],
        Vsum=float(blocks_arr[:n_kept].sum()), W=header["W"],
        n=header["n"], m=header["m"], total=math.nan)
