import numpy as np
import pytest

import regenbound as rb


@pytest.fixture(scope="session")
def ex1():
    """Geometric-target walk, rho=1/2, A=1.2 (atom at 0, delta=1)."""
    return rb.geometric_example(0.5, 1.2)


@pytest.fixture(scope="session")
def ex2():
    """Log-concave real-line example with Laplace proposal, x* = 3."""
    return rb.logconcave_example(rb.LaplaceProposal(), 3.0)


@pytest.fixture(scope="session")
def ex2_ledgers(ex2):
    """About 1.5e3 regeneration blocks of the real-line example, f(x) = x."""
    _, model, _ = ex2
    trajs = rb.simulate_split_batch(model, 8000, 64, 0.0, seed=2024)
    f = lambda x: np.asarray(x, dtype=float)
    return [rb.extract_ledger(t, f, 8000) for t in trajs]


class QueuedRng:
    """Deterministic stand-in for a Generator: pops queued uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, shape=None):
        if shape is None:
            return self.values.pop(0)
        size = shape if isinstance(shape, int) else int(np.prod(shape))
        out = np.array([self.values.pop(0) for _ in range(size)])
        return out.reshape(shape) if not isinstance(shape, int) else out


@pytest.fixture
def queued_rng():
    return QueuedRng
