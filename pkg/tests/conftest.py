import numpy as np
import pytest

from sitefolio.instances import gen_random
from sitefolio.model import FractionalSolution, Instance, Metric


def random_fractional(inst: Instance, rng: np.random.Generator) -> FractionalSolution:
    """A random feasible point of the relaxation polytope (x rows on the
    simplex, y covering x, pre-opened forced open)."""
    n, m = inst.n_clients, inst.n_facilities
    x = rng.random((n, m)) ** 3
    x /= x.sum(axis=1, keepdims=True)
    y = np.minimum(1.0, x.max(axis=0) * rng.uniform(1.0, 1.5, size=m))
    y[inst.pre_opened] = 1.0
    return FractionalSolution.from_xy(inst, x, y)


def subsidized_instance_and_frac(seed: int, **kw):
    """Random instance plus a feasible delta-subsidized fractional solution:
    delta is set just above the sampled solution's subsidy."""
    rng = np.random.default_rng(seed)
    inst = gen_random(seed, **kw)
    frac = random_fractional(inst, rng)
    sub = frac.subsidy(inst)
    delta = max(sub * rng.uniform(1.0, 2.0), 0.05)
    inst = inst.with_flags(delta=float(delta))
    return inst, frac


@pytest.fixture
def tiny_instance():
    return gen_random(0, n_clients=6, n_facilities=3, n_groups=2, delta=0.5)


def line_instance(client_pos, facility_pos, revenues, costs, groups=None,
                  delta=0.5, pre_opened=None):
    """1-D metric instance helper for hand-traced examples."""
    pts = np.array([[p, 0.0] for p in list(client_pos) + list(facility_pos)])
    n, m = len(client_pos), len(facility_pos)
    return Instance(
        client_ids=tuple(f"c{j}" for j in range(n)),
        revenues=np.array(revenues, dtype=float),
        facility_ids=tuple(f"f{i}" for i in range(m)),
        costs=np.array(costs, dtype=float),
        pre_opened=np.array(pre_opened if pre_opened is not None else [False] * m),
        metric=Metric("euclidean", points=pts),
        groups=np.ones((n, 1)) if groups is None else np.array(groups, dtype=float),
        delta=delta,
    )
