import numpy as np
import pytest

from bgpbt.acquisition import (
    AcquisitionContext,
    categorical_neighbors,
    maximize_with_trace,
    ordinal_neighbors,
    suggest,
    suggest_batch,
    ucb,
)
from bgpbt.gp import Dataset, GPModel, fit
from bgpbt.kernels import KernelParams
from bgpbt.search_space import DimensionSpec, SearchSpace, random_config
from bgpbt.trust_region import TrustRegionState


class StubModel:
    """Constant posterior; enough for UCB arithmetic checks."""

    def __init__(self, space, mean=0.0, var=1.0):
        self.space = space
        self.params = KernelParams.default(space.d_x, space.d_h)
        self.mean, self.var = mean, var

    def predict(self, X, H, t):
        n = max(len(X), len(H))
        return np.full(n, self.mean), np.full(n, self.var)

    def posterior(self, z, t):
        return self.mean, self.var


def small_space():
    return SearchSpace([DimensionSpec.continuous("x", 0, 1), DimensionSpec.categorical("c", ["a", "b", "c"])])


def toy_target(z):
    return 1 - (z.x[0] - 0.35) ** 2 + (0.3 if z.h[0] == 1 else 0.0)


def fitted_model(space, rng, n=15, f=toy_target):
    data = Dataset(space)
    for _ in range(n):
        z = random_config(space, rng)
        data.add(z, 0, f(z))
    return fit(data, rng=rng, n_restarts=2, fit_omega=False, omega=0.0)


class TestUCB:
    def test_beta_zero_is_mean(self):
        space = small_space()
        ctx = AcquisitionContext(StubModel(space, 0.5, 0.1), TrustRegionState(), 0, beta=0.0)
        assert ucb(ctx, space.default_config()) == 0.5

    def test_documented_value(self):
        space = small_space()
        ctx = AcquisitionContext(StubModel(space, 0.5, 0.01), TrustRegionState(), 0, beta=4.0)
        # sqrt(4) * sqrt(0.01) = 0.2
        assert ucb(ctx, space.default_config()) == pytest.approx(0.7, abs=1e-15)

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            AcquisitionContext(StubModel(small_space()), TrustRegionState(), 0, beta=-1.0)

    def test_increasing_in_beta(self, rng):
        space = small_space()
        model = fitted_model(space, rng)
        z = random_config(space, rng)
        vals = [ucb(AcquisitionContext(model, TrustRegionState(), 0, beta=b), z) for b in (0.0, 1.0, 4.0, 9.0)]
        assert vals == sorted(vals)


class TestNeighbors:
    def test_ordinal_rank_three_of_five(self):
        space = SearchSpace([DimensionSpec.integer("k", 1, 5)])
        z = space.make([0.5], [])  # value 3
        got = sorted(n.decode()["k"] for n in ordinal_neighbors(z, 0))
        assert got == [2, 4]

    def test_ordinal_edges(self):
        space = SearchSpace([DimensionSpec.integer("k", 1, 5)])
        assert [n.decode()["k"] for n in ordinal_neighbors(space.make([0.0], []), 0)] == [2]
        assert [n.decode()["k"] for n in ordinal_neighbors(space.make([1.0], []), 0)] == [4]

    def test_ordinal_on_continuous_dim(self):
        with pytest.raises(ValueError):
            ordinal_neighbors(small_space().default_config(), 0)

    def test_categorical_all_other_labels(self):
        z = small_space().make([0.2], [1])
        assert sorted(int(n.h[0]) for n in categorical_neighbors(z, 0)) == [0, 2]


class TestMaximize:
    def test_flat_model_returns_start(self):
        space = small_space()
        ctx = AcquisitionContext(StubModel(space), TrustRegionState(), 0)
        z = space.make([0.3], [2])
        out, val, _ = maximize_with_trace(ctx, z, np.random.default_rng(0))
        assert out == z and val == 1.0

    def test_trace_is_monotone(self, rng):
        space = small_space()
        model = fitted_model(space, rng)
        ctx = AcquisitionContext(model, TrustRegionState(), 0, beta=1.0)
        for _ in range(10):
            _, _, trace = maximize_with_trace(ctx, random_config(space, rng), rng)
            assert np.all(np.diff(trace) >= -1e-12)

    def test_stays_inside_trust_region(self, rng):
        space = SearchSpace([DimensionSpec.continuous(f"x{i}", 0, 1) for i in range(3)]
                            + [DimensionSpec.integer("k", 0, 6)]
                            + [DimensionSpec.categorical(f"c{i}", [0, 1, 2]) for i in range(4)])
        model = fitted_model(space, rng, f=lambda z: float(np.sum(z.x) + np.sum(z.h == 2)))
        for level in (-3, -1, 0, 2):
            tr = TrustRegionState(center=random_config(space, rng), level_x=level, level_h=min(0, level) - 1)
            ctx = AcquisitionContext(model, tr, 0, beta=2.0)
            for _ in range(5):
                z = suggest(ctx, 3, rng)
                assert tr.contains(z, model.params.lengthscales)

    def test_fixed_dims_untouched(self, rng):
        space = small_space()
        model = fitted_model(space, rng)
        fixed = space.make([0.9], [0])
        ctx = AcquisitionContext(model, TrustRegionState(center=fixed), 0, free_x=[False], free_h=[True], fixed=fixed)
        z = suggest(ctx, 4, rng)
        assert z.x[0] == 0.9

    def test_determinism(self):
        space = small_space()
        model = fitted_model(space, np.random.default_rng(1))
        ctx = AcquisitionContext(model, TrustRegionState(center=space.make([0.5], [0])), 0, beta=1.0)
        a = suggest(ctx, 4, np.random.default_rng(7))
        b = suggest(ctx, 4, np.random.default_rng(7))
        assert a == b

    def test_single_start_improves_on_center(self, rng):
        space = small_space()
        model = fitted_model(space, rng)
        center = space.make([0.9], [2])
        ctx = AcquisitionContext(model, TrustRegionState(center=center, enabled=False), 0, beta=0.5)
        z = suggest(ctx, 1, rng)
        assert ucb(ctx, z) >= ucb(ctx, center)

    def test_exhaustive_ordinal_moves(self):
        # oracle: with a mean peaked at rank 3 and no TR, every start reaches it
        space = SearchSpace([DimensionSpec.integer("k", 0, 4)])
        data = Dataset(space)
        for r in range(5):
            data.add(space.make([r / 4], []), 0, -((r - 3) ** 2))
        p = KernelParams(np.array([0.3]), np.zeros(0), 1.0, 0.0, 1e-6)
        model = GPModel.from_dataset(p, data)
        ctx = AcquisitionContext(model, TrustRegionState(enabled=False), 0, beta=0.0)
        for r in range(5):
            z, _, _ = maximize_with_trace(ctx, space.make([r / 4], []), np.random.default_rng(r))
            assert z.decode()["k"] == 3


class TestBatch:
    def test_distinct_points(self, rng):
        space = small_space()
        model = fitted_model(space, rng)
        ctx = AcquisitionContext(model, TrustRegionState(center=space.make([0.5], [1])), 0, beta=1.0)
        batch = suggest_batch(ctx, 4, rng)
        assert len(batch) == 4
        assert len({(tuple(z.x), tuple(z.h)) for z in batch}) == 4

    def test_fantasy_keeps_mean_and_cuts_variance(self, rng):
        space = small_space()
        model = fitted_model(space, rng)
        z = random_config(space, rng)
        m0, v0 = model.posterior(z, 0)
        cond = model.condition_on([z], 0, [m0])
        m1, v1 = cond.posterior(z, 0)
        assert m1 == pytest.approx(m0, abs=1e-6)
        assert v1 < v0

    def test_m_must_be_positive(self, rng):
        space = small_space()
        ctx = AcquisitionContext(fitted_model(space, rng), TrustRegionState(center=space.default_config()), 0)
        with pytest.raises(ValueError):
            suggest_batch(ctx, 0, rng)


class TestBetaSensitivity:
    def test_large_beta_prefers_unexplored_region(self):
        space = SearchSpace([DimensionSpec.continuous("x", 0, 1)])
        data = Dataset(space)
        for v in np.linspace(0.0, 0.3, 6):
            data.add(space.make([v], []), 0, 1.0 + v)
        p = KernelParams(np.array([0.15]), np.zeros(0), 1.0, 0.0, 1e-4)
        model = GPModel.from_dataset(p, data)
        rng = np.random.default_rng(0)
        start = space.make([0.3], [])
        lo = maximize_with_trace(AcquisitionContext(model, TrustRegionState(enabled=False), 0, beta=0.0), start, rng)[0]
        hi = maximize_with_trace(AcquisitionContext(model, TrustRegionState(enabled=False), 0, beta=100.0), start, rng)[0]
        assert model.posterior(hi, 0)[1] >= model.posterior(lo, 0)[1]
        # data sit on [0, 0.3], so exploring means moving right
        assert hi.x[0] > lo.x[0]
