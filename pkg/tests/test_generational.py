import numpy as np
import pytest

from bgpbt.benchmarks import AgentSimObjective, AgentState
from bgpbt.config import parse_config
from bgpbt.generational import (
    ArchRecord,
    DistillationSchedule,
    GenerationPlan,
    anneal_weights,
    collect_arch_records,
    distill_transfer,
    successive_halving,
    suggest_architectures,
)
from bgpbt.pbt import ScheduleRecord
from bgpbt.search_space import ppo_space, random_config


def record_rows(space, rows):
    rec = ScheduleRecord(space)
    for tick, gen, ret, config in rows:
        rec.append({"tick": tick, "agent_id": 0, "return": ret, "generation": gen, "event": "step", "config": config})
    return rec


class TestAnneal:
    def test_endpoints(self):
        s = DistillationSchedule()
        assert anneal_weights(s, 0.0) == (1.0, 0.0, 5.0)
        assert anneal_weights(s, 1.0) == (1.0, 0.0, 0.0)

    def test_linear_midpoint(self):
        assert anneal_weights(DistillationSchedule(alpha_v=2.0), 0.5) == (1.0, 1.0, 2.5)

    def test_bad_progress(self):
        with pytest.raises(ValueError):
            anneal_weights(DistillationSchedule(), 1.5)

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            DistillationSchedule(alpha_pi=-1.0)


class TestArchRecords:
    def test_best_return_per_architecture(self, rng):
        space = ppo_space()
        arch = space.arch_subspace()
        a, b = random_config(space, rng).decode(), random_config(space, rng).decode()
        for n in arch.names:
            b[n] = a[n]
        b["pi_depth"] = 1 if a["pi_depth"] != 1 else 2
        rec = record_rows(space, [(1, 0, 0.3, a), (2, 0, 0.7, a), (1, 0, 0.5, b), (0, 0, 9.0, b), (3, 1, 9.0, a)])
        out = collect_arch_records(rec, 0, arch)
        got = sorted(r.best_return for r in out)
        # warm-start rows and other generations are ignored
        assert got == [0.5, 0.7]

    def test_attribution(self, rng):
        space = ppo_space()
        arch = space.arch_subspace()
        a = random_config(space, rng).decode()
        out = collect_arch_records(record_rows(space, [(1, 0, 0.4, a)]), 0, arch)
        assert out[0].arch.decode() == {n: a[n] for n in arch.names}

    def test_missing_returns_skipped(self, rng):
        space = ppo_space()
        a = random_config(space, rng).decode()
        assert collect_arch_records(record_rows(space, [(1, 0, None, a)]), 0, space.arch_subspace()) == []


class TestSuggestArchitectures:
    def test_empty_history_is_all_random(self):
        arch = ppo_space().arch_subspace()
        out = suggest_architectures([], 4, 20, arch, np.random.default_rng(0))
        assert len(out) == 24
        assert all(z.space == arch for z in out)

    def test_bo_plus_random_counts(self, rng):
        arch = ppo_space().arch_subspace()
        records = [ArchRecord(random_config(arch, rng), float(rng.random())) for _ in range(6)]
        out = suggest_architectures(records, 4, 20, arch, rng)
        assert len(out) == 24
        assert len({(tuple(z.x), tuple(z.h)) for z in out}) == 24


class TestPlan:
    def test_rungs_24_12_8(self):
        plan = GenerationPlan(8, 24, 4, 30)
        assert plan.rung_sizes() == [24, 12, 8]
        assert plan.rung_budgets() == [10, 10, 10]
        assert plan.total_budget == 440

    def test_floor_at_b(self):
        assert GenerationPlan(5, 24, 4, 30).rung_sizes() == [24, 12, 6, 5]

    def test_budget_remainder_goes_late(self):
        assert GenerationPlan(8, 24, 4, 31).rung_budgets() == [10, 10, 11]

    def test_validation(self):
        with pytest.raises(ValueError):
            GenerationPlan(8, 4)


class TestHalving:
    @pytest.mark.parametrize("seed", range(10))
    def test_noiseless_keeps_true_top_b(self, seed):
        rng = np.random.default_rng(seed)
        true = rng.permutation(24).astype(float)
        plan = GenerationPlan(8, 24, 4, 30)

        def evaluate(c, rung, budget):
            return c, true[c]

        res = successive_halving(list(range(24)), evaluate, plan, rng)
        assert sorted(res.survivors) == sorted(np.argsort(-true)[:8].tolist())

    def test_survivor_count_and_budget(self, rng):
        plan = GenerationPlan(8, 24, 4, 30)
        calls = []

        def evaluate(c, rung, budget):
            calls.append(budget)
            return c, float(rng.random())

        res = successive_halving(list(range(24)), evaluate, plan, rng)
        assert len(res.survivors) == 8
        assert res.steps == sum(calls) == plan.total_budget

    def test_ties_by_position(self):
        plan = GenerationPlan(2, 4, 0, 2)
        res = successive_halving(list("abcd"), lambda c, r, b: (c, 1.0), plan)
        assert res.survivors == ["a", "b"]

    def test_non_finite_returns_eliminated(self):
        plan = GenerationPlan(2, 4, 0, 2)
        vals = {"a": float("nan"), "b": 1.0, "c": 2.0, "d": None}
        res = successive_halving(list("abcd"), lambda c, r, b: (c, vals[c]), plan)
        assert res.survivors == ["b", "c"]

    def test_too_few_candidates(self):
        with pytest.raises(ValueError):
            successive_halving([1, 2], lambda c, r, b: (c, 0.0), GenerationPlan(3, 3, 0, 2))


class TestDistill:
    def setup_method(self):
        self.obj = AgentSimObjective(noise=0.0)
        self.cfg = self.obj.max_capacity_config()
        self.teacher = AgentState(self.obj._run(self.obj.cold_start, self.cfg, 60), 60)
        self.schedule = DistillationSchedule(horizon=30)

    def test_same_arch_full_budget_recovers_teacher(self, rng):
        out = distill_transfer(self.teacher, self.cfg, self.cfg, self.obj, 30, self.schedule, rng)
        assert out.perf >= 0.95 * self.teacher.perf

    def test_zero_budget_is_cold_start(self, rng):
        out = distill_transfer(self.teacher, self.cfg, self.cfg, self.obj, 0, self.schedule, rng)
        assert out.perf == self.obj.cold_start and out.steps == 0

    def test_monotone_in_budget(self, rng):
        perfs = [distill_transfer(self.teacher, self.cfg, self.cfg, self.obj, b, self.schedule, rng).perf for b in range(0, 31, 5)]
        assert all(a <= b + 1e-12 for a, b in zip(perfs, perfs[1:]))

    def test_split_budget_matches_single_run(self, rng):
        whole = distill_transfer(self.teacher, self.cfg, self.cfg, self.obj, 30, self.schedule, rng)
        part = None
        for off in (0, 10, 20):
            part = distill_transfer(self.teacher, self.cfg, self.cfg, self.obj, 10, self.schedule, rng,
                                    start=part, offset=off, total=30)
        assert part.perf == pytest.approx(whole.perf, abs=1e-12)
        assert part.steps == 30

    def test_negative_budget(self, rng):
        with pytest.raises(ValueError):
            distill_transfer(self.teacher, self.cfg, self.cfg, self.obj, -1, self.schedule, rng)


class TestConfigWiring:
    def test_candidate_defaults(self):
        cfg = parse_config({"space": "ppo", "objective": "agent-sim"})
        assert cfg.scheduler.candidate_count == 24 and cfg.scheduler.n_bo_arch == 4
