import pytest

from bgpbt.config import (
    METHODS,
    ConfigError,
    apply_overrides,
    dump_config,
    load_config,
    load_raw,
    parse_config,
)

from conftest import CONFIGS


def base(**extra):
    return {"space": "mixed", "objective": "categorical-gated-drift", **extra}


class TestParse:
    @pytest.mark.parametrize("name", ["minimal", "drifting", "stationary", "agent_sim"])
    def test_shipped_configs_load(self, name):
        cfg = load_config(CONFIGS / f"{name}.yaml")
        assert cfg.build_space().d_x + cfg.build_space().d_h > 0

    def test_defaults(self):
        cfg = parse_config(base())
        s = cfg.scheduler
        assert (s.population_size, s.q, s.init_pool_size) == (8, 12.5, 24)
        assert cfg.optimizer.trust_region.succ_tol == 3

    def test_round_trip_through_yaml(self, tmp_path):
        cfg = load_config(CONFIGS / "agent_sim.yaml")
        p = tmp_path / "c.yaml"
        p.write_text(dump_config(cfg))
        assert load_config(p) == cfg

    def test_objective_shorthand(self):
        assert parse_config(base()).objective.params == {}

    def test_seed_scalar(self):
        assert parse_config(base(seeds=3)).seeds == (3,)


class TestErrors:
    @pytest.mark.parametrize(
        "data, field",
        [
            ({"objective": "agent-sim"}, "space"),
            ({"space": "ppo"}, "objective"),
            (base(bogus=1), "bogus"),
            (base(scheduler={"population_size": 0}), "scheduler.population_size"),
            (base(scheduler={"q": 75}), "scheduler.q"),
            (base(scheduler={"t_max": "ten"}), "scheduler.t_max"),
            (base(scheduler={"init_pool": 2}), "scheduler.init_pool"),
            (base(scheduler={"nope": 1}), "scheduler.nope"),
            (base(optimizer={"enable_nas": "yes"}), "optimizer.enable_nas"),
            (base(methods=["bgpbt", "magic"]), "methods"),
            (base(seeds=[]), "seeds"),
            (base(space="no/such/file.json"), "space"),
            (base(objective={"name": "categorical-gated-drift", "params": {"wobble": 1}}), "objective"),
        ],
    )
    def test_error_names_field(self, data, field):
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert exc.value.field == field
        assert field in str(exc.value)

    def test_root_must_be_mapping(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_raw(p)


class TestOverrides:
    def test_nested_values_parsed_as_yaml(self):
        data = apply_overrides(base(), ["scheduler.t_max=7", "optimizer.enable_nas=false", "scheduler.t_ready.mode=linear"])
        assert data["scheduler"]["t_max"] == 7
        assert data["optimizer"]["enable_nas"] is False
        assert data["scheduler"]["t_ready"]["mode"] == "linear"

    def test_original_untouched(self):
        raw = base()
        apply_overrides(raw, ["seeds=[1, 2]"])
        assert "seeds" not in raw

    def test_malformed(self):
        with pytest.raises(ConfigError):
            apply_overrides(base(), ["scheduler.t_max"])


class TestMethods:
    def test_presets(self):
        cfg = parse_config(base())
        assert cfg.with_method("pb2").optimizer.enable_trust_region is False
        assert cfg.with_method("no_nas").optimizer.enable_nas is False
        assert cfg.with_method("bgpbt").optimizer.explore == "bo"
        assert set(METHODS) >= {"bgpbt", "pb2", "random_search"}

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            parse_config(base()).with_method("zzz")
