import pytest

from vitalpolicy.config import default_config, dump_config, load_config


class TestConfig:
    def test_defaults_valid(self):
        cfg = default_config()
        cfg.validate()
        assert len(cfg.registry) == 23
        assert cfg.registry.feature_count == 48
        assert [k.name for k in cfg.knobs] == ["PO2", "PCO2", "SpO2", "FiO2"]
        assert {k.name: k.threshold for k in cfg.knobs} == {
            "PO2": 25.0, "PCO2": 5.0, "SpO2": 5.0, "FiO2": 10.0}
        assert all(k.window_minutes == 60 for k in cfg.knobs)

    def test_age_table_covers_childhood(self):
        cfg = default_config()
        assert cfg.age_table.brackets[0].age_lo == 0.0
        assert cfg.age_table.brackets[-1].age_hi == 18.0

    def test_dump_load_round_trip(self, tmp_path):
        cfg = default_config()
        path = tmp_path / "cfg.yaml"
        path.write_text(dump_config(cfg))
        loaded = load_config(path)
        assert loaded.registry.names == cfg.registry.names
        assert loaded.knobs == cfg.knobs
        assert loaded.age_table.brackets == cfg.age_table.brackets
        assert loaded.simulator == cfg.simulator
        assert loaded.ece_bins == cfg.ece_bins

    def test_partial_override_keeps_other_defaults(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("simulator:\n  n_patients: 5\n  seed: 3\nece_bins: 15\n")
        cfg = load_config(path)
        assert cfg.simulator.n_patients == 5
        assert cfg.simulator.seed == 3
        assert cfg.simulator.hours_mean == 120
        assert cfg.ece_bins == 15
        assert len(cfg.registry) == 23

    def test_knob_must_exist_in_registry(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("knobs:\n- name: Bogus\n  threshold: 1.0\n")
        with pytest.raises(ValueError, match="Bogus"):
            load_config(path)

    def test_shipped_default_file_matches_builtins(self):
        from importlib import resources

        ref = resources.files("vitalpolicy").joinpath("data/default_config.yaml")
        import tempfile, pathlib

        with tempfile.TemporaryDirectory() as td:
            p = pathlib.Path(td) / "default.yaml"
            p.write_text(ref.read_text())
            loaded = load_config(p)
        cfg = default_config()
        assert loaded.registry.names == cfg.registry.names
        assert loaded.knobs == cfg.knobs
        assert loaded.simulator == cfg.simulator
