from unittest.mock import patch

import pytest

from dynlab.config import (
    RunConfig,
    Tolerances,
    find_local_config_paths,
    get_global_config_path,
    load_and_merge_configs,
    load_run_config,
)
from dynlab.families import logistic


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv("DYNLAB_CONFIG", raising=False)
    monkeypatch.delenv("DYNLAB_CONFIG_NAME", raising=False)


class TestGlobalRunFile:
    """The per-user file under ~/.dynlab."""

    def test_found_when_present(self, tmp_path):
        fake_home = tmp_path / "home"
        (fake_home / ".dynlab").mkdir(parents=True)
        config_file = fake_home / ".dynlab" / "dynlab.yaml"
        config_file.write_text("run:\n  seed: 1\n")

        with patch("pathlib.Path.home", return_value=fake_home):
            assert get_global_config_path() == config_file

    def test_none_when_absent(self, tmp_path):
        fake_home = tmp_path / "home"
        fake_home.mkdir()

        with patch("pathlib.Path.home", return_value=fake_home):
            assert get_global_config_path() is None


class TestLocalRunFiles:
    """Run files found between the filesystem root and cwd."""

    def test_nothing_found(self, tmp_path):
        work_dir = tmp_path / "project" / "subdir"
        work_dir.mkdir(parents=True)

        with patch("pathlib.Path.cwd", return_value=work_dir):
            assert find_local_config_paths() == []

    def test_root_to_cwd_order(self, tmp_path):
        project = tmp_path / "project"
        work_dir = project / "subdir"
        (work_dir / ".dynlab").mkdir(parents=True)
        outer = project / "dynlab.yaml"
        outer.write_text("run: {}\n")
        inner_dot = work_dir / ".dynlab" / "dynlab.yaml"
        inner_dot.write_text("run: {}\n")
        inner = work_dir / "dynlab.yaml"
        inner.write_text("run: {}\n")

        with patch("pathlib.Path.cwd", return_value=work_dir):
            assert find_local_config_paths() == [outer, inner, inner_dot]

    def test_custom_file_name(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DYNLAB_CONFIG_NAME", "lab.yaml")
        (tmp_path / "lab.yaml").write_text("run: {}\n")

        with patch("pathlib.Path.cwd", return_value=tmp_path):
            assert find_local_config_paths() == [tmp_path / "lab.yaml"]


class TestLayeredMerge:
    """Tests for the layered run-file search."""

    def _layout(self, tmp_path):
        home = tmp_path / "home"
        (home / ".dynlab").mkdir(parents=True)
        (home / ".dynlab" / "dynlab.yaml").write_text("run:\n  seed: 1\n  budget: 500\n")
        project = tmp_path / "project"
        work_dir = project / "subdir"
        work_dir.mkdir(parents=True)
        return home, project, work_dir

    def test_local_overrides_global(self, tmp_path):
        home, project, work_dir = self._layout(tmp_path)
        (work_dir / "dynlab.yaml").write_text("run:\n  seed: 2\n")

        with patch("pathlib.Path.home", return_value=home), patch("pathlib.Path.cwd", return_value=work_dir):
            merged = load_and_merge_configs()
        # top-level keys are replaced whole
        assert merged == {"run": {"seed": 2}}

    def test_global_only(self, tmp_path):
        home, project, work_dir = self._layout(tmp_path)

        with patch("pathlib.Path.home", return_value=home), patch("pathlib.Path.cwd", return_value=work_dir):
            assert load_and_merge_configs() == {"run": {"seed": 1, "budget": 500}}

    def test_isolate_hides_everything_above(self, tmp_path):
        home, project, work_dir = self._layout(tmp_path)
        (project / "dynlab.yaml").write_text("run:\n  seed: 3\nnotes: outer\n")
        (work_dir / "dynlab.yaml").write_text("run:\n  isolate: true\n  seed: 4\n")

        with patch("pathlib.Path.home", return_value=home), patch("pathlib.Path.cwd", return_value=work_dir):
            merged = load_and_merge_configs()
        assert merged == {"run": {"isolate": True, "seed": 4}}

    def test_env_file_is_exclusive(self, tmp_path, monkeypatch):
        home, project, work_dir = self._layout(tmp_path)
        (work_dir / "dynlab.yaml").write_text("run:\n  seed: 2\n")
        exclusive = tmp_path / "only.yaml"
        exclusive.write_text("run:\n  seed: 9\n")
        monkeypatch.setenv("DYNLAB_CONFIG", str(exclusive))

        with patch("pathlib.Path.home", return_value=home), patch("pathlib.Path.cwd", return_value=work_dir):
            assert load_and_merge_configs() == {"run": {"seed": 9}}

    def test_dangling_env_file_falls_back(self, tmp_path, monkeypatch):
        home, project, work_dir = self._layout(tmp_path)
        monkeypatch.setenv("DYNLAB_CONFIG", str(tmp_path / "missing.yaml"))

        with patch("pathlib.Path.home", return_value=home), patch("pathlib.Path.cwd", return_value=work_dir):
            assert load_and_merge_configs() == {"run": {"seed": 1, "budget": 500}}

    def test_explicit_path(self, tmp_path):
        explicit = tmp_path / "explicit.yaml"
        explicit.write_text("")
        assert load_and_merge_configs(explicit) == {}


class TestRunConfig:
    """Tests for resolving run settings."""

    def test_defaults(self):
        config = RunConfig()
        assert config.grid_h is None
        assert config.tolerances == Tolerances()

    def test_overrides_win(self):
        config = RunConfig.from_mapping({"seed": 3, "budget": "700"}, seed=5, budget=None)
        assert config.seed == 5
        assert config.budget == 700

    def test_tolerances_block(self):
        config = RunConfig.from_mapping({"tolerances": {"num": "1e-10"}})
        assert config.tolerances.num == 1e-10
        assert config.tolerances.cycle == Tolerances().cycle

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="grid_width"):
            RunConfig.from_mapping({"grid_width": 0.1})

    def test_grid_resolution(self):
        f = logistic(4.0)
        assert RunConfig().resolve_grid_h(f) == 2.0**-20
        assert RunConfig(grid_h=0.01).resolve_grid_h(f) == 0.01
        assert RunConfig(support_exp=4).support_grid(f).n == 16

    def test_params_do_not_affect_equality(self):
        assert RunConfig().with_params(x=0.3) == RunConfig()
        assert RunConfig().with_params(x=0.3).to_dict()["params"] == {"x": 0.3}

    def test_load_run_config(self, tmp_path):
        explicit = tmp_path / "run.yaml"
        explicit.write_text("run:\n  seed: 11\n  threads: 2\n")
        config = load_run_config(explicit, threads=1)
        assert (config.seed, config.threads) == (11, 1)
