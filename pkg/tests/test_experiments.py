import csv
import json
from dataclasses import replace

import pytest

from llngm.errors import ConfigError
from llngm.experiments import (S1_POINTS, ExperimentConfig, load_config, regime_label, run_s1, run_s2, spearman,
                               study_spec)


def test_default_configs():
    s1, s2 = ExperimentConfig.s1(), ExperimentConfig.s2()
    assert (s1.n, s1.T, s1.burn, s1.n_chains) == (300, 50_000, 5_000, 4)
    assert s2.burn == 10_000 and s2.mu_grid[0] == 0.0
    assert set(s1.points) == set(S1_POINTS)


def test_load_config_overrides(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nexperiment = S2\nT = 1000\nseed = 7\nwrite_chains = yes\n"
                    "[s2]\nmu_grid = 0, 1\ngig = 0.5, 1, 0\n")
    cfg = load_config(path)
    assert cfg.experiment == "S2" and cfg.T == 1000 and cfg.seed == 7 and cfg.write_chains
    assert cfg.mu_grid == (0.0, 1.0) and cfg.gig == (0.5, 1.0, 0.0)


@pytest.mark.parametrize("text,section,key", [
    ("[experiment]\nwidth = 3\n", "experiment", "width"),
    ("[experiment]\nphi = high\n", "experiment", "phi"),
    ("[s1]\npoints = A,Z\n", "s1", "points"),
    ("[s2]\ngig = 1,2\n", "s2", "gig"),
])
def test_load_config_errors(tmp_path, text, section, key):
    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.section == section and info.value.key == key


def test_study_points_land_in_their_regimes():
    cfg = ExperimentConfig.s1()
    for p, a, b, mu, label in S1_POINTS.values():
        spec = study_spec(cfg, p, a, b, mu)
        assert spec.n == 300
        assert regime_label(spec) == label.replace("-", "_").replace("TC_", "TC")


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 25, 100]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_s1_outputs(tmp_path):
    cfg = replace(ExperimentConfig.s1(), n=20, T=400, burn=40, n_chains=2, points=("A", "D"),
                  output_dir=str(tmp_path))
    result = run_s1(cfg)
    assert len(result.rows) == 6
    with open(tmp_path / "s1_table.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["point", "regime", "stat", "iact", "ess_per_sec", "rhat"]
    sidecar = json.loads((tmp_path / "s1_run.json").read_text())
    assert sidecar["config"]["T"] == 400 and "version" in sidecar and "wall_times" in sidecar
    assert (tmp_path / "s1_plot.csv").exists()


def test_s2_outputs(tmp_path):
    cfg = replace(ExperimentConfig.s2(), n=20, T=300, burn=30, n_chains=2, mu_grid=(0.0, 1.0),
                  output_dir=str(tmp_path))
    result = run_s2(cfg)
    assert result.value("mu", 0.0, "T_null", "gamma_ns") == pytest.approx(0.0, abs=1e-12)
    assert result.value("mu", 1.0, "T_null", "gamma_ns") > 0
    sidecar = json.loads((tmp_path / "s2_run.json").read_text())
    assert sidecar["config"]["mu_grid"] == [0.0, 1.0]
