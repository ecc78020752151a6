import csv
import io
import json

import pytest

from efcboundary.cli import main
from efcboundary.config import ConfigError, load_config, parse_config, sim_config_from
from efcboundary.measures import (CompositeSplitting, FiniteSplitting, LogPowerDensity,
                                  PowerDensity, PowerLawSplitting, TableDensity)

STABLE_TOML = """
kingman = 0.0
[density]
family = "power_beta"
params = {c = 1.0, beta = 0.5}
[mu]
family = "power"
params = {b = 0.2, alpha = 0.5}
[sim]
initial_n = 20
horizon = 1.0
n_max = 10000
floor = 2
[experiment]
replicas = 30
seed_root = 5
name = "demo"
"""

KINGMAN_TOML = """
kingman = 1.0
[mu]
family = "geometric"
params = {mass = 1.0, q = 0.5}
"""


def run(argv):
    buf = io.StringIO()
    code = main(argv, out=buf)
    return code, buf.getvalue()


@pytest.fixture
def stable_cfg(tmp_path):
    p = tmp_path / "stable.toml"
    p.write_text(STABLE_TOML)
    return str(p)


class TestConfig:
    def test_parse_stable(self):
        cfg = parse_config(STABLE_TOML)
        assert isinstance(cfg.lam.density, PowerDensity)
        assert (cfg.lam.density.c, cfg.lam.density.beta) == (1.0, 0.5)
        assert isinstance(cfg.mu, PowerLawSplitting) and cfg.mu.b == 0.2
        assert cfg.experiment["replicas"] == 30

    def test_density_families(self):
        cfg = parse_config('[density]\nfamily = "log_power"\nparams = {c = 2.0, gamma = 1.0}')
        assert isinstance(cfg.lam.density, LogPowerDensity)
        assert (cfg.lam.density.c, cfg.lam.density.gamma) == (2.0, 1.0)
        cfg = parse_config('[density]\nfamily = "uniform"')
        assert (cfg.lam.density.c, cfg.lam.density.beta) == (1.0, 0.0)
        assert cfg.mu is None

    def test_table_file(self, tmp_path):
        (tmp_path / "dens.txt").write_text("0.1 2.0\n0.5 1.0\n0.9 0.5\n")
        p = tmp_path / "m.toml"
        p.write_text('[density]\nfamily = "custom_table"\nparams = {file = "dens.txt"}\n')
        cfg = load_config(str(p))
        assert isinstance(cfg.lam.density, TableDensity)

    def test_finite_and_composite(self):
        cfg = parse_config('[mu]\nfamily = "finite"\npmf = [[1, 0.5], [3, 0.25]]')
        assert isinstance(cfg.mu, FiniteSplitting)
        assert list(cfg.mu.pmf([1, 2, 3])) == [0.5, 0.0, 0.25]
        cfg = parse_config('[mu]\nfamily = "composite"\npmf = [[2, 0.3]]\n'
                           '[mu.tail]\nfamily = "power"\nparams = {b = 1.0, alpha = 0.5}')
        assert isinstance(cfg.mu, CompositeSplitting)
        # explicit prefix up to k=2, parametric law beyond
        assert list(cfg.mu.pmf([1, 2])) == [0.0, 0.3]
        assert cfg.mu.pmf(3) == pytest.approx(3 ** -1.5, rel=1e-15)

    @pytest.mark.parametrize("text", [
        "kingman = [",
        '[density]\nfamily = "nope"',
        '[density]\nfamily = "power_beta"\nparams = {c = 1.0}',
        '[mu]\nfamily = "power"\nparams = {b = 1.0}',
        '[density]\nfamily = "power_beta"\nparams = {c = 1.0, beta = 1.5}',
        "atoms = [[1.0, 1.0]]",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_sim_overrides(self):
        sim = sim_config_from({"initial_n": 10, "horizon": 1.0}, horizon=3.0, floor=None)
        assert sim.horizon == 3.0 and sim.floor == 1
        with pytest.raises(ConfigError):
            sim_config_from({"initial_n": 10, "horizon": 1.0, "bogus": 1})


class TestCli:
    def test_rates_json(self, stable_cfg):
        code, out = run(["rates", "--config", stable_cfg, "--n", "2,10"])
        doc = json.loads(out)
        assert code == 0 and doc["schema_version"] == "1"
        assert [r["n"] for r in doc["rates"]] == [2, 10]
        assert all(r["phi"] <= r["psi"] for r in doc["rates"])

    def test_rates_csv_kingman(self, tmp_path):
        p = tmp_path / "k.toml"
        p.write_text(KINGMAN_TOML)
        code, out = run(["rates", "--config", str(p), "--n", "5", "--format", "csv"])
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0][:3] == ["schema_version", "n", "total_coal_rate"]
        assert float(rows[1][2]) == 10.0 and float(rows[1][4]) == 10.0

    def test_classify_regular(self):
        code, out = run(["classify", "--regular", "alpha=0.5,beta=0.5,b=0.2,d=1"])
        doc = json.loads(out)
        assert code == 0 and doc["label"] == "Regular" and doc["source"] == "regular"

    def test_classify_config(self, tmp_path):
        p = tmp_path / "k.toml"
        p.write_text(KINGMAN_TOML)
        code, out = run(["classify", "--config", str(p), "--format", "csv"])
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[1][1] == "Entrance"

    def test_analyze(self, tmp_path):
        p = tmp_path / "k.toml"
        p.write_text(KINGMAN_TOML)
        code, out = run(["analyze", "--config", str(p), "--out", str(tmp_path / "o")])
        doc = json.loads(out)
        assert code == 0 and doc["verdict"] == "NonExplosive"
        assert doc["certificate"]["path"] == "series"

    def test_simulate_deterministic(self, stable_cfg, tmp_path):
        outs = []
        for workers in ("1", "3"):
            d = tmp_path / f"w{workers}"
            code, out = run(["simulate", "--config", stable_cfg, "--out", str(d), "--workers",
                             workers, "--format", "csv", "--paths", "2"])
            assert code == 0
            outs.append((d / "demo_summary.csv").read_bytes())
            assert out.encode() == outs[-1]
            assert (d / "demo_path_1.csv").exists()
        assert outs[0] == outs[1]

    def test_simulate_seed_changes_output(self, stable_cfg):
        _, a = run(["simulate", "--config", stable_cfg, "--format", "csv", "--seed", "1"])
        _, b = run(["simulate", "--config", stable_cfg, "--format", "csv", "--seed", "2"])
        assert a != b

    def test_sweep_empty(self):
        code, out = run(["sweep", "--alpha", "", "--format", "csv"])
        assert code == 0 and len(out.splitlines()) == 1

    def test_selftest(self):
        code, out = run(["selftest"])
        assert code == 0 and "all checks passed" in out

    def test_selftest_fault(self):
        code, out = run(["selftest", "--inject-fault", "lambda"])
        assert code == 1 and "FAIL" in out

    def test_missing_config(self, capsys):
        code, _ = run(["rates"])
        assert code == 2 and "needs --config" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text('[mu]\nfamily = "nope"')
        code, _ = run(["classify", "--config", str(p)])
        assert code == 2
