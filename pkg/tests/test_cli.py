import csv
import json
import math
from fractions import Fraction
from pathlib import Path

import pytest

from perturbwalk import cli, rng

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

LAZY = {"family": "table", "d": 2, "entries": [[[0, 0], "1/5"], [[1, 0], "1/5"], [[-1, 0], "1/5"], [[0, 1], "1/5"], [[0, -1], "1/5"]]}
MILD = {"family": "table", "d": 2, "entries": [[[0, 0], "1/2"], [[1, 0], "1/8"], [[-1, 0], "1/8"], [[0, 1], "1/8"], [[0, -1], "1/8"]]}
SSRW = {"family": "table", "d": 2, "entries": [[[1, 0], "1/4"], [[-1, 0], "1/4"], [[0, 1], "1/4"], [[0, -1], "1/4"]]}


def _write(tmp_path, config, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return str(path)


def _occupation(**extra):
    cfg = {
        "experiment": "occupation",
        "walk": {"d": 2, "base_law": LAZY, "impurities": [{"site": [0, 0], "law": MILD}]},
        "grid": [100, 1000, 10000],
        "trajectories": 1000,
        "seed": 7,
    }
    cfg.update(extra)
    return cfg


def test_occupation_end_to_end(tmp_path, capsys):
    prefix = str(tmp_path / "occ")
    code = cli.main(["run", _write(tmp_path, _occupation()), "--out", prefix])
    assert code == cli.EXIT_OK
    assert "PASS log_growth" in capsys.readouterr().out
    rows = list(csv.reader(open(prefix + ".data.csv")))
    assert rows[0] == ["n", "mean", "stderr", "q50", "q90"]
    assert [int(r[0]) for r in rows[1:]] == [100, 1000, 10000]
    report = json.load(open(prefix + ".report.json"))
    assert report["rng"] == rng.RNG_ALGORITHM
    assert report["config"]["thresholds"]["log_r2"] == 0.95
    assert report["config"]["walk"]["base_law"]["family"] == "table"
    assert report["config"]["seed"] == 7
    assert report["versions"]["perturbwalk"]
    assert report["details"]["fit"]["r_squared"] > 0.95


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = _occupation()
    cfg["walk"]["horizen"] = 10
    assert cli.main(["run", _write(tmp_path, cfg)]) == cli.EXIT_CONFIG
    assert "horizen" in capsys.readouterr().err


def test_missing_seed_for_stochastic_experiment(tmp_path):
    cfg = _occupation()
    del cfg["seed"]
    assert cli.main(["run", _write(tmp_path, cfg)]) == cli.EXIT_CONFIG


def test_unknown_threshold_and_bad_json(tmp_path):
    assert cli.main(["run", _write(tmp_path, _occupation(thresholds={"r2": 0.9}))]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{ // no comments\n}")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG


def test_periodic_walk_blocked_without_waiver(tmp_path):
    cfg = {"experiment": "simulate", "walk": {"d": 2, "base_law": SSRW, "horizon": 6}, "trajectories": 100, "seed": 1}
    path = _write(tmp_path, cfg)
    prefix = str(tmp_path / "ssrw")
    assert cli.main(["run", path, "--out", prefix]) == cli.EXIT_ASSUMPTIONS
    assert not Path(prefix + ".report.json").exists()
    assert cli.main(["run", path, "--out", prefix, "--waive-assumptions"]) == cli.EXIT_OK
    assert json.load(open(prefix + ".report.json"))["assumptions_waived"] is True


def test_check_subcommand(capsys):
    assert cli.main(["check", str(CONFIGS / "check_periodic.json")]) == cli.EXIT_ASSUMPTIONS
    assert json.loads(capsys.readouterr().out)["aperiodic"] is False


def test_verdict_failure_exit_code(tmp_path):
    # an impossible threshold turns the same run into a verdict failure
    cfg = _occupation(thresholds={"log_r2": 1.0})
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_VERDICT


def test_csv_identical_across_thread_counts(tmp_path, monkeypatch):
    path = _write(tmp_path, _occupation(trajectories=3000))
    bodies = []
    for threads in (1, 3):
        prefix = str(tmp_path / f"t{threads}")
        assert cli.main(["run", path, "--threads", str(threads), "--out", prefix]) == cli.EXIT_OK
        bodies.append(Path(prefix + ".data.csv").read_bytes())
    monkeypatch.setenv("PERTURBWALK_THREADS", "5")
    assert cli.resolve_threads(None) == 5
    prefix = str(tmp_path / "env")
    assert cli.main(["run", path, "--out", prefix]) == cli.EXIT_OK
    assert json.load(open(prefix + ".report.json"))["threads"] == 5
    bodies.append(Path(prefix + ".data.csv").read_bytes())
    assert bodies[0] == bodies[1] == bodies[2]


def test_simulate_with_oracle(tmp_path):
    cfg = {
        "experiment": "simulate",
        "walk": {"d": 2, "base_law": LAZY, "impurities": [{"site": [0, 0], "law": MILD}], "horizon": 6},
        "trajectories": 200000,
        "box_radius": 6,
        "seed": 3,
    }
    code, report = cli.execute(cfg, prefix=str(tmp_path / "sim"))
    assert code == cli.EXIT_OK and report["details"]["tv_distance"] < 0.01


@pytest.mark.parametrize("name", ["survival", "scaling"])
def test_shipped_deterministic_configs_pass(tmp_path, name):
    code, _ = cli.execute(cli.load_config(CONFIGS / f"{name}.json"), prefix=str(tmp_path / name))
    assert code == cli.EXIT_OK


def test_doa_and_returns_experiments(tmp_path):
    tail = {"family": "axis_power_tail", "d": 2, "beta": 2.5, "hold": 0.0}
    code, report = cli.execute({"experiment": "doa-check", "walk": {"d": 2, "base_law": tail}}, prefix=str(tmp_path / "doa"))
    assert code == cli.EXIT_VERDICT and report["details"]["verdict"] == "fails condition (1)"
    ret = {"experiment": "returns", "walk": {"d": 2, "base_law": {"family": "product_lazy", "d": 2}}, "grid": [10000]}
    code, report = cli.execute(ret, prefix=str(tmp_path / "ret"))
    assert code == cli.EXIT_OK


# -- reference tables ------------------------------------------------------------------


@pytest.fixture(scope="module")
def reference(tmp_path_factory):
    out = tmp_path_factory.mktemp("ref")
    assert cli.main(["reference", "--out", str(out)]) == cli.EXIT_OK
    return out


def test_reference_tables_match_golden(reference):
    for name in ("product_lazy.csv", "product_lazy.json"):
        assert (reference / name).read_bytes() == (ROOT / "reference" / name).read_bytes()


def test_reference_table_contents(reference):
    rows = list(csv.DictReader(open(reference / "product_lazy.csv")))
    assert len(rows) == 20001
    assert float(rows[0]["R"]) == 1.0
    r = [float(row["R"]) for row in rows]
    assert all(b < a for a, b in zip(r, r[1:]))
    row = rows[10**4]
    assert abs(float(row["n_u"]) - 1 / math.pi) < 0.01 / math.pi
    exact = Fraction(math.comb(20000, 10000) ** 2, 16**10000)
    assert float(row["u"]) == pytest.approx(float(exact), rel=1e-12)
    assert float(rows[1]["C_n"]) == 1.25
