import json

import pytest

from favsites import cli, harness
from favsites.harness import ConfigError, ExperimentConfig


def config(**kw):
    return ExperimentConfig.from_dict(kw)


def data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())
            if p.name not in ("manifest.json",)}


def test_defaults_merge_and_hash():
    a = config(experiment="cover", n_grid=[4, 6], replicates=2)
    assert a.master_seed == 0 and a.n_grid == [4, 6]
    b = config(experiment="cover", n_grid=[6, 4], replicates=2, output="elsewhere", threads=3)
    assert a.hash() == b.hash()
    assert a.hash() != config(experiment="cover", n_grid=[4, 6], replicates=2, master_seed=1).hash()
    assert ExperimentConfig.from_json(a.to_json()) == a


@pytest.mark.parametrize("bad,message", [
    ({"experiment": "theta", "delta": 1.5}, "delta = 1.5 violates 0 < delta < 1"),
    ({"experiment": "cover", "colour": "red"}, "unknown config keys: colour"),
    ({"experiment": "walk"}, "unknown experiment"),
    ({"n_grid": [4]}, "must name an experiment"),
    ({"experiment": "cover", "schema_version": 9}, "schema version"),
    ({"experiment": "cover", "n_grid": [2]}, "at least 4"),
    ({"experiment": "cover", "replicates": 0}, "replicates"),
    ({"experiment": "high", "alpha": 1.0}, "alpha"),
    ({"experiment": "exponents", "n_grid": [8, 16]}, "three n values"),
    ({"experiment": "boundary-favorite", "pattern": [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0],
                                                     [0, 0, 1], [0, 0, -1]]}, "admissible"),
    ({"experiment": "theta", "dimension": 2, "pattern": [[1, 0]]}, "dimension 3 only"),
    ({"experiment": "clt", "t_list": [10, 1]}, "increasing"),
    ({"experiment": "ray-knight", "graph": "star(3)"}, "unknown graph"),
])
def test_invalid_configs(bad, message):
    with pytest.raises(ConfigError, match=message):
        ExperimentConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")


def test_theta_target_from_delta(tmp_path):
    cfg = config(experiment="theta", n_grid=[200, 400, 800], replicates=2, delta=0.5)
    man = harness.run(cfg, tmp_path)
    assert man.summary["target"] == 0.5
    assert man.summary["band"] == [0.35, 0.65]
    assert "within_band" in man.summary


@pytest.mark.parametrize("cfg", [
    {"experiment": "cover", "n_grid": [4, 6], "replicates": 3},
    {"experiment": "late", "n_grid": [4, 8], "replicates": 2},
    {"experiment": "favorite", "dimension": 2, "n_grid": [100, 1000], "replicates": 3},
    {"experiment": "boundary-favorite", "dimension": 2, "pattern": [[1, 0]], "n_grid": [100, 500],
     "replicates": 3},
    {"experiment": "gff", "n_grid": [3, 5], "replicates": 500},
    {"experiment": "high", "n_grid": [8, 16], "replicates": 3},
    {"experiment": "ray-knight", "graph": "cycle(3)", "replicates": 50, "permutations": 20},
    {"experiment": "clt", "graph": "path(3)", "t_list": [1, 2], "replicates": 50},
    {"experiment": "exponents", "source": "late", "n_grid": [6, 8, 10], "replicates": 1},
    {"experiment": "kesten", "n_grid": [10, 100], "replicates": 50},
])
def test_rerun_is_byte_identical(cfg, tmp_path):
    c = config(**cfg)
    a = harness.run(c, tmp_path / "a")
    b = harness.run(c, tmp_path / "b")
    fa, fb = data_files(tmp_path / "a"), data_files(tmp_path / "b")
    assert set(fa) == set(fb) == set(a.outputs)
    assert fa == fb
    assert a.config_hash == b.config_hash and a.seeds == b.seeds


def test_threads_do_not_change_results(tmp_path):
    c = config(experiment="cover", n_grid=[4, 6], replicates=4)
    harness.run(c, tmp_path / "one")
    harness.run(c, tmp_path / "two", threads=2)
    assert data_files(tmp_path / "one") == data_files(tmp_path / "two")


def test_replicate_replay_matches_full_run(tmp_path):
    c = config(experiment="favorite", dimension=2, n_grid=[50, 100], replicates=3, master_seed=5)
    harness.run(c, tmp_path / "all")
    harness.run(c, tmp_path / "one", replicate=1)
    full = (tmp_path / "all" / "favorites.csv").read_text().splitlines()
    one = (tmp_path / "one" / "favorites.csv").read_text().splitlines()
    assert one[0] == full[0] and set(one[1:]) <= set(full[1:]) and len(one) == 3
    with pytest.raises(ConfigError):
        harness.run(c, tmp_path / "bad", replicate=7)


def test_failed_replicates_are_recorded(tmp_path, monkeypatch, capsys):
    real = harness._replicate

    def flaky(cfg, extras, r):
        if r == 1:
            raise RuntimeError("boom")
        return real(cfg, extras, r)

    monkeypatch.setattr(harness, "_replicate", flaky)
    c = config(experiment="cover", n_grid=[4], replicates=3)
    man = harness.run(c, tmp_path / "h")
    assert [f["replicate"] for f in man.failures] == [1]
    assert man.failures[0]["error"] == "RuntimeError: boom"
    assert man.summary["failures"] == 1
    rows = (tmp_path / "h" / "cover.csv").read_text().splitlines()
    assert len(rows) == 3
    code = cli.main(["cover", "--out", str(tmp_path / "c"), "--set", "n_grid=[4]", "--set", "replicates=3"])
    assert code == 2
    assert "1 replicate(s) failed" in capsys.readouterr().err


def test_no_writes_outside_output(tmp_path):
    with pytest.raises(ConfigError):
        harness._write(tmp_path, "../escape.txt", "x")
    assert not (tmp_path.parent / "escape.txt").exists()


def test_report_merges_and_warns(tmp_path):
    c = config(experiment="cover", n_grid=[4, 6], replicates=2)
    m1 = harness.run(c, tmp_path / "r1")
    m2 = harness.run(config(experiment="cover", n_grid=[8], replicates=2), tmp_path / "r2")
    rep = harness.report([tmp_path / "r1" / "manifest.json", tmp_path / "r2"])
    rows = rep["tables"]["cover"]["rows"]
    assert [r["n"] for r in rows] == [4, 6, 8]
    assert all(r["target"] == pytest.approx(4 / 3.141592653589793) for r in rows)
    assert rep["warnings"] == []
    m2.version = "0.0.0"
    assert harness.report([m1, m2])["warnings"]
    with pytest.raises(ValueError):
        harness.report([])
    assert "[cover]" in harness.report_text(rep)


# ---------------------------------------------------------------- command line

def test_cli_runs_and_reports(tmp_path, capsys):
    out = tmp_path / "cli"
    code = cli.main(["cover", "--seed", "3", "--out", str(out), "--set", "n_grid=[4,6]", "--set", "replicates=2"])
    assert code in (0, 2)
    assert (out / "cover.csv").exists() and (out / "manifest.json").exists()
    assert "experiment: cover" in capsys.readouterr().out
    assert cli.main(["report", str(out / "manifest.json"), "--json"]) == 0
    assert "tables" in json.loads(capsys.readouterr().out)


def test_cli_config_file(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "gff", "n_grid": [3], "replicates": 2000, "master_seed": 1}))
    code = cli.main(["gff", "--config", str(path), "--out", str(tmp_path / "o")])
    assert code == 0
    cfg = json.loads((tmp_path / "o" / "config.json").read_text())
    assert cfg["master_seed"] == 1 and cfg["output"] == str(tmp_path / "o")
    assert cli.main(["cover", "--config", str(path)]) == 1
    assert "not 'cover'" in capsys.readouterr().err


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["theta", "--set", "delta=1.5", "--out", str(tmp_path)]) == 1
    assert "delta = 1.5 violates 0 < delta < 1" in capsys.readouterr().err
    assert cli.main(["report"]) == 1
    with pytest.raises(SystemExit):
        cli.main(["cover", "--seed", "-1"])
    code = cli.main(["clt", "--out", str(tmp_path / "c"), "--set", "replicates=3", "--set", "t_list=[1, 2]"])
    assert code in (0, 2)
    summary = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert code == (0 if summary["within_band"] else 2)
