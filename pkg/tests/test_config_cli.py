import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from flowredirect.cli import main
from flowredirect.config import RunConfig, parse_config
from flowredirect.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
MINIMAL = {"graph": {"family": "erdos_renyi", "size": 10, "seed": 1},
           "experiment": {"type": "compare", "replicates": 2},
           "optimizer": {"steps": 20}, "simulation": {"horizon": 300}, "threads": 1}


def write(tmp_path, data, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_defaults_resolve():
    cfg = parse_config({})
    assert cfg == RunConfig()
    d = cfg.to_dict()
    assert d["optimizer"]["steps"] == 400 and d["diffusion"]["tau"] == 1.0
    assert d["model"]["sampling"]["delta_mean"] == 0.2
    assert d["experiment"]["prop3"]["epsilon"] == 0.1


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name, capsys):
    assert main(["validate", str(CONFIGS / name)]) == 0


def test_validate_echoes_every_default(tmp_path, capsys):
    assert main(["validate", write(tmp_path, {"graph": {"size": 12}})]) == 0
    echoed = json.loads(capsys.readouterr().out)
    full = RunConfig().to_dict()
    full["graph"]["size"] = 12
    assert echoed == full


BAD = [
    ({"diffusion": {"tau": -1}}, "diffusion.tau"),
    ({"graph": {"famly": "x"}}, "graph.famly"),
    ({"colour": 1}, "colour"),
    ({"model": {"sampling": {"delta_men": 1}}}, "model.sampling.delta_men"),
    ({"experiment": {"type": "fit"}}, "experiment.type"),
    ({"experiment": {"xs": [1.5]}}, "experiment.xs"),
    ({"optimizer": {"losses": ["l2"]}}, "optimizer.losses"),
    ({"diffusion": {"outrate_range": [0.5, 0.1]}}, "diffusion.outrate_range"),
    ({"experiment": {"prop3": {"shrink": 2.0}}}, "shrink"),
    ({"experiment": {"prop3": {"radius": 2.0}}}, "radius"),
    ({"threads": 0}, "threads"),
    ([], "object"),
]


@pytest.mark.parametrize("data, needle", BAD)
def test_invalid_configs_exit_2_naming_the_field(tmp_path, capsys, data, needle):
    path = write(tmp_path, data)
    assert main(["validate", path]) == 2
    assert needle in capsys.readouterr().err
    # run accepts exactly what validate accepts
    assert main(["run", path, "--output-dir", str(tmp_path / "o")]) == 2
    with pytest.raises(ConfigError):
        parse_config(data)


def test_missing_file_and_bad_json(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["run", missing]) == 2
    assert missing in capsys.readouterr().err
    (tmp_path / "bad.json").write_text("{")
    assert main(["validate", str(tmp_path / "bad.json")]) == 2


def test_minimal_compare_run(tmp_path):
    assert main(["run", write(tmp_path, MINIMAL), "--output-dir", str(tmp_path / "out")]) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "results.csv")))
    assert len(rows) == 9
    assert json.loads((tmp_path / "out" / "summary.json").read_text())


def test_rerun_is_byte_identical(tmp_path):
    path = write(tmp_path, MINIMAL)
    main(["run", path, "--output-dir", str(tmp_path / "a")])
    main(["run", path, "--output-dir", str(tmp_path / "b"), "--threads", "2"])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_prop3_skip_path(tmp_path):
    cfg = {"graph": {"size": 10, "seed": 1}, "experiment": {"type": "prop3", "replicates": 1,
                                                             "prop3": {"target_r0": 1.5}}}
    assert main(["run", write(tmp_path, cfg), "--output-dir", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["reports"][0]["status"] == "SkippedPreconditionFailed"


def test_simulate_only_and_r0_sweep(tmp_path):
    sim = {"graph": {"size": 8, "seed": 2}, "simulation": {"horizon": 50},
           "experiment": {"type": "simulate_only", "replicates": 2}, "output": {"trajectory": "traj.csv"}}
    assert main(["run", write(tmp_path, sim), "--output-dir", str(tmp_path / "s")]) == 0
    assert len(list(csv.reader(open(tmp_path / "s" / "results.csv")))) == 3
    assert (tmp_path / "s" / "traj.csv").read_text().startswith("t,node,S,E,I,R")
    sweep = {"graph": {"size": 12, "seed": 2}, "simulation": {"horizon": 200},
             "experiment": {"type": "r0_sweep", "replicates": 3, "families": ["erdos_renyi", "waxman"]}}
    assert main(["run", write(tmp_path, sweep, "r.json"), "--output-dir", str(tmp_path / "r"), "--threads", "1"]) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert set(report["spearman"]) == {"erdos_renyi", "waxman"}


def test_runtime_failure_exits_1(tmp_path, capsys):
    # tiny tau with an explicit dt of 1 violates the diffusion step bound
    cfg = {"graph": {"size": 8}, "diffusion": {"tau": 0.01}, "simulation": {"dt": 1.0},
           "experiment": {"type": "simulate_only", "replicates": 1}}
    assert main(["run", write(tmp_path, cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "run failed" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "flowredirect", "validate", write(tmp_path, {})],
                         capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["graph"]["size"] == 30
