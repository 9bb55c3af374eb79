import json
import subprocess
import sys

import pytest

from mcastrl.cli import main


def cfg(tmp_path, **hyper):
    h = {"episodes": 2, "pretrain_episodes": 2}
    h.update(hyper)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"hyper": h, "traffic": {"snapshots": 4}}))
    return str(p)


def test_pipeline(tmp_path, capsys):
    topo = str(tmp_path / "topo.json")
    c = cfg(tmp_path)
    assert main(["gen-topo", "--seed", "2", "--out", topo]) == 0
    assert json.loads(open(topo).read())["nodes"][13]["id"] == 13
    traffic = str(tmp_path / "traffic")
    assert main(["gen-traffic", "--config", c, "--topology", topo, "--out", traffic]) == 0
    assert len(list((tmp_path / "traffic").glob("snapshot_*.json"))) == 4
    warm = str(tmp_path / "pre.npz")
    assert main(["pretrain", "--config", c, "--topology", topo, "--traffic", traffic, "--out", warm]) == 0
    run = str(tmp_path / "run")
    assert main(["train", "--config", c, "--topology", topo, "--traffic", traffic,
                 "--warm", warm, "--out", run]) == 0
    assert (tmp_path / "run" / "tree.json").exists()
    report = tmp_path / "report.csv"
    assert main(["eval", "--config", c, "--topology", topo, "--traffic", traffic,
                 "--run", run, "--out", str(report)]) == 0
    algs = {line.split(",")[0] for line in report.read_text().splitlines()[1:]}
    assert algs == {"MADRL-MR", "KMB_bw", "KMB_delay", "KMB_loss"}
    base = tmp_path / "base.csv"
    assert main(["baseline", "--topology", topo, "--traffic", traffic, "--out", str(base),
                 "--src", "0", "--dst", "4", "5"]) == 0
    assert "KMB_loss" in base.read_text()


def test_missing_topology(tmp_path, capsys):
    assert main(["train", "--topology", str(tmp_path / "nope.json")]) == 1
    assert "nope.json" in capsys.readouterr().err
    assert main(["baseline"]) == 1
    assert "topology" in capsys.readouterr().err


def test_eval_without_run(tmp_path, capsys):
    topo = str(tmp_path / "t.json")
    main(["gen-topo", "--out", topo])
    assert main(["eval", "--topology", topo, "--config", cfg(tmp_path)]) == 1
    assert "--run" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"bogus": {}}))
    assert main(["gen-topo", "--config", str(p), "--out", str(tmp_path / "t.json")]) == 1


def test_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        main(["gen-topo", "--frobnicate"])
    assert exc.value.code == 2


def test_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mcastrl.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "gen-topo" in r.stdout
