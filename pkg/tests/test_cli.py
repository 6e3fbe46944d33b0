import json
import math
import subprocess
import sys

import pytest

from narrowfront.channel import ChannelShape
from narrowfront.cli import main


def test_generate_is_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["generate", "--seed", "4", "--cells", "20", "--out", str(a)]) == 0
    assert main(["generate", "--seed", "4", "--cells", "20", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    shape = ChannelShape.load(str(a))
    assert len(shape.right) == 20 and len(shape.left) == 20


def test_flat_speed_is_sqrt_two(capsys):
    assert main(["speed", "--flat", "--flat-cells", "50", "--n-lam", "30"]) == 0
    out = capsys.readouterr().out
    c_plus = float(out.splitlines()[0].split("=")[1])
    assert c_plus == pytest.approx(math.sqrt(2), rel=1e-4)


def test_graph_writes_manifest(tmp_path):
    shape = tmp_path / "s.json"
    main(["generate", "--seed", "1", "--cells", "6", "--out", str(shape)])
    out = tmp_path / "out"
    assert main(["graph", "--shape", str(shape), "--cells", "3", "--out-dir", str(out)]) == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["outputs"] == ["graph.json", "measures.csv"]
    assert doc["config"]["cells"] == 3
    assert (out / "measures.csv").read_text().startswith("edge")
    assert (out / "run.log").exists()


def test_missing_input_exits_with_one(tmp_path):
    assert main(["graph", "--shape", str(tmp_path / "nope.json")]) == 1


def test_bad_usage_exits_with_two():
    r = subprocess.run([sys.executable, "-m", "narrowfront.cli", "speed", "--direction", "x"],
                       capture_output=True, text=True)
    assert r.returncode == 2


def test_print_config_uses_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"T": 12.0}))
    assert main(["--config", str(cfg), "--print-config", "solve-graph", "--flat"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["T"] == 12.0 and doc["flat"] is True


def test_console_script_is_installed():
    r = subprocess.run(["narrowfront", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "validate" in r.stdout
