import math

import numpy as np
import pytest

pytestmark = pytest.mark.filterwarnings("ignore::qminimax.codec.BlockingRegimeWarning")

from qminimax.cli import main
from qminimax.codec import CodecConfig, decode, encode
from qminimax.sequence_model import sample_observation


def test_blocks_command(capsys):
    assert main(["blocks", "--epsilon", str(math.exp(-5))]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "k,start,size"
    assert lines[1:5] == ["1,1,5", "2,6,6", "3,12,7", "4,19,8"]


def test_encode_decode_round_trip(tmp_path, capsys):
    theta = np.zeros(100)
    theta[:4] = [0.2, -0.1, 0.05, 0.02]
    src = tmp_path / "theta.csv"
    src.write_text(",".join(map(str, theta)))
    blob, est = tmp_path / "msg.bin", tmp_path / "est.csv"
    args = ["encode", "--input", str(src), "--epsilon", "0.1", "--budget", "16", "--seed", "5",
            "--sample-seed", "2", "--c0", "3", "--out", str(blob)]
    assert main(args) == 0
    first = blob.read_bytes()
    assert main(args) == 0
    assert blob.read_bytes() == first
    assert main(["decode", "--in", str(blob), "--out", str(est)]) == 0
    values = np.loadtxt(est)
    assert values.shape == (100,)
    # same numbers as the library path
    Y = sample_observation(theta, 0.1, 2)
    direct = decode(encode(Y, CodecConfig(0.1, 16, seed=5, c0=3.0))).coefficients
    np.testing.assert_array_equal(values, direct)


def test_decode_reports_corrupt_input(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nonsense")
    assert main(["decode", "--in", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
    assert "error:" in capsys.readouterr().err


def test_bounds_command(capsys):
    assert main(["bounds", "--m", "1", "--c", str(math.pi), "--epsilon", "0.01", "--budget", "10"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header == "pinsker,insufficient,variational,regime,risk_upper_bound"
    P, Q, V, regime, upper = row.split(",")
    assert float(P) == pytest.approx(0.908560296416)
    assert float(Q) == pytest.approx(1.0)
    assert V == "" and regime == "sufficient"
    assert float(upper) == pytest.approx(0.0119574338206)


def test_simulate_command(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    out = tmp_path / "risk.csv"
    cfg.write_text("n = 100\nbudgets = 6\nreplicates = 3\nseed = 1\nc0 = 4\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--threads", "2"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,budget,estimator,risk,stderr,replicates"
    assert len(lines) == 4
