import math

import numpy as np
import pytest

from qminimax.harness import (
    CSV_HEADER,
    ExperimentConfig,
    ExperimentError,
    RiskRecord,
    Target,
    builtin_target,
    emit_csv,
    format_records,
    load_target,
    parse_config,
    parse_csv,
    projection_oracle_cutoff,
    run_experiment,
)

SMALL = dict(n_values=(100, 400), budgets=(4, 12), replicates=6, seed=3, c0=4.0)


def test_parse_config():
    cfg = parse_config(
        """
        # a comment
        target = doppler
        n = 500, 5000
        budgets = 5,30
        replicates = 20   # trailing comment
        seed = 7
        estimators = james-stein, quantized
        m0 = 1.5
        c0 = 4
        out = risk.csv
        """
    )
    assert cfg.n_values == (500, 5000)
    assert cfg.budgets == (5, 30)
    assert cfg.replicates == 20 and cfg.seed == 7
    assert cfg.estimators == ("james-stein", "quantized")
    assert (cfg.m0, cfg.c0, cfg.out) == (1.5, 4.0, "risk.csv")


@pytest.mark.parametrize(
    "text",
    ["colour = red", "no equals sign", "n = 2", "replicates = 0", "budgets = 0", "estimators = lasso"],
)
def test_parse_config_rejects(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_zero_signal_james_stein_beats_no_shrinkage(tmp_path):
    path = tmp_path / "zero.csv"
    path.write_text(",".join(["0"] * 10))
    cfg = ExperimentConfig(target=str(path), n_values=(400,), replicates=30, estimators=("james-stein",))
    (rec,) = run_experiment(cfg)
    assert rec.budget is None and rec.estimator == "james-stein"
    assert 0 < rec.risk < 1.0  # identity estimator has risk N eps^2 = 1


def test_identical_config_gives_identical_bytes():
    cfg = ExperimentConfig(**SMALL)
    a = format_records(run_experiment(cfg))
    b = format_records(run_experiment(cfg))
    c = format_records(run_experiment(cfg, threads=3))
    assert a == b == c
    assert format_records(run_experiment(ExperimentConfig(**{**SMALL, "seed": 4}))) != a


def test_records_cover_every_cell_and_are_consistent():
    records = run_experiment(ExperimentConfig(**SMALL))
    keys = {(r.n, r.estimator, r.budget) for r in records}
    assert len(keys) == len(records) == 2 * 4
    for r in records:
        assert r.risk >= 0 and r.stderr >= 0 and r.replicates == 6


def test_common_observation_across_estimators():
    # with one replicate every estimator sees the same draw, so re-running a
    # subset of estimators reproduces the same numbers
    both = run_experiment(ExperimentConfig(**{**SMALL, "estimators": ("james-stein", "quantized")}))
    js = run_experiment(ExperimentConfig(**{**SMALL, "estimators": ("james-stein",)}))
    pick = {(r.n, r.estimator, r.budget): r.risk for r in both}
    for r in js:
        assert pick[(r.n, r.estimator, r.budget)] == r.risk


def test_csv_round_trip(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"

    one = [RiskRecord(500, 5, "quantized", 0.0123, 0.0004, 200)]
    emit_csv(one, path)
    assert len(path.read_text().splitlines()) == 2
    assert parse_csv(path) == one

    recs = [
        RiskRecord(5000, None, "james-stein", 0.00775565665918, 0.000152510565294, 200),
        RiskRecord(500, 30, "quantized", 0.0287631149981, 0.000671082591415, 200),
        RiskRecord(500, 5, "quantized", 0.0539956053216, 0.000997911497205, 200),
    ]
    emit_csv(recs, path)
    parsed = parse_csv(path)
    assert parsed == sorted(recs, key=lambda r: (r.estimator, math.inf if r.budget is None else r.budget, r.n))
    assert [r.budget for r in parsed] == [None, 5, 30]


def test_csv_rows_use_twelve_significant_digits():
    text = format_records([RiskRecord(500, None, "james-stein", 1 / 3, 2 / 3, 10)])
    assert text.splitlines()[1] == "500,inf,james-stein,0.333333333333,0.666666666667,10"


def test_projection_oracle_cutoff_matches_brute_force():
    rng = np.random.default_rng(1)
    theta = rng.standard_normal(50) / np.arange(1, 51)
    eps = 0.1
    risks = [k * eps**2 + np.sum(theta[k:] ** 2) for k in range(51)]
    assert projection_oracle_cutoff(theta, eps, 50) == int(np.argmin(risks))


def test_builtin_target_tail_accounting():
    target = builtin_target("doppler", 4 * 5000)
    head = float(np.sum(target.coefficients**2))
    # Parseval: coefficients up to J carry almost all of the energy
    assert 0 <= target.energy - head < 1e-4
    assert target.tail(500) == pytest.approx(target.energy - np.sum(target.coefficients[:500] ** 2), abs=1e-15)
    assert target.tail(500) > target.tail(5000) > 0


def test_coefficient_file_target(tmp_path):
    path = tmp_path / "theta.csv"
    path.write_text("0.5\n0.25\n0.125\n")
    target = load_target(ExperimentConfig(target=str(path), n_values=(4,)))
    assert target.energy == pytest.approx(0.25 + 0.0625 + 0.015625)
    assert Target(np.array([1.0, 1.0]), 2.0).tail(1) == 1.0


def test_enumeration_cap_identifies_the_cell():
    cfg = ExperimentConfig(n_values=(400,), budgets=(40,), replicates=1, estimators=("quantized",), c0=4.0,
                           max_codebook_log2=6)
    with pytest.raises(ExperimentError, match="n=400, budget=40"):
        run_experiment(cfg)
