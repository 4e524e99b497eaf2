"""Monte Carlo risk curves for quantized and unquantized estimators."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .blocks import build_blocks
from .codec import CodecConfig, EnumerationCapError, blockwise_james_stein, quantized_estimate
from .rng import derive_seed
from .sequence_model import (
    DEFAULT_QUADRATURE_POINTS,
    damped_doppler,
    fourier_coefficients,
    sample_observation,
    sample_size,
    simpson_weights,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("james-stein", "quantized", "projection-oracle")
BUILTIN_TARGETS = {"doppler": damped_doppler}
CSV_HEADER = ("n", "budget", "estimator", "risk", "stderr", "replicates")
UNQUANTIZED = "inf"


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    target: str = "doppler"
    n_values: tuple[int, ...] = (500, 5000, 50000)
    budgets: tuple[int, ...] = (5, 30)
    replicates: int = 200
    seed: int = 0
    estimators: tuple[str, ...] = ESTIMATORS
    out: str | None = None
    m0: float = 1.0
    c0: float = 1.0
    max_codebook_log2: int = 26

    def __post_init__(self):
        if any(n < 4 for n in self.n_values):
            raise ValueError("every n must be at least 4")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if any(int(b) != b or b < 1 for b in self.budgets):
            raise ValueError("budgets must be positive integers")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")


_LIST_KEYS = {"n": "n_values", "n_values": "n_values", "budgets": "budgets", "estimators": "estimators"}
_SCALAR_KEYS = {
    "target": str,
    "replicates": int,
    "seed": int,
    "out": str,
    "m0": float,
    "c0": float,
    "max_codebook_log2": int,
}


def parse_config(text: str) -> ExperimentConfig:
    """Read flat ``key = value`` lines; lists are comma separated, ``#`` starts a comment."""
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _LIST_KEYS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            name = _LIST_KEYS[key]
            kwargs[name] = tuple(items) if name == "estimators" else tuple(int(v) for v in items)
        elif key in _SCALAR_KEYS:
            kwargs[key] = _SCALAR_KEYS[key](value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass(frozen=True)
class RiskRecord:
    n: int
    budget: int | None  # None for unquantized estimators
    estimator: str
    risk: float
    stderr: float
    replicates: int

    @property
    def budget_label(self) -> str:
        return UNQUANTIZED if self.budget is None else str(self.budget)


@dataclass(frozen=True)
class Target:
    """True coefficients theta_1..theta_J and the total energy sum_j theta_j^2 (including j > J)."""

    coefficients: np.ndarray
    energy: float

    def tail(self, N: int) -> float:
        """Energy beyond coordinate N, computed as a difference so nothing is truncated."""
        head = math.fsum((self.coefficients[:N] ** 2).tolist())
        return max(0.0, self.energy - head)


@lru_cache(maxsize=8)
def builtin_target(name: str, J: int, points: int = DEFAULT_QUADRATURE_POINTS) -> Target:
    if name not in BUILTIN_TARGETS:
        raise ValueError(f"unknown builtin target {name!r}; choose from {sorted(BUILTIN_TARGETS)}")
    f = BUILTIN_TARGETS[name]
    theta = fourier_coefficients(f, J, points)
    t = np.linspace(0.0, 1.0, points)
    energy = float(np.sum(simpson_weights(points) * f(t) ** 2))
    return Target(theta, energy)


def load_target(config: ExperimentConfig) -> Target:
    if config.target in BUILTIN_TARGETS:
        J = 4 * sample_size(1.0 / math.sqrt(max(config.n_values)))
        return builtin_target(config.target, J)
    theta = np.loadtxt(config.target, delimiter=",", ndmin=1)
    return Target(theta, math.fsum((theta**2).tolist()))


def projection_oracle_cutoff(theta, epsilon: float, N: int) -> int:
    """Truncation index k <= N minimising k eps^2 + sum_{j>k} theta_j^2."""
    head = np.asarray(theta[:N], dtype=float) ** 2
    # tail[k] = sum_{j>k} head_j for k = 0..N
    tail = np.concatenate([np.cumsum(head[::-1])[::-1], [0.0]])
    risk = epsilon**2 * np.arange(N + 1) + tail
    return int(np.argmin(risk))


def _cells(config: ExperimentConfig):
    cells = []
    for est in config.estimators:
        budgets = config.budgets if est == "quantized" else (None,)
        cells.extend((est, b) for b in budgets)
    return cells


def _replicate_losses(config: ExperimentConfig, target: Target, n: int, r: int, cells) -> list[float]:
    epsilon = 1.0 / math.sqrt(n)
    N = build_blocks(epsilon).N
    theta = np.zeros(N)
    k = min(N, target.coefficients.size)
    theta[:k] = target.coefficients[:k]
    tail = target.tail(N)
    Y = sample_observation(theta, epsilon, derive_seed(config.seed, n, r))

    losses = []
    for est, budget in cells:
        if est == "james-stein":
            estimate = blockwise_james_stein(Y, epsilon)
        elif est == "projection-oracle":
            cut = projection_oracle_cutoff(theta, epsilon, N)
            estimate = np.zeros(N)
            estimate[:cut] = Y.values[:cut]
        else:
            cfg = CodecConfig(
                epsilon,
                budget,
                derive_seed(config.seed, n, budget, r),
                config.m0,
                config.c0,
                config.max_codebook_log2,
            )
            try:
                estimate = quantized_estimate(Y, cfg)
            except EnumerationCapError as exc:
                raise ExperimentError(f"cell n={n}, budget={budget}, replicate {r}: {exc}") from exc
        diff = estimate - theta
        losses.append(math.fsum((diff * diff).tolist()) + tail)
    return losses


def _summarize(values: list[float]) -> tuple[float, float]:
    R = len(values)
    mean = math.fsum(values) / R
    if R < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (R - 1)
    return mean, math.sqrt(var / R)


def run_experiment(config: ExperimentConfig, threads: int = 1, target: Target | None = None) -> list[RiskRecord]:
    """Mean squared error and its standard error for every (n, estimator, budget) cell.

    Every estimator in a replicate sees the same observation, so differences
    between cells are paired. Results do not depend on ``threads``.
    """
    if target is None:
        target = load_target(config)
    cells = _cells(config)
    for n in config.n_values:
        for est, budget in cells:
            if budget is not None and budget < math.log(math.sqrt(n)) ** 3:
                log.info("n=%d budget=%d is below log^3(1/eps); blocks are coarse for this budget", n, budget)

    jobs = [(n, r) for n in config.n_values for r in range(config.replicates)]

    def work(job):
        return _replicate_losses(config, target, job[0], job[1], cells)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    records = []
    for n in config.n_values:
        rows = [res for (jn, _), res in zip(jobs, results) if jn == n]
        for c, (est, budget) in enumerate(cells):
            mean, se = _summarize([row[c] for row in rows])
            records.append(RiskRecord(n, budget, est, mean, se, config.replicates))
    return records


def _sort_key(rec: RiskRecord):
    return (rec.estimator, math.inf if rec.budget is None else rec.budget, rec.n)


def format_records(records) -> str:
    lines = [",".join(CSV_HEADER)]
    for rec in sorted(records, key=_sort_key):
        lines.append(
            f"{rec.n},{rec.budget_label},{rec.estimator},{rec.risk:.12g},{rec.stderr:.12g},{rec.replicates}"
        )
    return "\n".join(lines) + "\n"


def emit_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_records(records))


def parse_csv(path) -> list[RiskRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [
            RiskRecord(
                int(row["n"]),
                None if row["budget"] == UNQUANTIZED else int(row["budget"]),
                row["estimator"],
                float(row["risk"]),
                float(row["stderr"]),
                int(row["replicates"]),
            )
            for row in reader
        ]
