"""Per-round cost records for online runs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = (
    "round",
    "alg_cost",
    "frac_loss",
    "bench_cost",
    "cum_regret",
    "explore",
    "mistake",
    "failed",
    "opened",
)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


@dataclass
class RegretLedger:
    """Round-by-round algorithm cost, fractional loss and benchmark cost.

    ``bench_cost`` is the per-round cost of the fixed comparator (NaN when no
    benchmark was supplied). ``frac_loss`` is NaN for algorithms without a
    fractional iterate.
    """

    meta: dict = field(default_factory=dict)
    alg_cost: list = field(default_factory=list)
    frac_loss: list = field(default_factory=list)
    bench_cost: list = field(default_factory=list)
    explore: list = field(default_factory=list)
    mistake: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    opened: list = field(default_factory=list)

    def record(self, alg_cost: float, *, frac_loss: float = math.nan, bench_cost: float = math.nan,
               explore: bool = False, mistake: bool = False, failed: bool = False, opened: int = 0) -> None:
        self.alg_cost.append(float(alg_cost))
        self.frac_loss.append(float(frac_loss))
        self.bench_cost.append(float(bench_cost))
        self.explore.append(bool(explore))
        self.mistake.append(bool(mistake))
        self.failed.append(bool(failed))
        self.opened.append(int(opened))

    def __len__(self) -> int:
        return len(self.alg_cost)

    def set_benchmark(self, per_round) -> None:
        per_round = [float(v) for v in per_round]
        if len(per_round) != len(self):
            raise ValueError(f"benchmark has {len(per_round)} rounds, ledger has {len(self)}")
        self.bench_cost = per_round

    def column(self, name: str) -> np.ndarray:
        if name == "round":
            return np.arange(len(self))
        if name == "cum_regret":
            return np.cumsum(self.column("alg_cost") - self.column("bench_cost"))
        return np.asarray(getattr(self, name))

    def average_cost(self, which: str = "alg_cost") -> float:
        return float(np.mean(self.column(which)))

    def average_regret(self, alpha: float = 1.0, which: str = "alg_cost") -> float:
        """``mean(cost_t - alpha * bench_t)``."""
        return float(np.mean(self.column(which) - alpha * self.column("bench_cost")))

    def running_average_regret(self, alpha: float = 1.0, which: str = "alg_cost") -> np.ndarray:
        diff = self.column(which) - alpha * self.column("bench_cost")
        return np.cumsum(diff) / np.arange(1, len(diff) + 1)

    def rows(self):
        cols = [self.column(c) for c in COLUMNS]
        for vals in zip(*cols):
            yield [_fmt(v) for v in vals]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            w.writerows(self.rows())

    @classmethod
    def from_csv(cls, path: str | Path, meta: dict | None = None) -> "RegretLedger":
        led = cls(meta=dict(meta or {}))
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                led.record(
                    float(row["alg_cost"]),
                    frac_loss=float(row["frac_loss"]),
                    bench_cost=float(row["bench_cost"]),
                    explore=row["explore"] == "1",
                    mistake=row["mistake"] == "1",
                    failed=row["failed"] == "1",
                    opened=int(row["opened"]),
                )
        return led
