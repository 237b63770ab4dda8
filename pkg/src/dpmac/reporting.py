"""Run artifacts: per-epoch metrics and the final privacy statement.

Metrics are written as CSV with a fixed column set so that two runs with the
same seed produce byte-identical files; anything time-dependent (wall clock)
stays out of the file and lives only on the in-memory summary.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

METRIC_COLUMNS = ("epoch", "step", "train_loss", "test_loss",
                  "test_accuracy", "epsilon")


@dataclass
class MetricsLog:
    """Ordered per-epoch evaluation rows plus run-level extras."""

    rows: list = field(default_factory=list)
    wall_time: float | None = None

    def append(self, epoch: int, step: int, train_loss: float,
               test_loss: float | None = None,
               test_accuracy: float | None = None,
               epsilon: float | None = None) -> None:
        self.rows.append({
            "epoch": epoch,
            "step": step,
            "train_loss": train_loss,
            "test_loss": test_loss,
            "test_accuracy": test_accuracy,
            "epsilon": epsilon,
        })

    def last(self) -> dict:
        if not self.rows:
            raise ValueError("no metrics recorded")
        return self.rows[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRIC_COLUMNS)
            for row in self.rows:
                writer.writerow([
                    _format_cell(row[c]) for c in METRIC_COLUMNS
                ])


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


@dataclass
class PrivacyReport:
    """Final accounting statement for one run.

    ``epsilon``/``best_order`` are None for non-private runs (sigma = 0):
    no noise means no finite guarantee, which must never be written as 0.
    """

    sigma: float
    delta: float
    sampling_rate: float
    steps: int
    epsilon: float | None
    best_order: float | None
    pca_sigma: float | None = None

    def to_json(self, path) -> None:
        payload = {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "sigma": self.sigma,
            "sampling_rate": self.sampling_rate,
            "steps": self.steps,
            "best_order": self.best_order,
            "pca_sigma": self.pca_sigma,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
