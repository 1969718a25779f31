"""Time series of run diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("iter", "samples", "wall_ms", "z_norm", "exact_grad_norm",
               "upper_loss", "delta_y", "delta_tracker")


@dataclass
class TraceRow:
    iter: int
    samples: int
    wall_ms: float
    z_norm: float
    exact_grad_norm: float | None = None
    upper_loss: float | None = None
    delta_y: float | None = None
    delta_tracker: float | None = None


class Trace:
    """Append-only diagnostics log; iterations strictly increase and the
    cumulative sample count never decreases."""

    def __init__(self):
        self.rows: list[TraceRow] = []

    def append(self, row: TraceRow):
        if self.rows:
            last = self.rows[-1]
            if row.iter <= last.iter:
                raise ValueError(f"trace iterations must strictly increase "
                                 f"({row.iter} after {last.iter})")
            if row.samples < last.samples:
                raise ValueError(f"cumulative samples decreased "
                                 f"({row.samples} after {last.samples})")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, k):
        return self.rows[k]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def final(self) -> TraceRow:
        return self.rows[-1]

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        tr = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"unexpected trace header in {path}: "
                                 f"{reader.fieldnames}")
            for rec in reader:
                tr.append(TraceRow(
                    iter=int(rec["iter"]),
                    samples=int(rec["samples"]),
                    wall_ms=float(rec["wall_ms"]),
                    z_norm=float(rec["z_norm"]),
                    exact_grad_norm=_parse(rec["exact_grad_norm"]),
                    upper_loss=_parse(rec["upper_loss"]),
                    delta_y=_parse(rec["delta_y"]),
                    delta_tracker=_parse(rec["delta_tracker"]),
                ))
        return tr


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse(s: str) -> float | None:
    return None if s == "" else float(s)
