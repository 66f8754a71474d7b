"""Temperature traces: the common output of the RC solver and the DSS model."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class TemperatureTrace:
    """Per-node temperatures in degC, one row per sample time."""

    times: np.ndarray
    node_ids: tuple[str, ...]
    values: np.ndarray  # shape (len(times), len(node_ids))
    chiplet_nodes: frozenset[str] | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "node_ids", tuple(self.node_ids))
        if values.shape != (len(times), len(self.node_ids)):
            raise ValueError(f"values shape {values.shape} does not match {len(times)} times x {len(self.node_ids)} nodes")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("trace times must be strictly increasing")

    def column(self, node_id: str) -> np.ndarray:
        return self.values[:, self.node_ids.index(node_id)]

    def nearest_index(self, t: float) -> int:
        if not self.times[0] - 1e-9 <= t <= self.times[-1] + 1e-9:
            raise ValueError(f"time {t} outside trace range [{self.times[0]}, {self.times[-1]}]")
        return int(np.argmin(np.abs(self.times - t)))

    def max_abs_diff(self, other: "TemperatureTrace") -> float:
        if self.node_ids != other.node_ids or not np.allclose(self.times, other.times, rtol=0, atol=1e-9):
            raise ValueError("traces are not on the same nodes and time grid")
        return float(np.max(np.abs(self.values - other.values)))

    def write_csv(self, path: str | Path) -> None:
        # repr gives the shortest text that reads back to the same double
        table = np.column_stack([self.times, self.values]).tolist()
        with open(path, "w") as fh:
            fh.write(",".join(["time_s", *self.node_ids]) + "\n")
            fh.writelines(",".join(map(repr, row)) + "\n" for row in table)


def read_trace_csv(path: str | Path) -> TemperatureTrace:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0][0] != "time_s":
        raise ValueError(f"{path}: header must start with 'time_s'")
    header = rows[0]
    data = []
    for lineno, r in enumerate(rows[1:], 2):
        if len(r) != len(header):
            raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(r)}")
        data.append([float(v) for v in r])
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return TemperatureTrace(times=arr[:, 0], node_ids=tuple(header[1:]), values=arr[:, 1:])


def output_times(end_time: float, dt: float, start: float = 0.0) -> np.ndarray:
    """Sample instants start, start+dt, ... not exceeding end_time."""
    n = int(np.floor((end_time - start) / dt + 1e-9))
    return start + dt * np.arange(n + 1)
