"""Power traces: CSV ingest and the synthetic stress / PRBS / cooldown workload.

Power CSV layout::

    time_s,<power_block_id>,...
    0,3.0,...
    1.5,0.0,...
    # end_time_s=55

Each row is a change instant; its values hold until the next row. The
footer comment closing the trace is mandatory.

The PRBS phase uses a PRBS-31 Fibonacci LFSR (taps 31 and 28, polynomial
x^31 + x^28 + 1). Its 31-bit start state is taken from the BLAKE2b digest of
``"<seed>:<source name>"`` so every source gets its own reproducible bit
stream on every platform.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PowerTrace:
    """Piecewise-constant per-power-block heat generation (W)."""

    times: np.ndarray
    block_ids: tuple[str, ...]
    values: np.ndarray  # (len(times), len(block_ids))
    end_time: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float).reshape(len(times), len(self.block_ids))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "block_ids", tuple(self.block_ids))
        if len(times) == 0:
            raise ValueError("power trace has no rows")
        if times[0] != 0.0:
            raise ValueError("power trace must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("change times must be strictly increasing")
        if not self.end_time > times[-1]:
            raise ValueError("end time must be after the last change time")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("powers must be finite and >= 0")

    def __eq__(self, other):
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return (
            self.block_ids == other.block_ids
            and self.end_time == other.end_time
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    def segments(self) -> Iterator[tuple[float, float, np.ndarray]]:
        """(start, stop, powers) for every constant-power interval."""
        stops = list(self.times[1:]) + [self.end_time]
        for t0, t1, row in zip(self.times, stops, self.values):
            yield float(t0), float(t1), row

    def power_at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(k, 0)]

    def total_energy(self) -> float:
        return float(sum((t1 - t0) * row.sum() for t0, t1, row in self.segments()))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["time_s", *self.block_ids])
        for t, row in zip(self.times, self.values):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
        out.write(f"# end_time_s={float(self.end_time)!r}\n")
        return out.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def constant_trace(block_ids: Sequence[str], power: float, end_time: float) -> PowerTrace:
    return PowerTrace(np.array([0.0]), tuple(block_ids), np.full((1, len(block_ids)), float(power)), end_time)


def parse_power_csv(text: str, source: str = "<power csv>") -> PowerTrace:
    header = None
    times: list[float] = []
    rows: list[list[float]] = []
    end_time = None
    data_row = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.startswith("end_time_s"):
                try:
                    end_time = float(body.split("=", 1)[1])
                except (IndexError, ValueError):
                    raise TraceFormatError(f"{source}: line {lineno}: malformed end_time_s footer") from None
            continue
        fields = next(csv.reader([stripped]))
        if header is None:
            if fields[0] != "time_s":
                raise TraceFormatError(f"{source}: line {lineno}: header must start with 'time_s'")
            header = fields
            if len(set(header[1:])) != len(header) - 1:
                raise TraceFormatError(f"{source}: line {lineno}: duplicate power block ids in header")
            continue
        if end_time is not None:
            raise TraceFormatError(f"{source}: line {lineno}: data after end_time_s footer")
        data_row += 1
        where = f"{source}: line {lineno} (data row {data_row})"
        if len(fields) != len(header):
            raise TraceFormatError(f"{where}: expected {len(header)} fields, got {len(fields)}")
        try:
            t, *vals = (float(v) for v in fields)
        except ValueError:
            raise TraceFormatError(f"{where}: non-numeric field") from None
        if not times and t != 0.0:
            raise TraceFormatError(f"{where}: first change time must be 0")
        if times and t <= times[-1]:
            raise TraceFormatError(f"{where}: time {t} is not after {times[-1]}")
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise TraceFormatError(f"{where}: negative or non-finite power")
        times.append(t)
        rows.append(vals)
    if header is None:
        raise TraceFormatError(f"{source}: empty power trace")
    if not rows:
        raise TraceFormatError(f"{source}: power trace has no data rows")
    if end_time is None:
        raise TraceFormatError(f"{source}: missing '# end_time_s=<t>' footer")
    if not end_time > times[-1]:
        raise TraceFormatError(f"{source}: end_time_s {end_time} must exceed last change time {times[-1]}")
    return PowerTrace(np.array(times), tuple(header[1:]), np.array(rows), end_time)


def load_power_csv(path: str | Path) -> PowerTrace:
    return parse_power_csv(Path(path).read_text(), str(path))


# ---------------------------------------------------------------------------
# synthetic workload


@dataclass(frozen=True)
class SynthSpec:
    stress: float = 10.0
    prbs: float = 30.0
    cooldown: float = 15.0
    dwell: float = 0.1
    max_power: float = 3.0
    seed: int = 1

    def __post_init__(self):
        if min(self.stress, self.prbs, self.cooldown) < 0:
            raise ValueError("phase durations must be >= 0")
        if not self.dwell > 0:
            raise ValueError("dwell must be > 0")
        if not self.max_power > 0:
            raise ValueError("max_power must be > 0")


def _bits_in(duration: float, dwell: float, name: str) -> int:
    n = round(duration / dwell)
    if abs(duration / dwell - n) > 1e-9 * max(1, n):
        raise ValueError(f"{name} duration {duration} is not a multiple of dwell {dwell}")
    return int(n)


def prbs31_state(seed: int, name: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=8).digest()
    state = int.from_bytes(digest, "big") & 0x7FFFFFFF
    return state or 1


def prbs31_bits(state: int, n: int) -> np.ndarray:
    """n output bits of the x^31 + x^28 + 1 LFSR started from ``state``."""
    bits = np.empty(n, dtype=np.int8)
    s = state & 0x7FFFFFFF
    if s == 0:
        raise ValueError("LFSR state must be non-zero")
    for k in range(n):
        b = ((s >> 30) ^ (s >> 27)) & 1
        s = ((s << 1) | b) & 0x7FFFFFFF
        bits[k] = b
    return bits


def synth_wl1(
    spec: SynthSpec,
    sources: Sequence[str] | Mapping[str, Mapping[str, float]],
) -> PowerTrace:
    """Stress at full power, then per-source PRBS on/off, then all off.

    ``sources`` is either a list of power block ids (each driven on its own)
    or a mapping ``chiplet -> {power_block_id: share}`` where all power blocks
    of one chiplet toggle together and split ``max_power`` by share.
    """
    if isinstance(sources, Mapping):
        groups = {name: dict(shares) for name, shares in sources.items()}
    else:
        groups = {pid: {pid: 1.0} for pid in sources}
    block_ids = [pid for shares in groups.values() for pid in shares]
    if len(set(block_ids)) != len(block_ids):
        raise ValueError("a power block appears in more than one source")

    n_stress = _bits_in(spec.stress, spec.dwell, "stress")
    n_prbs = _bits_in(spec.prbs, spec.dwell, "prbs")
    n_cool = _bits_in(spec.cooldown, spec.dwell, "cooldown")
    n_total = n_stress + n_prbs + n_cool
    if n_total == 0:
        raise ValueError("workload has zero duration")

    col = {pid: k for k, pid in enumerate(block_ids)}
    grid = np.zeros((n_total, len(block_ids)))
    for name, shares in groups.items():
        bits = prbs31_bits(prbs31_state(spec.seed, name), n_prbs)
        for pid, share in shares.items():
            level = spec.max_power * share
            grid[:n_stress, col[pid]] = level
            grid[n_stress : n_stress + n_prbs, col[pid]] = bits * level

    keep = [0] + [k for k in range(1, n_total) if not np.array_equal(grid[k], grid[k - 1])]
    times = np.array([k * spec.dwell for k in keep])
    return PowerTrace(times, tuple(block_ids), grid[keep], n_total * spec.dwell)


def chiplet_sources(spec) -> dict[str, dict[str, float]]:
    """Group a package's power blocks by chiplet, sharing power by area."""
    out: dict[str, dict[str, float]] = {}
    for layer, b in spec.chiplets():
        areas = {pb.id: pb.size[0] * pb.size[1] for pb in b.power_blocks}
        total = sum(areas.values())
        if total > 0:
            out[f"{layer.name}/{b.name}"] = {pid: a / total for pid, a in areas.items()}
    return out
