"""Discrete state-space model by zero-order hold.

For M = C^-1 G and a power vector held constant over one period Ts,

    T[k+1] = A T[k] + B p[k],   A = exp(M Ts),   B = M^-1 (A - I) C^-1 E,

which is exact at the sample instants. B is obtained from the exponential
of the augmented matrix [[M, C^-1 E], [0, 0]] Ts, whose upper-right block is
the same integral without forming M^-1 explicitly. B maps per-power-block
watts directly, so a step costs one N x N and one N x P product.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .rc import RCModel
from .traces import TemperatureTrace, output_times
from .workload import PowerTrace

DSS_FORMAT_VERSION = 1
DEFAULT_TS = 0.01
ALIGN_TOL = 1e-9


class DSSError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DSSModel:
    A: np.ndarray
    B: np.ndarray
    Ts: float
    node_ids: tuple[str, ...]
    power_ids: tuple[str, ...]
    ambient: float
    model_fingerprint: str = ""
    chiplet_nodes: frozenset[str] = frozenset()

    def __post_init__(self):
        n, p = len(self.node_ids), len(self.power_ids)
        if self.A.shape != (n, n) or self.B.shape != (n, p):
            raise ValueError(f"A {self.A.shape} / B {self.B.shape} do not match {n} nodes and {p} power blocks")
        if not self.Ts > 0:
            raise ValueError("Ts must be > 0")


def discretize(model: RCModel, Ts: float = DEFAULT_TS) -> DSSModel:
    if not Ts > 0:
        raise ValueError("Ts must be > 0")
    if not np.any(model.g_conv > 0):
        raise DSSError("model has no convection; M is singular")
    n, p = model.n_nodes, len(model.power_ids)
    inv_c = 1.0 / model.C
    aug = np.zeros((n + p, n + p))
    aug[:n, :n] = model.G.toarray() * inv_c[:, None]
    aug[:n, n:] = model.E.toarray() * inv_c[:, None]
    phi = expm(aug * Ts)
    A = np.ascontiguousarray(phi[:n, :n])
    B = np.ascontiguousarray(phi[:n, n:])
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DSSError("matrix exponential did not produce finite values")
    return DSSModel(
        A=A,
        B=B,
        Ts=float(Ts),
        node_ids=tuple(model.node_ids),
        power_ids=tuple(model.power_ids),
        ambient=model.ambient,
        model_fingerprint=model.fingerprint(),
        chiplet_nodes=frozenset(nd.id for nd in model.nodes if nd.is_chiplet),
    )


def step(dss: DSSModel, state: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """One ZOH step on the rise over ambient."""
    state = np.asarray(state, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if state.shape != (len(dss.node_ids),):
        raise ValueError(f"state has shape {state.shape}, expected ({len(dss.node_ids)},)")
    if powers.shape != (len(dss.power_ids),):
        raise ValueError(f"powers has shape {powers.shape}, expected ({len(dss.power_ids)},)")
    return dss.A @ state + dss.B @ powers


def spectral_radius(A: np.ndarray, iters: int = 500, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral radius of A."""
    rng = np.random.default_rng(seed)
    v = rng.random(A.shape[0]) + 0.1
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = A @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        est = nrm
        v = w / nrm
    return float(est)


def _step_inputs(dss: DSSModel, trace: PowerTrace, n_steps: int) -> np.ndarray:
    col = {pid: k for k, pid in enumerate(dss.power_ids)}
    unknown = [pid for pid in trace.block_ids if pid not in col]
    if unknown:
        raise KeyError(f"power trace references unknown power blocks: {unknown[:5]}")
    for t in trace.times:
        k = round(t / dss.Ts)
        if abs(t - k * dss.Ts) > ALIGN_TOL:
            raise ValueError(f"power change at t={t!r} s is not a multiple of Ts={dss.Ts!r} s")
    P = np.zeros((n_steps, len(dss.power_ids)))
    starts = [round(t / dss.Ts) for t in trace.times] + [n_steps]
    cols = [col[pid] for pid in trace.block_ids]
    for r, row in enumerate(trace.values):
        a, b = starts[r], min(starts[r + 1], n_steps)
        if a < b:
            P[a:b][:, cols] = row
    return P


def run_dss(dss: DSSModel, trace: PowerTrace, t_init=None) -> TemperatureTrace:
    """Step the DSS model across a Ts-aligned power trace, one row per Ts."""
    times = output_times(trace.end_time, dss.Ts)
    n_steps = len(times) - 1
    P = _step_inputs(dss, trace, n_steps)
    U = P @ dss.B.T  # (n_steps, N) input contributions
    n = len(dss.node_ids)
    out = np.empty((n_steps + 1, n))
    out[0] = 0.0 if t_init is None else np.asarray(t_init, dtype=float) - dss.ambient
    A = dss.A
    for k in range(n_steps):
        out[k + 1] = A @ out[k] + U[k]
    return TemperatureTrace(
        times=times,
        node_ids=dss.node_ids,
        values=out + dss.ambient,
        chiplet_nodes=dss.chiplet_nodes,
    )


def fixed_point(dss: DSSModel, powers: np.ndarray) -> np.ndarray:
    """Rise T* with T* = A T* + B p."""
    n = len(dss.node_ids)
    return np.linalg.solve(np.eye(n) - dss.A, dss.B @ np.asarray(powers, dtype=float))


# ---------------------------------------------------------------------------
# persistence


def _f(x: float) -> str:
    return format(float(x), ".17g")


def dumps_dss(dss: DSSModel) -> str:
    out = io.StringIO()
    w = out.write
    w("# mfit discrete state-space model\n")
    w(f"format_version = {DSS_FORMAT_VERSION}\n")
    w(f"ts_s = {_f(dss.Ts)}\n")
    w(f"ambient_c = {_f(dss.ambient)}\n")
    w(f"model_fingerprint = {dss.model_fingerprint}\n")
    w("[nodes]\n")
    for nid in dss.node_ids:
        w(f"{nid},{int(nid in dss.chiplet_nodes)}\n")
    w("[power_blocks]\n")
    for pid in dss.power_ids:
        w(f"{pid}\n")
    for name, mat in (("A", dss.A), ("B", dss.B)):
        w(f"[{name}]\n")
        for row in mat:
            w(",".join(_f(v) for v in row) + "\n")
    return out.getvalue()


def save_dss(dss: DSSModel, path: str | Path) -> None:
    Path(path).write_text(dumps_dss(dss))


def loads_dss(text: str) -> DSSModel:
    meta: dict[str, str] = {}
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
        else:
            sections[current].append(line)
    if int(meta.get("format_version", -1)) != DSS_FORMAT_VERSION:
        raise ValueError(f"unsupported DSS format version {meta.get('format_version')}")
    nodes = [ln.rsplit(",", 1) for ln in sections.get("nodes", [])]
    n = len(nodes)
    power_ids = tuple(sections.get("power_blocks", []))

    def matrix(name, cols):
        rows = sections.get(name, [])
        if len(rows) != n:
            raise ValueError(f"[{name}] has {len(rows)} rows, expected {n}")
        if cols == 0:
            return np.zeros((n, 0))
        return np.array([[float(v) for v in r.split(",")] for r in rows]).reshape(n, cols)

    return DSSModel(
        A=matrix("A", n),
        B=matrix("B", len(power_ids)),
        Ts=float(meta["ts_s"]),
        node_ids=tuple(nid for nid, _ in nodes),
        power_ids=power_ids,
        ambient=float(meta["ambient_c"]),
        model_fingerprint=meta.get("model_fingerprint", ""),
        chiplet_nodes=frozenset(nid for nid, flag in nodes if flag == "1"),
    )


def load_dss(path: str | Path) -> DSSModel:
    return loads_dss(Path(path).read_text())
