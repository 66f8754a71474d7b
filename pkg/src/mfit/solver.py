"""Steady-state and transient solution of C dT/dt = G T + q.

Internally every temperature is a rise over ambient (K); traces and heat
maps are reported in degC. The transient integrator runs one segment per
constant-power interval of the power trace, so no step straddles a power
change. A sample that falls exactly on a change instant is the state at the
end of the earlier segment (left limit); the first row is the initial state.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .package import GEOM_TOL
from .rc import RCModel
from .traces import TemperatureTrace, output_times
from .workload import PowerTrace


class SingularModelError(ValueError):
    """The model has no path to ambient, so G is singular."""


class SolverError(RuntimeError):
    """The integrator failed; carries the last time it reached."""

    def __init__(self, message: str, last_good_time: float):
        super().__init__(f"{message} (last good time {last_good_time:.9g} s)")
        self.last_good_time = last_good_time


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-6
    atol: float = 1e-8
    max_step: float | None = None  # None: bounded by the trace segment
    output_dt: float = 0.01
    method: str = "BDF"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be > 0")
        if not self.output_dt > 0:
            raise ValueError("output_dt must be > 0")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be > 0")


_lu_cache: "weakref.WeakKeyDictionary[RCModel, object]" = weakref.WeakKeyDictionary()


def _factor(model: RCModel):
    lu = _lu_cache.get(model)
    if lu is None:
        if not np.any(model.g_conv > 0):
            raise SingularModelError("no convective boundary: G is singular and steady state is undefined")
        try:
            lu = splu(model.G.tocsc())
        except RuntimeError as exc:
            raise SingularModelError(f"conductance matrix is singular: {exc}") from exc
        _lu_cache[model] = lu
    return lu


def steady_rise(model: RCModel, powers, atol: float = 1e-8) -> np.ndarray:
    """Solve G T = -q for the rise over ambient (K)."""
    q = model.injection(powers)
    if np.any(q < 0):
        raise ValueError("powers must be >= 0")
    lu = _factor(model)
    rise = lu.solve(-q)
    # one step of iterative refinement keeps the residual at round-off level
    resid = model.G @ rise + q
    if np.max(np.abs(resid), initial=0.0) > atol:
        rise = rise + lu.solve(-resid)
        resid = model.G @ rise + q
    if not np.all(np.isfinite(rise)):
        raise SingularModelError("steady-state solve produced non-finite temperatures")
    return rise


def steady_state(model: RCModel, powers, atol: float = 1e-8) -> np.ndarray:
    """Per-node steady-state temperatures (degC) for constant powers."""
    return model.ambient + steady_rise(model, powers, atol)


def _segment_powers(model: RCModel, trace: PowerTrace) -> list[tuple[float, float, np.ndarray]]:
    unknown = [pid for pid in trace.block_ids if pid not in model.power_map]
    if unknown:
        raise KeyError(f"power trace references unknown power blocks: {unknown[:5]}")
    return [(t0, t1, model.injection(dict(zip(trace.block_ids, row)))) for t0, t1, row in trace.segments()]


def _initial_rise(model: RCModel, t_init) -> np.ndarray:
    if t_init is None:
        return np.zeros(model.n_nodes)
    t0 = np.asarray(t_init, dtype=float)
    if t0.shape != (model.n_nodes,):
        raise ValueError(f"t_init must have {model.n_nodes} entries")
    return t0 - model.ambient


def simulate(
    model: RCModel,
    trace: PowerTrace,
    config: SolverConfig = SolverConfig(),
    t_init: Sequence[float] | None = None,
) -> TemperatureTrace:
    """Integrate the network over a power trace with an adaptive stiff solver."""
    segments = _segment_powers(model, trace)
    inv_c = 1.0 / model.C
    M = sp.diags(inv_c) @ model.G
    jac = M.tocsc()
    y = _initial_rise(model, t_init)

    times = output_times(trace.end_time, config.output_dt)
    out = np.empty((len(times), model.n_nodes))
    out[0] = y
    filled = 1
    for t0, t1, q in segments:
        b = q * inv_c
        want = times[(times > t0 + 1e-12) & (times <= t1 + 1e-12)]
        if not np.any(q) and not np.any(y):
            # exact zero solution; keeps zero-power runs bitwise at ambient
            out[filled : filled + len(want)] = 0.0
            filled += len(want)
            continue
        t_eval = np.unique(np.concatenate([want, [t1]]))
        t_eval = np.clip(t_eval, t0, t1)
        max_step = t1 - t0 if config.max_step is None else min(config.max_step, t1 - t0)

        def rhs(t, T, b=b):
            return M @ T + b

        sol = solve_ivp(
            rhs,
            (t0, t1),
            y,
            method=config.method,
            t_eval=t_eval,
            rtol=config.rtol,
            atol=config.atol,
            jac=jac if config.method in ("BDF", "Radau") else jac.toarray(),
            max_step=max_step,
        )
        if sol.status != 0:
            last = float(sol.t[-1]) if sol.t.size else t0
            raise SolverError(f"integration failed: {sol.message}", last)
        y = sol.y[:, -1].copy()
        k = len(want)
        out[filled : filled + k] = sol.y[:, :k].T
        filled += k
    assert filled == len(times)
    return TemperatureTrace(
        times=times,
        node_ids=tuple(model.node_ids),
        values=out + model.ambient,
        chiplet_nodes=frozenset(n.id for n in model.nodes if n.is_chiplet),
    )


# ---------------------------------------------------------------------------
# heat maps


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Temperatures of one layer on its cell grid; NaN where there is no node.

    ``values[j, i]`` covers x in [x_edges[i], x_edges[i+1]] and y in
    [y_edges[j], y_edges[j+1]]; row 0 is the lowest y.
    """

    layer: str
    time: float
    x_edges: np.ndarray
    y_edges: np.ndarray
    values: np.ndarray

    def write_csv(self, path: str | Path) -> None:
        lines = []
        for row in self.values:
            lines.append(",".join("NA" if np.isnan(v) else repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    def filename(self) -> str:
        return f"{self.layer}_{self.time:g}.csv"


def _merged_edges(values) -> np.ndarray:
    out: list[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > GEOM_TOL:
            out.append(v)
    return np.array(out)


def layer_cell_map(model: RCModel, layer: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(x_edges, y_edges, node index per cell or -1) for a layer."""
    nodes = model.layer_nodes(layer)
    xs = _merged_edges([e for nd in nodes for e in (nd.rect[0], nd.rect[2])])
    ys = _merged_edges([e for nd in nodes for e in (nd.rect[1], nd.rect[3])])
    index = np.full((len(ys) - 1, len(xs) - 1), -1, dtype=int)
    cx = (xs[:-1] + xs[1:]) / 2
    cy = (ys[:-1] + ys[1:]) / 2
    for nd in nodes:
        x0, y0, x1, y1 = nd.rect
        ii = np.nonzero((cx > x0) & (cx < x1))[0]
        jj = np.nonzero((cy > y0) & (cy < y1))[0]
        index[np.ix_(jj, ii)] = nd.index
    return xs, ys, index


def layer_heatmap(trace: TemperatureTrace, model: RCModel, layer: str, t: float) -> Heatmap:
    """Heat map of ``layer`` at the trace sample nearest to ``t``."""
    if layer not in model.layers:
        raise ValueError(f"unknown layer {layer!r}; layers are {list(model.layers)}")
    k = trace.nearest_index(t)
    xs, ys, index = layer_cell_map(model, layer)
    col = {nid: c for c, nid in enumerate(trace.node_ids)}
    row = trace.values[k]
    values = np.full(index.shape, np.nan)
    ids = model.node_ids
    for (j, i), node in np.ndenumerate(index):
        if node >= 0:
            values[j, i] = row[col[ids[node]]]
    return Heatmap(layer=layer, time=float(trace.times[k]), x_edges=xs, y_edges=ys, values=values)


def steady_trace(model: RCModel, temperatures: np.ndarray) -> TemperatureTrace:
    """Wrap a steady-state solution as a single-row trace (for heat maps)."""
    return TemperatureTrace(np.array([0.0]), tuple(model.node_ids), np.asarray(temperatures)[None, :])
