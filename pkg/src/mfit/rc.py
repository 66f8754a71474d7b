"""Thermal RC network assembly.

Each layer is cut into rectangular nodes: every block is gridded with its own
(nx, ny), and the default region of a layer (where it has a default material)
is cut along the layer grid lines and every block edge so the remainder of
the footprint is tiled by rectangles. Nodes are coupled

* laterally to same-layer nodes sharing a face, as two half-cells in series,
* vertically to every node of the adjacent layers whose footprint overlaps,
  through the exact intersection area, again as two half-cells in series,
* to ambient by convection on the top face of the top layer, the bottom face
  of the bottom layer and (optionally) the lateral package faces.

Temperatures are rises above ambient, so convection only adds to the
diagonal of G and the ambient drops out of the input vector.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .package import DEFAULT_REGION, GEOM_TOL, Block, Layer, PackageSpec, PackageError, validate_package

MODEL_FORMAT_VERSION = 1


class BuildError(PackageError):
    pass


@dataclass(frozen=True)
class NodeRecord:
    index: int
    layer: str
    block: str
    i: int
    j: int
    center: tuple[float, float, float]
    extents: tuple[float, float, float]
    capacitance: float
    is_chiplet: bool = False
    power_block_weights: dict[str, float] = field(default_factory=dict, compare=False, hash=False)

    @property
    def id(self) -> str:
        return f"{self.layer}/{self.block}/{self.i}_{self.j}"

    @property
    def rect(self) -> tuple[float, float, float, float]:
        x, y, _ = self.center
        lx, ly, _ = self.extents
        return (x - lx / 2, y - ly / 2, x + lx / 2, y + ly / 2)


@dataclass(frozen=True, eq=False)
class RCModel:
    """Assembled network; C dT/dt = G T + E q with T the rise over ambient."""

    nodes: tuple[NodeRecord, ...]
    G: sp.csr_matrix
    C: np.ndarray
    g_conv: np.ndarray
    power_ids: tuple[str, ...]
    power_map: dict[str, list[tuple[int, float]]]
    ambient: float
    layers: tuple[str, ...]
    footprint: tuple[float, float] = (0.0, 0.0)
    name: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def chiplet_mask(self) -> np.ndarray:
        return np.array([n.is_chiplet for n in self.nodes], dtype=bool)

    def layer_nodes(self, layer: str) -> list[NodeRecord]:
        if layer not in self.layers:
            raise KeyError(f"unknown layer {layer!r}")
        return [n for n in self.nodes if n.layer == layer]

    @property
    def E(self) -> sp.csr_matrix:
        """N x P routing matrix from power-block watts to node watts."""
        rows, cols, vals = [], [], []
        for p, pid in enumerate(self.power_ids):
            for node, w in self.power_map[pid]:
                rows.append(node)
                cols.append(p)
                vals.append(w)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, len(self.power_ids)))

    def power_vector(self, powers) -> np.ndarray:
        """Per-power-block watts (mapping or ordered sequence) as a length-P array."""
        if isinstance(powers, dict):
            unknown = set(powers) - set(self.power_ids)
            if unknown:
                raise KeyError(f"unknown power block ids: {sorted(unknown)}")
            vec = np.array([float(powers.get(pid, 0.0)) for pid in self.power_ids])
        else:
            vec = np.asarray(powers, dtype=float)
            if vec.shape != (len(self.power_ids),):
                raise ValueError(f"expected {len(self.power_ids)} powers, got shape {vec.shape}")
        return vec

    def injection(self, powers) -> np.ndarray:
        """Node heat injection q (W) for the given power-block powers."""
        return self.E @ self.power_vector(powers)

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_model(self).encode()).hexdigest()


def axis_conductances(k: tuple[float, float, float], extents: tuple[float, float, float]) -> tuple[float, float, float]:
    """Centre-to-centre conductances (G_x, G_y, G_z) of one node, W/K.

    A lateral or vertical coupling between two nodes is the series
    combination of their half cells, each of conductance 2 G across the
    shared face.
    """
    lx, ly, lz = extents
    return (k[0] * ly * lz / lx, k[1] * lx * lz / ly, k[2] * lx * ly / lz)


# ---------------------------------------------------------------------------
# gridding


@dataclass
class _Cell:
    block: str
    i: int
    j: int
    rect: tuple[float, float, float, float]
    material: str
    cap_scale: float
    chiplet: bool
    source: Block | None


def _edges(start: float, length: float, n: int) -> list[float]:
    return [start + length * k / n for k in range(n)] + [start + length]


def _merge_sorted(values) -> list[float]:
    out: list[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > GEOM_TOL:
            out.append(v)
    return out


def grid_layer(layer: Layer, footprint: tuple[float, float]) -> list[_Cell]:
    cells: list[_Cell] = []
    for b in layer.blocks:
        xs = _edges(b.origin[0], b.size[0], b.grid[0])
        ys = _edges(b.origin[1], b.size[1], b.grid[1])
        for j in range(b.grid[1]):
            for i in range(b.grid[0]):
                cells.append(
                    _Cell(b.name, i, j, (xs[i], ys[j], xs[i + 1], ys[j + 1]), b.material, b.capacitance_scale, b.chiplet, b)
                )
    if layer.material is not None:
        w, h = footprint
        xs = _edges(0.0, w, layer.grid[0])
        ys = _edges(0.0, h, layer.grid[1])
        if layer.blocks:
            xs = _merge_sorted(xs + [e for b in layer.blocks for e in (b.rect[0], b.rect[2])])
            ys = _merge_sorted(ys + [e for b in layer.blocks for e in (b.rect[1], b.rect[3])])
        rects = [b.rect for b in layer.blocks]
        for j in range(len(ys) - 1):
            for i in range(len(xs) - 1):
                cx, cy = (xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2
                if any(r[0] < cx < r[2] and r[1] < cy < r[3] for r in rects):
                    continue
                cells.append(
                    _Cell(DEFAULT_REGION, i, j, (xs[i], ys[j], xs[i + 1], ys[j + 1]), layer.material, layer.capacitance_scale, False, None)
                )
    return cells


# ---------------------------------------------------------------------------
# pair searches (chunked broadcasting keeps memory bounded on large grids)

_CHUNK = 2048


def _overlap_pairs(ra: np.ndarray, rb: np.ndarray):
    """All (a, b, area) with positive x-y intersection between two rect sets."""
    out_a, out_b, out_area = [], [], []
    for start in range(0, len(ra), _CHUNK):
        a = ra[start : start + _CHUNK]
        w = np.minimum(a[:, None, 2], rb[None, :, 2]) - np.maximum(a[:, None, 0], rb[None, :, 0])
        h = np.minimum(a[:, None, 3], rb[None, :, 3]) - np.maximum(a[:, None, 1], rb[None, :, 1])
        ia, ib = np.nonzero((w > GEOM_TOL) & (h > GEOM_TOL))
        out_a.append(ia + start)
        out_b.append(ib)
        out_area.append(w[ia, ib] * h[ia, ib])
    if not out_a:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    return np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_area)


def _face_pairs(r: np.ndarray, axis: int):
    """Pairs (a, b, shared_length) where b sits directly after a along ``axis``."""
    lo, hi = (0, 2) if axis == 0 else (1, 3)
    olo, ohi = (1, 3) if axis == 0 else (0, 2)
    out_a, out_b, out_len = [], [], []
    for start in range(0, len(r), _CHUNK):
        a = r[start : start + _CHUNK]
        touch = np.abs(a[:, None, hi] - r[None, :, lo]) <= GEOM_TOL
        span = np.minimum(a[:, None, ohi], r[None, :, ohi]) - np.maximum(a[:, None, olo], r[None, :, olo])
        ia, ib = np.nonzero(touch & (span > GEOM_TOL))
        out_a.append(ia + start)
        out_b.append(ib)
        out_len.append(span[ia, ib])
    return np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_len)


# ---------------------------------------------------------------------------


def build_rc(spec: PackageSpec) -> RCModel:
    """Assemble the sparse RC network of a validated package."""
    errors = [d for d in validate_package(spec) if d.severity == "error"]
    if errors:
        raise BuildError(errors[0].path, errors[0].message)

    mats = spec.material_table
    stack = spec.stacked_layers
    footprint = spec.footprint
    bd = spec.boundary

    per_layer: list[list[_Cell]] = [grid_layer(layer, footprint) for layer in stack]
    offsets = np.cumsum([0] + [len(c) for c in per_layer])
    n = int(offsets[-1])

    rects = np.empty((n, 4))
    lz = np.empty(n)
    z = np.empty(n)
    kx, ky, kz, cap = np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    nodes_meta = []
    z_bottom = 0.0
    for li, (layer, cells) in enumerate(zip(stack, per_layer)):
        for c_idx, cell in enumerate(cells):
            k = offsets[li] + c_idx
            m = mats[cell.material]
            rects[k] = cell.rect
            lz[k] = layer.thickness
            z[k] = z_bottom + layer.thickness / 2
            kx[k], ky[k], kz[k] = m.k_x, m.k_y, m.k_z
            lx_, ly_ = cell.rect[2] - cell.rect[0], cell.rect[3] - cell.rect[1]
            cap[k] = m.rho * m.c_v * lx_ * ly_ * layer.thickness * cell.cap_scale
            nodes_meta.append((layer, cell))
        z_bottom += layer.thickness
    lx = rects[:, 2] - rects[:, 0]
    ly = rects[:, 3] - rects[:, 1]

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    # lateral coupling
    for li in range(len(stack)):
        sl = slice(offsets[li], offsets[li + 1])
        r = rects[sl]
        base = offsets[li]
        for axis, k_arr, l_arr in ((0, kx, lx), (1, ky, ly)):
            ia, ib, span = _face_pairs(r, axis)
            a, b = ia + base, ib + base
            area = span * lz[a]
            g = area / (l_arr[a] / (2 * k_arr[a]) + l_arr[b] / (2 * k_arr[b]))
            rows.append(a)
            cols.append(b)
            vals.append(g)

    # vertical coupling between adjacent layers
    for li in range(len(stack) - 1):
        lo = slice(offsets[li], offsets[li + 1])
        hi = slice(offsets[li + 1], offsets[li + 2])
        ia, ib, area = _overlap_pairs(rects[lo], rects[hi])
        if len(ia) == 0:
            raise BuildError("layers", f"layers {stack[li].name!r} and {stack[li + 1].name!r} do not overlap")
        a, b = ia + offsets[li], ib + offsets[li + 1]
        g = area / (lz[a] / (2 * kz[a]) + lz[b] / (2 * kz[b]))
        rows.append(a)
        cols.append(b)
        vals.append(g)

    r_all = np.concatenate(rows)
    c_all = np.concatenate(cols)
    v_all = np.concatenate(vals)
    upper = sp.coo_matrix((v_all, (np.minimum(r_all, c_all), np.maximum(r_all, c_all))), shape=(n, n)).tocsr()
    upper.sum_duplicates()
    off = (upper + upper.T).tocsr()

    # convection
    g_conv = np.zeros(n)
    top = slice(offsets[-2], offsets[-1])
    bottom = slice(offsets[0], offsets[1])
    g_conv[top] += bd.top_htc * lx[top] * ly[top]
    g_conv[bottom] += bd.bottom_htc * lx[bottom] * ly[bottom]
    if bd.lateral_htc > 0:
        w, h = footprint
        on_edge = (
            (np.abs(rects[:, 0]) <= GEOM_TOL) * ly
            + (np.abs(rects[:, 2] - w) <= GEOM_TOL) * ly
            + (np.abs(rects[:, 1]) <= GEOM_TOL) * lx
            + (np.abs(rects[:, 3] - h) <= GEOM_TOL) * lx
        )
        g_conv += bd.lateral_htc * on_edge * lz

    # every conduction island needs a path to ambient or G is singular
    n_comp, label = connected_components(off, directed=False)
    if n_comp > 1:
        grounded = np.bincount(label, weights=g_conv, minlength=n_comp) > 0
        if not grounded.all():
            k = int(np.nonzero(~grounded[label])[0][0])
            layer, cell = nodes_meta[k]
            raise BuildError(
                "layers",
                f"disconnected stack: block {cell.block!r} of layer {layer.name!r} has no conduction path to a convective boundary",
            )

    row_sum = np.asarray(off.sum(axis=1)).ravel()
    G = (off - sp.diags(row_sum + g_conv)).tocsr()
    G.sort_indices()

    # power routing
    power_ids: list[str] = []
    power_map: dict[str, list[tuple[int, float]]] = {}
    weights: list[dict[str, float]] = [dict() for _ in range(n)]
    for k, (layer, cell) in enumerate(nodes_meta):
        if cell.source is None:
            continue
        b = cell.source
        for pb in b.power_blocks:
            pr = (
                b.origin[0] + pb.origin[0],
                b.origin[1] + pb.origin[1],
                b.origin[0] + pb.origin[0] + pb.size[0],
                b.origin[1] + pb.origin[1] + pb.size[1],
            )
            w_ = np.minimum(pr[2], cell.rect[2]) - np.maximum(pr[0], cell.rect[0])
            h_ = np.minimum(pr[3], cell.rect[3]) - np.maximum(pr[1], cell.rect[1])
            if w_ <= GEOM_TOL or h_ <= GEOM_TOL:
                continue
            frac = (w_ * h_) / (pb.size[0] * pb.size[1])
            if pb.id not in power_map:
                power_ids.append(pb.id)
                power_map[pb.id] = []
            power_map[pb.id].append((k, float(frac)))
            weights[k][pb.id] = float(frac)

    nodes = []
    for k, (layer, cell) in enumerate(nodes_meta):
        r = cell.rect
        nodes.append(
            NodeRecord(
                index=k,
                layer=layer.name,
                block=cell.block,
                i=cell.i,
                j=cell.j,
                center=((r[0] + r[2]) / 2, (r[1] + r[3]) / 2, float(z[k])),
                extents=(float(lx[k]), float(ly[k]), float(lz[k])),
                capacitance=float(cap[k]),
                is_chiplet=cell.chiplet,
                power_block_weights=weights[k],
            )
        )

    return RCModel(
        nodes=tuple(nodes),
        G=G,
        C=cap,
        g_conv=g_conv,
        power_ids=tuple(power_ids),
        power_map=power_map,
        ambient=bd.ambient,
        layers=tuple(layer.name for layer in stack),
        footprint=tuple(footprint),
        name=spec.name,
    )


def node_lookup(model: RCModel, layer: str, position: tuple[float, float]) -> int:
    """Index of the node of ``layer`` containing ``position``.

    Points on shared edges resolve to the cell with the lower (i, j).
    """
    x, y = position
    candidates = [
        nd
        for nd in model.layer_nodes(layer)
        if nd.rect[0] - GEOM_TOL <= x <= nd.rect[2] + GEOM_TOL and nd.rect[1] - GEOM_TOL <= y <= nd.rect[3] + GEOM_TOL
    ]
    if not candidates:
        raise ValueError(f"position {position} is outside every node of layer {layer!r}")
    return min(candidates, key=lambda nd: (nd.i, nd.j, nd.index)).index


# ---------------------------------------------------------------------------
# persistence


def _f(x: float) -> str:
    return format(float(x), ".17g")


def dumps_model(model: RCModel) -> str:
    out = io.StringIO()
    w = out.write
    w("# mfit thermal RC model\n")
    w(f"format_version = {MODEL_FORMAT_VERSION}\n")
    w(f"name = {model.name}\n")
    w(f"ambient_c = {_f(model.ambient)}\n")
    w(f"footprint_m = {_f(model.footprint[0])},{_f(model.footprint[1])}\n")
    w(f"layers = {','.join(model.layers)}\n")
    w("[nodes]\n")
    w("index,layer,block,i,j,x,y,z,lx,ly,lz,is_chiplet\n")
    for nd in model.nodes:
        vals = [*nd.center, *nd.extents]
        w(f"{nd.index},{nd.layer},{nd.block},{nd.i},{nd.j},{','.join(_f(v) for v in vals)},{int(nd.is_chiplet)}\n")
    w("[conductance]\n")
    w("i,j,g\n")
    upper = sp.triu(model.G, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    for k in order:
        w(f"{upper.row[k]},{upper.col[k]},{_f(upper.data[k])}\n")
    w("[convection]\n")
    w("i,g_conv\n")
    for i, g in enumerate(model.g_conv):
        w(f"{i},{_f(g)}\n")
    w("[capacitance]\n")
    w("i,c\n")
    for i, c in enumerate(model.C):
        w(f"{i},{_f(c)}\n")
    w("[power_map]\n")
    w("id,node,weight\n")
    for pid in model.power_ids:
        for node, weight in model.power_map[pid]:
            w(f"{pid},{node},{_f(weight)}\n")
    return out.getvalue()


def save_model(model: RCModel, path: str | Path) -> str:
    """Write the model file; returns its fingerprint (sha256 of the text)."""
    text = dumps_model(model)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def loads_model(text: str) -> RCModel:
    meta: dict[str, str] = {}
    sections: dict[str, list[list[str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
            header_pending = True
            continue
        if current is None:
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            meta[key.strip()] = value.strip()
            continue
        if header_pending:
            header_pending = False
            continue
        sections[current].append(line.split(","))

    version = int(meta.get("format_version", -1))
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    for name in ("nodes", "conductance", "convection", "capacitance", "power_map"):
        if name not in sections:
            raise ValueError(f"model file has no [{name}] section")

    n = len(sections["nodes"])
    C = np.zeros(n)
    for i, c in sections["capacitance"]:
        C[int(i)] = float(c)
    g_conv = np.zeros(n)
    for i, g in sections["convection"]:
        g_conv[int(i)] = float(g)

    power_ids: list[str] = []
    power_map: dict[str, list[tuple[int, float]]] = {}
    weights: list[dict[str, float]] = [dict() for _ in range(n)]
    for pid, node, weight in sections["power_map"]:
        if pid not in power_map:
            power_ids.append(pid)
            power_map[pid] = []
        power_map[pid].append((int(node), float(weight)))
        weights[int(node)][pid] = float(weight)

    nodes = []
    for row in sections["nodes"]:
        idx, layer, block, i, j = row[:5]
        x, y, zc, lx, ly, lz = (float(v) for v in row[5:11])
        k = int(idx)
        nodes.append(
            NodeRecord(
                index=k,
                layer=layer,
                block=block,
                i=int(i),
                j=int(j),
                center=(x, y, zc),
                extents=(lx, ly, lz),
                capacitance=float(C[k]),
                is_chiplet=bool(int(row[11])),
                power_block_weights=weights[k],
            )
        )

    ci = np.array([int(r[0]) for r in sections["conductance"]], dtype=int)
    cj = np.array([int(r[1]) for r in sections["conductance"]], dtype=int)
    cg = np.array([float(r[2]) for r in sections["conductance"]])
    upper = sp.coo_matrix((cg, (ci, cj)), shape=(n, n)).tocsr()
    off = (upper + upper.T).tocsr()
    row_sum = np.asarray(off.sum(axis=1)).ravel()
    G = (off - sp.diags(row_sum + g_conv)).tocsr()
    G.sort_indices()

    fw, fh = (float(v) for v in meta.get("footprint_m", "0,0").split(","))
    return RCModel(
        nodes=tuple(nodes),
        G=G,
        C=C,
        g_conv=g_conv,
        power_ids=tuple(power_ids),
        power_map=power_map,
        ambient=float(meta["ambient_c"]),
        layers=tuple(meta["layers"].split(",")),
        footprint=(fw, fh),
        name=meta.get("name", ""),
    )


def load_model(path: str | Path) -> RCModel:
    return loads_model(Path(path).read_text())


def file_fingerprint(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
