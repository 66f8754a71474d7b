"""Declarative package description: materials, layers, blocks, boundary.

The on-disk format is YAML. Every length is in metres, conductivities in
W/(m K), densities in kg/m^3, specific heats in J/(kg K), heat transfer
coefficients in W/(m^2 K) and the ambient in degrees Celsius. Units are
carried by the key names (``thickness_m``, ``origin_m``...) and never
inferred, so a key such as ``thickness_mm`` is rejected as unknown.

Layers span the whole package footprint. A layer either has a default
material (its default region is gridded with ``grid``) or ``material: null``,
in which case only its blocks produce nodes and the rest of the layer is
empty (air gaps between chiplets).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import yaml

# Geometric comparisons are done with an absolute tolerance of one picometre.
GEOM_TOL = 1e-12

DEFAULT_REGION = "_"


class PackageError(ValueError):
    """Raised when a package document is malformed or violates an invariant."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class Material:
    name: str
    k_x: float
    k_y: float
    k_z: float
    rho: float
    c_v: float

    @property
    def volumetric_heat_capacity(self) -> float:
        return self.rho * self.c_v


@dataclass(frozen=True)
class PowerBlock:
    """Heat injection site; origin is relative to the parent block."""

    id: str
    origin: tuple[float, float]
    size: tuple[float, float]


@dataclass(frozen=True)
class Block:
    name: str
    origin: tuple[float, float]
    size: tuple[float, float]
    material: str
    grid: tuple[int, int] = (1, 1)
    power_blocks: tuple[PowerBlock, ...] = ()
    capacitance_scale: float = 1.0
    chiplet: bool = False

    @property
    def rect(self) -> tuple[float, float, float, float]:
        x, y = self.origin
        w, h = self.size
        return (x, y, x + w, y + h)


@dataclass(frozen=True)
class Layer:
    name: str
    z_order: int
    thickness: float
    material: str | None
    grid: tuple[int, int] = (1, 1)
    blocks: tuple[Block, ...] = ()
    capacitance_scale: float = 1.0


@dataclass(frozen=True)
class BoundarySpec:
    top_htc: float
    bottom_htc: float
    lateral_htc: float = 0.0
    ambient: float = 25.0


@dataclass(frozen=True)
class PackageSpec:
    name: str
    footprint: tuple[float, float]
    boundary: BoundarySpec
    materials: tuple[Material, ...]
    layers: tuple[Layer, ...]

    def material(self, name: str) -> Material:
        for m in self.materials:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def material_table(self) -> dict[str, Material]:
        return {m.name: m for m in self.materials}

    @property
    def stacked_layers(self) -> list[Layer]:
        """Layers sorted bottom to top."""
        return sorted(self.layers, key=lambda layer: layer.z_order)

    @property
    def thickness(self) -> float:
        return sum(layer.thickness for layer in self.layers)

    def chiplets(self) -> list[tuple[Layer, Block]]:
        return [(layer, b) for layer in self.stacked_layers for b in layer.blocks if b.chiplet]

    def power_block_ids(self) -> list[str]:
        return [pb.id for _, b in self.chiplets() for pb in b.power_blocks]


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.path}: {self.message}"


# ---------------------------------------------------------------------------
# geometry helpers


def rect_overlap(a, b) -> float:
    """Intersection area of two (x0, y0, x1, y1) rectangles."""
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= GEOM_TOL or h <= GEOM_TOL:
        return 0.0
    return w * h


def rect_inside(inner, outer) -> bool:
    return (
        inner[0] >= outer[0] - GEOM_TOL
        and inner[1] >= outer[1] - GEOM_TOL
        and inner[2] <= outer[2] + GEOM_TOL
        and inner[3] <= outer[3] + GEOM_TOL
    )


# ---------------------------------------------------------------------------
# validation


def validate_package(spec: PackageSpec) -> list[Diagnostic]:
    """Check every invariant; returns one diagnostic per violation."""
    diags: list[Diagnostic] = []

    def err(path, msg):
        diags.append(Diagnostic("error", path, msg))

    w, h = spec.footprint
    if not (w > 0 and h > 0):
        err("footprint_m", f"footprint must be positive, got {spec.footprint}")
    footprint = (0.0, 0.0, w, h)

    bd = spec.boundary
    for key in ("top_htc", "bottom_htc", "lateral_htc"):
        if getattr(bd, key) < 0:
            err(f"boundary.{key}", "heat transfer coefficient must be >= 0")
    if bd.top_htc <= 0 and bd.bottom_htc <= 0 and bd.lateral_htc <= 0:
        err("boundary", "no heat sink: all heat transfer coefficients are zero")

    seen_mat: set[str] = set()
    for i, m in enumerate(spec.materials):
        path = f"materials[{i}]"
        if m.name in seen_mat:
            err(f"{path}.name", f"duplicate material {m.name!r}")
        seen_mat.add(m.name)
        for key in ("k_x", "k_y", "k_z", "rho", "c_v"):
            if not getattr(m, key) > 0:
                err(f"{path}.{key}", f"{key} of {m.name!r} must be > 0")

    if not spec.layers:
        err("layers", "package has no layers")
    orders = sorted(layer.z_order for layer in spec.layers)
    if orders != list(range(len(orders))):
        err("layers", f"z_order values must be consecutive from 0, got {orders}")

    layer_names: set[str] = set()
    pb_seen: dict[str, str] = {}
    for li, layer in enumerate(spec.layers):
        lpath = f"layers[{li}]"
        if layer.name in layer_names:
            err(f"{lpath}.name", f"duplicate layer name {layer.name!r}")
        layer_names.add(layer.name)
        _check_name(layer.name, f"{lpath}.name", err)
        if not layer.thickness > 0:
            err(f"{lpath}.thickness_m", "thickness must be > 0")
        if layer.grid[0] < 1 or layer.grid[1] < 1:
            err(f"{lpath}.grid", f"grid dims must be >= 1, got {layer.grid}")
        if not layer.capacitance_scale > 0:
            err(f"{lpath}.capacitance_scale", "capacitance_scale must be > 0")
        if layer.material is not None and layer.material not in seen_mat:
            err(f"{lpath}.material", f"unknown material {layer.material!r}")
        if layer.material is None and not layer.blocks:
            err(lpath, f"layer {layer.name!r} has neither a default material nor blocks")

        block_names: set[str] = set()
        for bi, b in enumerate(layer.blocks):
            bpath = f"{lpath}.blocks[{bi}]"
            _check_name(b.name, f"{bpath}.name", err)
            if b.name == DEFAULT_REGION:
                err(f"{bpath}.name", f"block name {DEFAULT_REGION!r} is reserved")
            if b.name in block_names:
                err(f"{bpath}.name", f"duplicate block name {b.name!r} in layer {layer.name!r}")
            block_names.add(b.name)
            if not (b.size[0] > 0 and b.size[1] > 0):
                err(f"{bpath}.size_m", f"block {b.name!r} size must be positive")
            if b.grid[0] < 1 or b.grid[1] < 1:
                err(f"{bpath}.grid", f"grid dims must be >= 1, got {b.grid}")
            if not b.capacitance_scale > 0:
                err(f"{bpath}.capacitance_scale", f"capacitance_scale of {b.name!r} must be > 0")
            if b.material not in seen_mat:
                err(f"{bpath}.material", f"unknown material {b.material!r}")
            if not rect_inside(b.rect, footprint):
                err(bpath, f"block {b.name!r} extends outside the layer footprint")
            if b.power_blocks and not b.chiplet:
                err(f"{bpath}.power_blocks", f"block {b.name!r} has power blocks but is not a chiplet")
            local = (0.0, 0.0, b.size[0], b.size[1])
            for pi, pb in enumerate(b.power_blocks):
                ppath = f"{bpath}.power_blocks[{pi}]"
                if pb.id in pb_seen:
                    err(f"{ppath}.id", f"power block id {pb.id!r} already used at {pb_seen[pb.id]}")
                else:
                    pb_seen[pb.id] = ppath
                if not (pb.size[0] > 0 and pb.size[1] > 0):
                    err(f"{ppath}.size_m", f"power block {pb.id!r} size must be positive")
                prect = (pb.origin[0], pb.origin[1], pb.origin[0] + pb.size[0], pb.origin[1] + pb.size[1])
                if not rect_inside(prect, local):
                    err(ppath, f"power block {pb.id!r} extends outside block {b.name!r}")
            for (pi, p), (qi, q) in itertools.combinations(enumerate(b.power_blocks), 2):
                pr = (p.origin[0], p.origin[1], p.origin[0] + p.size[0], p.origin[1] + p.size[1])
                qr = (q.origin[0], q.origin[1], q.origin[0] + q.size[0], q.origin[1] + q.size[1])
                if rect_overlap(pr, qr) > 0:
                    err(f"{bpath}.power_blocks[{qi}]", f"power blocks {p.id!r} and {q.id!r} overlap")

        for (ai, a), (bi, b) in itertools.combinations(enumerate(layer.blocks), 2):
            if rect_overlap(a.rect, b.rect) > 0:
                err(f"{lpath}.blocks[{bi}]", f"blocks {a.name!r} and {b.name!r} overlap")

    # Only meaningful once the stack itself is well formed.
    if not diags:
        stack = spec.stacked_layers
        for lower, upper in zip(stack, stack[1:]):
            if _layer_overlap_area(lower, upper, footprint) <= 0:
                err("layers", f"layers {lower.name!r} and {upper.name!r} do not overlap: disconnected stack")
    return diags


def _check_name(name: str, path: str, err) -> None:
    if not name or any(c in name for c in "/,\n# "):
        err(path, f"invalid identifier {name!r}")


def _layer_rects(layer: Layer, footprint) -> list[tuple[float, float, float, float]]:
    if layer.material is not None:
        return [footprint]
    return [b.rect for b in layer.blocks]


def _layer_overlap_area(a: Layer, b: Layer, footprint) -> float:
    return sum(rect_overlap(r, s) for r in _layer_rects(a, footprint) for s in _layer_rects(b, footprint))


# ---------------------------------------------------------------------------
# parsing


class _Reader:
    """Walks a mapping, tracking the document path for error messages."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise PackageError(path, f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def sub(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def get(self, key: str, default: Any = ..., *, kind=None) -> Any:
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise PackageError(self.sub(key), "missing required key")
            return default
        value = self.data[key]
        if kind is not None:
            value = _coerce(value, kind, self.sub(key))
        return value

    def finish(self) -> None:
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise PackageError(self.sub(extra[0]), f"unknown key {extra[0]!r}")


def _coerce(value: Any, kind: str, path: str) -> Any:
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise PackageError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise PackageError(path, f"expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise PackageError(path, f"expected true/false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise PackageError(path, f"expected an integer, got {value!r}")
        return value
    if kind == "pair":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise PackageError(path, f"expected a two-element list, got {value!r}")
        return tuple(_coerce(v, "float", f"{path}[{i}]") for i, v in enumerate(value))
    if kind == "grid":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise PackageError(path, f"expected [nx, ny], got {value!r}")
        return tuple(_coerce(v, "int", f"{path}[{i}]") for i, v in enumerate(value))
    if kind == "list":
        if value is None:
            return []
        if not isinstance(value, list):
            raise PackageError(path, f"expected a list, got {type(value).__name__}")
        return value
    raise AssertionError(kind)


def package_from_dict(doc: Any) -> PackageSpec:
    """Build a PackageSpec from parsed YAML; schema errors only, no semantics."""
    top = _Reader(doc, "")
    name = top.get("name", kind="str")
    ambient = top.get("ambient_c", kind="float")
    footprint = top.get("footprint_m", kind="pair")

    bd = _Reader(top.get("boundary"), "boundary")
    boundary = BoundarySpec(
        top_htc=bd.get("top_htc", kind="float"),
        bottom_htc=bd.get("bottom_htc", kind="float"),
        lateral_htc=bd.get("lateral_htc", 0.0, kind="float"),
        ambient=ambient,
    )
    bd.finish()

    materials = []
    for i, m in enumerate(top.get("materials", kind="list")):
        r = _Reader(m, f"materials[{i}]")
        materials.append(
            Material(
                name=r.get("name", kind="str"),
                k_x=r.get("k_x", kind="float"),
                k_y=r.get("k_y", kind="float"),
                k_z=r.get("k_z", kind="float"),
                rho=r.get("rho", kind="float"),
                c_v=r.get("c_v", kind="float"),
            )
        )
        r.finish()

    layers = []
    for li, raw in enumerate(top.get("layers", kind="list")):
        lr = _Reader(raw, f"layers[{li}]")
        mat = lr.get("material")
        if mat is not None:
            mat = _coerce(mat, "str", lr.sub("material"))
        blocks = []
        for bi, braw in enumerate(lr.get("blocks", [], kind="list")):
            br = _Reader(braw, f"{lr.path}.blocks[{bi}]")
            pbs = []
            for pi, praw in enumerate(br.get("power_blocks", [], kind="list")):
                pr = _Reader(praw, f"{br.path}.power_blocks[{pi}]")
                pbs.append(
                    PowerBlock(
                        id=pr.get("id", kind="str"),
                        origin=pr.get("origin_m", kind="pair"),
                        size=pr.get("size_m", kind="pair"),
                    )
                )
                pr.finish()
            blocks.append(
                Block(
                    name=br.get("name", kind="str"),
                    origin=br.get("origin_m", kind="pair"),
                    size=br.get("size_m", kind="pair"),
                    material=br.get("material", kind="str"),
                    grid=br.get("grid", (1, 1), kind="grid"),
                    power_blocks=tuple(pbs),
                    capacitance_scale=br.get("capacitance_scale", 1.0, kind="float"),
                    chiplet=br.get("chiplet", False, kind="bool"),
                )
            )
            br.finish()
        layers.append(
            Layer(
                name=lr.get("name", kind="str"),
                z_order=lr.get("z_order", kind="int"),
                thickness=lr.get("thickness_m", kind="float"),
                material=mat,
                grid=lr.get("grid", (1, 1), kind="grid"),
                blocks=tuple(blocks),
                capacitance_scale=lr.get("capacitance_scale", 1.0, kind="float"),
            )
        )
        lr.finish()
    top.finish()
    return PackageSpec(
        name=name,
        footprint=footprint,
        boundary=boundary,
        materials=tuple(materials),
        layers=tuple(layers),
    )


def parse_package(document: str) -> PackageSpec:
    """Parse and validate a YAML package document.

    Raises PackageError for schema problems (missing keys, wrong types,
    unknown or wrongly unit-tagged keys) and for the first semantic error
    found by :func:`validate_package`.
    """
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise PackageError("", f"not a valid YAML document: {exc}") from exc
    spec = package_from_dict(doc)
    errors = [d for d in validate_package(spec) if d.severity == "error"]
    if errors:
        first = errors[0]
        extra = f" (and {len(errors) - 1} more)" if len(errors) > 1 else ""
        raise PackageError(first.path, first.message + extra)
    return spec


def package_to_dict(spec: PackageSpec) -> dict:
    def pair(p):
        return [float(p[0]), float(p[1])]

    layers = []
    for layer in spec.layers:
        blocks = []
        for b in layer.blocks:
            bd = {
                "name": b.name,
                "origin_m": pair(b.origin),
                "size_m": pair(b.size),
                "material": b.material,
                "grid": list(b.grid),
                "capacitance_scale": b.capacitance_scale,
            }
            if b.chiplet:
                bd["chiplet"] = True
            if b.power_blocks:
                bd["power_blocks"] = [
                    {"id": pb.id, "origin_m": pair(pb.origin), "size_m": pair(pb.size)} for pb in b.power_blocks
                ]
            blocks.append(bd)
        ld = {
            "name": layer.name,
            "z_order": layer.z_order,
            "thickness_m": layer.thickness,
            "material": layer.material,
            "grid": list(layer.grid),
        }
        if layer.capacitance_scale != 1.0:
            ld["capacitance_scale"] = layer.capacitance_scale
        if blocks:
            ld["blocks"] = blocks
        layers.append(ld)
    return {
        "name": spec.name,
        "ambient_c": spec.boundary.ambient,
        "footprint_m": pair(spec.footprint),
        "boundary": {
            "top_htc": spec.boundary.top_htc,
            "bottom_htc": spec.boundary.bottom_htc,
            "lateral_htc": spec.boundary.lateral_htc,
        },
        "materials": [
            {"name": m.name, "k_x": m.k_x, "k_y": m.k_y, "k_z": m.k_z, "rho": m.rho, "c_v": m.c_v}
            for m in spec.materials
        ],
        "layers": layers,
    }


def dump_package(spec: PackageSpec) -> str:
    return yaml.safe_dump(package_to_dict(spec), sort_keys=False, default_flow_style=None)


def load_package(path: str | Path) -> PackageSpec:
    """Load a package from a file path or the name of a bundled example."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_package_path(str(path))
        if bundled is None:
            raise PackageError("", f"no such package file or bundled example: {path}")
        p = bundled
    return parse_package(p.read_text())


BUNDLED = ("chiplet16_2p5d", "chiplet36_2p5d", "chiplet64_2p5d", "chiplet16x3_3d")


def bundled_package_path(name: str) -> Path | None:
    stem = Path(name).name
    for suffix in (".yaml", ".yml"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    candidate = Path(__file__).parent / "data" / f"{stem}.yaml"
    return candidate if candidate.exists() else None


def iter_bundled() -> Iterable[tuple[str, PackageSpec]]:
    for name in BUNDLED:
        yield name, load_package(name)


def replace_boundary(spec: PackageSpec, **changes) -> PackageSpec:
    from dataclasses import replace

    return replace(spec, boundary=replace(spec.boundary, **changes))
