"""Generators for the bundled 2.5D and 3D example packages.

The geometry follows the simulated systems: 1.5 mm x 1.5 mm chiplets
(2.25 mm^2) on a square grid, 15.5 / 21.5 / 27.5 mm packages for 16 / 36 /
64 chiplets, 1.855 mm total thickness for 2.5D and 2.255 mm for the 16x3
stacked system. Chiplets are split into 2 x 2 quadrant nodes; every other
layer carries one node per chiplet site.

Material properties and layer thicknesses are representative values, NOT
measured stacks: the composite bump layers are homogenised with
:mod:`mfit.calibration` and the heatsink HTC comes from
:func:`mfit.calibration.heatsink_htc` with a generic copper fin heatsink.
"""

from __future__ import annotations

from .calibration import HeatsinkSpec, composite_from_fractions, composite_material, heatsink_htc
from .package import Block, BoundarySpec, Layer, Material, PackageSpec, PowerBlock

CHIPLET_SIDE = 1.5e-3
FOOTPRINT = {16: 15.5e-3, 36: 21.5e-3, 64: 27.5e-3}
AMBIENT_C = 25.0
BOTTOM_HTC = 10.0  # passive convection under the substrate

SILICON = Material("silicon", 130.0, 130.0, 130.0, 2330.0, 700.0)
COPPER = Material("copper", 400.0, 400.0, 400.0, 8960.0, 385.0)
SUBSTRATE = Material("substrate", 20.0, 20.0, 0.6, 1900.0, 1100.0)
TIM = Material("tim", 5.0, 5.0, 5.0, 2500.0, 700.0)
SOLDER = Material("solder", 58.0, 58.0, 58.0, 7400.0, 230.0)
UNDERFILL = Material("underfill", 0.5, 0.5, 0.5, 1500.0, 900.0)

# Representative fin heatsink on a 50 mm x 50 mm base plate.
HEATSINK = HeatsinkSpec(h_avg=60.0, A_t=0.12, A_f=0.0024, N=40, eta_f=0.85, L=0.05, W=0.05)


def _composites() -> tuple[Material, Material]:
    c4 = composite_material(
        "c4_layer",
        composite_from_fractions([(0.25, SOLDER), (0.75, UNDERFILL)], thickness=80e-6, area=1e-6),
        k_z=14.0,
        k_xy=1.2,
    )
    ubump = composite_material(
        "ubump_layer",
        composite_from_fractions([(0.3, SOLDER), (0.7, UNDERFILL)], thickness=25e-6, area=1e-6),
        k_z=8.0,
        k_xy=1.0,
    )
    return c4, ubump


def _sites(n_side: int, length: float):
    pitch = length / n_side
    off = (pitch - CHIPLET_SIDE) / 2
    for r in range(n_side):
        for c in range(n_side):
            yield r, c, (c * pitch + off, r * pitch + off)


def _site_blocks(n_side, length, prefix, material, grid=(1, 1), chiplet=False, pb_prefix=None):
    blocks = []
    for r, c, origin in _sites(n_side, length):
        name = f"{prefix}{r}_{c}"
        pbs = ()
        if chiplet:
            pbs = (PowerBlock(f"{pb_prefix}{r}_{c}", (0.0, 0.0), (CHIPLET_SIDE, CHIPLET_SIDE)),)
        blocks.append(
            Block(name, origin, (CHIPLET_SIDE, CHIPLET_SIDE), material, grid, pbs, 1.0, chiplet)
        )
    return tuple(blocks)


def make_2p5d(n_chiplets: int) -> PackageSpec:
    n_side = int(round(n_chiplets**0.5))
    length = FOOTPRINT[n_chiplets]
    c4, ubump = _composites()
    g = (n_side, n_side)
    layers = [
        Layer("substrate", 0, 500e-6, "substrate", g),
        Layer("c4", 1, 80e-6, "c4_layer", g),
        Layer("interposer", 2, 100e-6, "silicon", g),
        Layer("ubump", 3, 25e-6, None, blocks=_site_blocks(n_side, length, "u", "ubump_layer")),
        Layer("chiplet", 4, 150e-6, None, blocks=_site_blocks(n_side, length, "c", "silicon", (2, 2), True, "c")),
        Layer("tim", 5, 50e-6, None, blocks=_site_blocks(n_side, length, "t", "tim")),
        Layer("lid", 6, 950e-6, "copper", g),
    ]
    return PackageSpec(
        name=f"chiplet{n_chiplets}_2p5d",
        footprint=(length, length),
        boundary=BoundarySpec(heatsink_htc(HEATSINK), BOTTOM_HTC, 0.0, AMBIENT_C),
        materials=(SILICON, COPPER, SUBSTRATE, TIM, c4, ubump),
        layers=tuple(layers),
    )


def make_3d() -> PackageSpec:
    n_side, length = 4, FOOTPRINT[16]
    c4, ubump = _composites()
    g = (n_side, n_side)
    layers = [
        Layer("substrate", 0, 500e-6, "substrate", g),
        Layer("c4", 1, 80e-6, "c4_layer", g),
        Layer("interposer", 2, 100e-6, "silicon", g),
        Layer("ubump", 3, 25e-6, None, blocks=_site_blocks(n_side, length, "u", "ubump_layer")),
    ]
    for tier in range(3):
        layers.append(
            Layer(
                f"tier{tier}",
                4 + tier,
                150e-6,
                None,
                blocks=_site_blocks(n_side, length, "c", "silicon", (2, 2), True, f"tier{tier}_c"),
            )
        )
    layers.append(Layer("tim", 7, 50e-6, None, blocks=_site_blocks(n_side, length, "t", "tim")))
    layers.append(Layer("lid", 8, 1050e-6, "copper", g))
    return PackageSpec(
        name="chiplet16x3_3d",
        footprint=(length, length),
        boundary=BoundarySpec(heatsink_htc(HEATSINK), BOTTOM_HTC, 0.0, AMBIENT_C),
        materials=(SILICON, COPPER, SUBSTRATE, TIM, c4, ubump),
        layers=tuple(layers),
    )


def all_bundled() -> dict[str, PackageSpec]:
    specs = [make_2p5d(16), make_2p5d(36), make_2p5d(64), make_3d()]
    return {s.name: s for s in specs}


HEADER = """\
# {name}: bundled example package for mfit.
# Geometry (chiplet size, package footprint and thickness) follows the
# simulated systems; material properties, layer thicknesses and the heatsink
# HTC are representative values, not a calibrated stack.
"""
