"""Homogenised block parameters and the heatsink heat transfer coefficient.

Detailed sub-structures (micro-bump arrays in underfill, fin heatsinks) are
replaced by homogeneous blocks or a single convective boundary. These
functions carry out that arithmetic; the detailed simulations that produce
their inputs are not part of this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .package import Material

FRACTION_TOL = 1e-9


@dataclass(frozen=True)
class Constituent:
    volume_fraction: float
    material: Material


@dataclass(frozen=True)
class CompositeLayerSpec:
    constituents: tuple[Constituent, ...]
    thickness: float
    area: float

    @property
    def volume(self) -> float:
        return self.thickness * self.area


@dataclass(frozen=True)
class HeatsinkSpec:
    h_avg: float  # W/(m^2 K)
    A_t: float  # total wetted area, m^2
    A_f: float  # area of one fin, m^2
    N: int
    eta_f: float
    L: float
    W: float


def equivalent_conductivity(q_dot: float, l: float, area: float, delta_t: float) -> float:
    """Effective conductivity k = q l / (A dT) of a layer with a measured drop."""
    for name, v in (("q_dot", q_dot), ("l", l), ("area", area), ("delta_t", delta_t)):
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")
    return q_dot * l / (area * delta_t)


def weighted_average_capacitance(spec: CompositeLayerSpec) -> tuple[float, float]:
    """Return (rho_eq, c_v_eq) of the homogenised composite.

    Density is volume weighted and specific heat mass weighted, so that
    rho_eq * c_v_eq * V equals the summed heat capacity of the constituents.
    """
    if not spec.constituents:
        raise ValueError("composite has no constituents")
    total = math.fsum(c.volume_fraction for c in spec.constituents)
    if abs(total - 1.0) > FRACTION_TOL:
        raise ValueError(f"volume fractions sum to {total!r}, expected 1")
    if any(c.volume_fraction < 0 for c in spec.constituents):
        raise ValueError("volume fractions must be non-negative")
    rho_eq = math.fsum(c.volume_fraction * c.material.rho for c in spec.constituents)
    heat = math.fsum(c.volume_fraction * c.material.rho * c.material.c_v for c in spec.constituents)
    return rho_eq, heat / rho_eq


def heatsink_htc(spec: HeatsinkSpec) -> float:
    """Equivalent HTC of an air-cooled fin heatsink referred to its base plate."""
    for name in ("h_avg", "A_t", "A_f", "L", "W"):
        if not getattr(spec, name) > 0:
            raise ValueError(f"{name} must be > 0")
    if spec.N < 0:
        raise ValueError("fin count N must be >= 0")
    if not 0.0 <= spec.eta_f <= 1.0:
        raise ValueError("fin efficiency must lie in [0, 1]")
    fin_loss = spec.N * spec.A_f * (1.0 - spec.eta_f)
    if fin_loss > spec.A_t:
        raise ValueError(f"unphysical fins: N*A_f*(1-eta_f) = {fin_loss!r} exceeds A_t = {spec.A_t!r}")
    return spec.h_avg * spec.A_t * (1.0 - fin_loss / spec.A_t) / (spec.L * spec.W)


def composite_material(
    name: str,
    spec: CompositeLayerSpec,
    k_z: float,
    k_xy: float | None = None,
) -> Material:
    """Homogeneous material for a composite, given its measured conductivities.

    ``k_z`` usually comes from :func:`equivalent_conductivity`; in-plane
    conductivity defaults to the same value.
    """
    rho, c_v = weighted_average_capacitance(spec)
    k_xy = k_z if k_xy is None else k_xy
    return Material(name=name, k_x=k_xy, k_y=k_xy, k_z=k_z, rho=rho, c_v=c_v)


def composite_from_fractions(
    parts: Sequence[tuple[float, Material]], thickness: float, area: float
) -> CompositeLayerSpec:
    return CompositeLayerSpec(
        constituents=tuple(Constituent(f, m) for f, m in parts),
        thickness=thickness,
        area=area,
    )
