from __future__ import annotations

import pytest

from mfit.package import Block, BoundarySpec, Layer, Material, PackageSpec, PowerBlock

ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker
    status = "PASS" if report.passed else "FAIL"
    if ACCEPTANCE.get(number, (title, "PASS"))[1] == "FAIL":
        status = "FAIL"
    ACCEPTANCE[number] = (title, status)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("acceptance")
    if m is not None:
        outcome.get_result()._acceptance = m.args


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, status = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


# ---------------------------------------------------------------------------
# small package builders


def material(name="m", k=1.0, rho=1000.0, c_v=500.0, kx=None, ky=None, kz=None) -> Material:
    return Material(name, kx or k, ky or k, kz or k, rho, c_v)


def one_layer(size=1e-3, thickness=1e-3, grid=(1, 1), mat=None, top_htc=100.0, bottom_htc=0.0, ambient=25.0) -> PackageSpec:
    mat = mat or material()
    return PackageSpec(
        name="one",
        footprint=(size, size),
        boundary=BoundarySpec(top_htc, bottom_htc, 0.0, ambient),
        materials=(mat,),
        layers=(Layer("L0", 0, thickness, mat.name, grid),),
    )


def chip_on_slab(
    size=2e-3,
    chip_grid=(2, 2),
    slab_grid=(1, 1),
    power_blocks=None,
    top_htc=1000.0,
    bottom_htc=10.0,
) -> PackageSpec:
    """A full-footprint silicon chiplet (with power) on a slab."""
    si = Material("si", 130.0, 130.0, 130.0, 2330.0, 700.0)
    slab = Material("slab", 5.0, 5.0, 2.0, 2000.0, 800.0)
    if power_blocks is None:
        power_blocks = (PowerBlock("p0", (0.0, 0.0), (size, size)),)
    chip = Block("chip", (0.0, 0.0), (size, size), "si", chip_grid, tuple(power_blocks), 1.0, True)
    return PackageSpec(
        name="chip_on_slab",
        footprint=(size, size),
        boundary=BoundarySpec(top_htc, bottom_htc, 0.0, 25.0),
        materials=(si, slab),
        layers=(
            Layer("slab", 0, 0.5e-3, "slab", slab_grid),
            Layer("die", 1, 0.2e-3, None, blocks=(chip,)),
        ),
    )


def quad_chiplets(size=4e-3, htc_top=2000.0) -> PackageSpec:
    """Four mirror-symmetric chiplets, 2x2 nodes each, on a spreader."""
    si = Material("si", 130.0, 130.0, 130.0, 2330.0, 700.0)
    cu = Material("cu", 400.0, 400.0, 400.0, 8960.0, 385.0)
    side = size / 4
    blocks = []
    for r in range(2):
        for c in range(2):
            x = size / 8 + c * size / 2
            y = size / 8 + r * size / 2
            blocks.append(
                Block(f"c{r}{c}", (x, y), (side, side), "si", (2, 2), (PowerBlock(f"p{r}{c}", (0.0, 0.0), (side, side)),), 1.0, True)
            )
    return PackageSpec(
        name="quad",
        footprint=(size, size),
        boundary=BoundarySpec(htc_top, 10.0, 0.0, 25.0),
        materials=(si, cu),
        layers=(
            Layer("base", 0, 0.3e-3, "si", (4, 4)),
            Layer("dies", 1, 0.15e-3, None, blocks=tuple(blocks)),
            Layer("lid", 2, 0.5e-3, "cu", (4, 4)),
        ),
    )
