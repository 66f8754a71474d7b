"""Independent reference computations used by the tests.

Nothing here imports the assembly or solver code it checks: the dense
assembly re-grids the package with plain loops, and the transient reference
is fixed-step implicit Euler.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from mfit.package import Block, BoundarySpec, Layer, Material, PackageSpec, PowerBlock

TOL = 1e-12


def dense_assembly(spec: PackageSpec):
    """(ids, G, C, g_conv, weights) with nested loops over node pairs.

    Supports layers that are either a single default-material grid or only
    blocks, which is all the randomised cases use.
    """
    mats = {m.name: m for m in spec.materials}
    W, H = spec.footprint
    layers = sorted(spec.layers, key=lambda l: l.z_order)
    nodes = []  # (id, layer_idx, x0, y0, x1, y1, lz, material, cap_scale, block)
    for li, layer in enumerate(layers):
        assert not (layer.material is not None and layer.blocks)
        if layer.material is not None:
            nx, ny = layer.grid
            for j in range(ny):
                for i in range(nx):
                    x0, x1 = W * i / nx, (W * (i + 1) / nx if i + 1 < nx else W)
                    y0, y1 = H * j / ny, (H * (j + 1) / ny if j + 1 < ny else H)
                    nodes.append((f"{layer.name}/_/{i}_{j}", li, x0, y0, x1, y1, layer.thickness, mats[layer.material], layer.capacitance_scale, None))
        for b in layer.blocks:
            nx, ny = b.grid
            bx, by = b.origin
            bw, bh = b.size
            for j in range(ny):
                for i in range(nx):
                    x0 = bx + bw * i / nx
                    x1 = bx + bw * (i + 1) / nx if i + 1 < nx else bx + bw
                    y0 = by + bh * j / ny
                    y1 = by + bh * (j + 1) / ny if j + 1 < ny else by + bh
                    nodes.append((f"{layer.name}/{b.name}/{i}_{j}", li, x0, y0, x1, y1, layer.thickness, mats[b.material], b.capacitance_scale, b))

    n = len(nodes)
    G = [[0.0] * n for _ in range(n)]
    C = [0.0] * n
    g_conv = [0.0] * n
    top, bottom = len(layers) - 1, 0
    bd = spec.boundary
    for a in range(n):
        _, la, ax0, ay0, ax1, ay1, alz, am, ascale, _ = nodes[a]
        alx, aly = ax1 - ax0, ay1 - ay0
        C[a] = am.rho * am.c_v * alx * aly * alz * ascale
        if la == top:
            g_conv[a] += bd.top_htc * alx * aly
        if la == bottom:
            g_conv[a] += bd.bottom_htc * alx * aly
        for edge, length in ((ax0, aly), (W - ax1, aly), (ay0, alx), (H - ay1, alx)):
            if abs(edge) <= TOL:
                g_conv[a] += bd.lateral_htc * length * alz
        for b in range(n):
            if b == a:
                continue
            _, lb, bx0, by0, bx1, by1, blz, bm, _, _ = nodes[b]
            blx, bly = bx1 - bx0, by1 - by0
            g = 0.0
            if la == lb:
                yspan = min(ay1, by1) - max(ay0, by0)
                xspan = min(ax1, bx1) - max(ax0, bx0)
                if (abs(ax1 - bx0) <= TOL or abs(bx1 - ax0) <= TOL) and yspan > TOL:
                    area = yspan * alz
                    g = 1.0 / (alx / (2 * am.k_x * area) + blx / (2 * bm.k_x * area))
                elif (abs(ay1 - by0) <= TOL or abs(by1 - ay0) <= TOL) and xspan > TOL:
                    area = xspan * alz
                    g = 1.0 / (aly / (2 * am.k_y * area) + bly / (2 * bm.k_y * area))
            elif abs(la - lb) == 1:
                w = min(ax1, bx1) - max(ax0, bx0)
                h = min(ay1, by1) - max(ay0, by0)
                if w > TOL and h > TOL:
                    g = (w * h) / (alz / (2 * am.k_z) + blz / (2 * bm.k_z))
            G[a][b] = g
    for a in range(n):
        G[a][a] = -(sum(G[a][b] for b in range(n) if b != a) + g_conv[a])

    weights = {}
    for k, node in enumerate(nodes):
        blk = node[9]
        if blk is None:
            continue
        for pb in blk.power_blocks:
            px0, py0 = blk.origin[0] + pb.origin[0], blk.origin[1] + pb.origin[1]
            px1, py1 = px0 + pb.size[0], py0 + pb.size[1]
            w = min(px1, node[4]) - max(px0, node[2])
            h = min(py1, node[5]) - max(py0, node[3])
            if w > TOL and h > TOL:
                weights.setdefault(pb.id, {})[node[0]] = w * h / (pb.size[0] * pb.size[1])
    return [nd[0] for nd in nodes], np.array(G), np.array(C), np.array(g_conv), weights


def random_spec(rng: np.random.Generator, max_nodes: int = 50) -> PackageSpec:
    """Random small stack of homogeneous and block-only layers."""
    while True:
        W = rng.uniform(0.5e-3, 5e-3)
        H = rng.uniform(0.5e-3, 5e-3)
        n_mat = int(rng.integers(1, 4))
        mats = tuple(
            Material(
                f"m{i}",
                float(rng.uniform(0.2, 400)),
                float(rng.uniform(0.2, 400)),
                float(rng.uniform(0.2, 400)),
                float(rng.uniform(500, 9000)),
                float(rng.uniform(100, 1500)),
            )
            for i in range(n_mat)
        )
        n_layers = int(rng.integers(1, 5))
        layers = []
        pb_count = 0
        for li in range(n_layers):
            thick = float(rng.uniform(10e-6, 1e-3))
            mat = mats[int(rng.integers(n_mat))].name
            if rng.random() < 0.5:
                grid = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
                layers.append(Layer(f"L{li}", li, thick, mat, grid, capacitance_scale=float(rng.uniform(0.5, 2))))
                continue
            # blocks in quadrant cells; quadrant 0 always used so stacks connect
            cells = [0] + [q for q in (1, 2, 3) if rng.random() < 0.5]
            blocks = []
            for q in cells:
                qx, qy = (q % 2) * W / 2, (q // 2) * H / 2
                x0 = qx + rng.uniform(0, W / 4 * 0.9)
                y0 = qy + rng.uniform(0, H / 4 * 0.9)
                x1 = qx + W / 4 + rng.uniform(W / 40, W / 4)
                y1 = qy + H / 4 + rng.uniform(H / 40, H / 4)
                chiplet = bool(rng.random() < 0.6)
                pbs = ()
                if chiplet:
                    bw, bh = x1 - x0, y1 - y0
                    split = float(rng.uniform(0.2, 0.8))
                    pbs = (
                        PowerBlock(f"pb{pb_count}", (0.0, 0.0), (bw * split, bh)),
                        PowerBlock(f"pb{pb_count + 1}", (bw * split, 0.0), (bw * (1 - split), bh * float(rng.uniform(0.3, 1)))),
                    )
                    pb_count += 2
                blocks.append(
                    Block(
                        f"b{q}",
                        (float(x0), float(y0)),
                        (float(x1 - x0), float(y1 - y0)),
                        mats[int(rng.integers(n_mat))].name,
                        (int(rng.integers(1, 4)), int(rng.integers(1, 4))),
                        pbs,
                        float(rng.uniform(0.5, 2)),
                        chiplet,
                    )
                )
            layers.append(Layer(f"L{li}", li, thick, None, blocks=tuple(blocks)))
        count = sum(
            (l.grid[0] * l.grid[1] if l.material else 0) + sum(b.grid[0] * b.grid[1] for b in l.blocks) for l in layers
        )
        if count > max_nodes:
            continue
        bd = BoundarySpec(float(rng.uniform(0, 5000)), float(rng.uniform(0, 50)), float(rng.uniform(0, 20)) * (rng.random() < 0.3), 25.0)
        if bd.top_htc == 0 and bd.bottom_htc == 0 and bd.lateral_htc == 0:
            continue
        if not _grounded(layers, bd, W, H):
            continue
        return PackageSpec("random", (float(W), float(H)), bd, mats, tuple(layers))


def _grounded(layers, bd, W, H) -> bool:
    """Every block (or whole homogeneous layer) reaches a convective face."""
    parts = []  # (layer index, rect)
    for li, layer in enumerate(layers):
        if layer.material is not None:
            parts.append((li, (0.0, 0.0, W, H)))
        for b in layer.blocks:
            parts.append((li, (b.origin[0], b.origin[1], b.origin[0] + b.size[0], b.origin[1] + b.size[1])))

    def touches_edge(r):
        return r[0] <= TOL or r[1] <= TOL or abs(r[2] - W) <= TOL or abs(r[3] - H) <= TOL

    def linked(a, b):
        (la, ra), (lb, rb) = a, b
        w = min(ra[2], rb[2]) - max(ra[0], rb[0])
        h = min(ra[3], rb[3]) - max(ra[1], rb[1])
        if abs(la - lb) == 1:
            return w > TOL and h > TOL
        if la == lb:
            return (abs(w) <= TOL and h > TOL) or (abs(h) <= TOL and w > TOL)
        return False

    top = len(layers) - 1
    reached = set()
    for k, (li, r) in enumerate(parts):
        if (li == top and bd.top_htc > 0) or (li == 0 and bd.bottom_htc > 0) or (bd.lateral_htc > 0 and touches_edge(r)):
            reached.add(k)
    frontier = list(reached)
    while frontier:
        a = frontier.pop()
        for b in range(len(parts)):
            if b not in reached and linked(parts[a], parts[b]):
                reached.add(b)
                frontier.append(b)
    return len(reached) == len(parts)


def implicit_euler(G, C, q_of_t, t_end, dt, y0=None):
    """Fixed-step backward Euler on C dT/dt = G T + q(t); returns (times, T)."""
    n = G.shape[0]
    A = (sp.diags(C / dt) - sp.csr_matrix(G)).tocsc()
    lu = splu(A)
    steps = int(round(t_end / dt))
    y = np.zeros(n) if y0 is None else np.array(y0, dtype=float)
    out = np.empty((steps + 1, n))
    out[0] = y
    for k in range(steps):
        t_next = (k + 1) * dt
        y = lu.solve(C / dt * y + q_of_t(t_next - dt / 2))
        out[k + 1] = y
    return dt * np.arange(steps + 1), out


def scalar_step_response(q, G, C, t):
    return (q / G) * (1.0 - np.exp(-G * np.asarray(t) / C))
