"""WL1 run on the bundled packages: RC reference vs DSS.

For each package: build the network, generate the stress / PRBS / cooldown
trace, integrate it with the adaptive solver, step the ZOH model over the
same trace, and score the DSS trace against the RC one. Prints a table of
accuracy and wall-clock times and writes traces to --out-dir.

    python3 scripts/run_wl1_experiment.py --out-dir runs/wl1
"""

import argparse
import time
from pathlib import Path

import numpy as np

from mfit.dss import discretize, run_dss
from mfit.metrics import compare
from mfit.package import BUNDLED, load_package
from mfit.rc import build_rc
from mfit.solver import SolverConfig, simulate, steady_state
from mfit.workload import SynthSpec, chiplet_sources, synth_wl1


def run_one(name, out_dir, rtol, ts, seed):
    spec = load_package(name)
    t = {}
    t0 = time.perf_counter()
    model = build_rc(spec)
    t["build"] = time.perf_counter() - t0

    per_chiplet = 1.2 if len({layer.name for layer, _ in spec.chiplets()}) > 1 else 3.0
    trace = synth_wl1(SynthSpec(max_power=per_chiplet, seed=seed), chiplet_sources(spec))

    t0 = time.perf_counter()
    ref = simulate(model, trace, SolverConfig(rtol=rtol, atol=1e-10, output_dt=ts))
    t["rc"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dss = discretize(model, ts)
    t["discretize"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    fast = run_dss(dss, trace)
    t["dss"] = time.perf_counter() - t0

    rep = compare(ref, fast)
    peak = steady_state(model, np.full(len(model.power_ids), per_chiplet)).max()
    if out_dir is not None:
        ref.write_csv(out_dir / f"{name}_rc.csv")
        fast.write_csv(out_dir / f"{name}_dss.csv")
        trace.save(out_dir / f"{name}_wl1.csv")
    return {
        "name": name,
        "nodes": model.n_nodes,
        "power_w": per_chiplet * len(spec.chiplets()),
        "steady_max_c": peak,
        "rc_max_c": float(ref.values.max()),
        "mae_k": rep.mae,
        "max_diff_k": fast.max_abs_diff(ref),
        "accuracy": rep.violation_accuracy,
        **{f"t_{k}": v for k, v in t.items()},
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--packages", nargs="*", default=list(BUNDLED))
    ap.add_argument("--out-dir", type=Path)
    ap.add_argument("--rtol", type=float, default=1e-8)
    ap.add_argument("--ts", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)

    header = f"{'package':<16} {'nodes':>5} {'P[W]':>6} {'Tss[C]':>7} {'Tmax[C]':>7} {'MAE[K]':>9} {'max|d|[K]':>9} {'acc':>5} {'RC[s]':>7} {'DSS[ms]':>8}"
    print(header)
    print("-" * len(header))
    for name in args.packages:
        r = run_one(name, args.out_dir, args.rtol, args.ts, args.seed)
        acc = "n/a" if r["accuracy"] is None else f"{r['accuracy']:.3f}"
        print(
            f"{r['name']:<16} {r['nodes']:>5} {r['power_w']:>6.1f} {r['steady_max_c']:>7.2f} {r['rc_max_c']:>7.2f} "
            f"{r['mae_k']:>9.2e} {r['max_diff_k']:>9.2e} {acc:>5} {r['t_rc']:>7.2f} {r['t_dss'] * 1e3:>8.1f}"
        )


if __name__ == "__main__":
    main()
