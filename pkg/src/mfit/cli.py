"""``mfit`` command-line entry point.

Exit codes: 0 success, 1 input or validation error, 2 numerical failure.
Diagnostics go to stderr; data goes to files or stdout. Every run writes a
JSON manifest ``<primary output>.manifest.json`` recording inputs, the
configuration, the tool version and per-phase wall-clock timings.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import DSS_FILE_VERSION, MODEL_FILE_VERSION, __version__
from .calibration import (
    HeatsinkSpec,
    composite_from_fractions,
    equivalent_conductivity,
    heatsink_htc,
    weighted_average_capacitance,
)
from .dss import DEFAULT_TS, DSSError, discretize, load_dss, run_dss, save_dss
from .metrics import compare
from .package import Material, PackageError, load_package
from .rc import build_rc, file_fingerprint, load_model, save_model
from .solver import SingularModelError, SolverConfig, SolverError, layer_heatmap, simulate, steady_state, steady_trace
from .traces import read_trace_csv
from .workload import SynthSpec, TraceFormatError, chiplet_sources, constant_trace, load_power_csv, synth_wl1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


@dataclass
class RunManifest:
    subcommand: str
    inputs: dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    tool_version: str = __version__
    timings_s: dict[str, float] = field(default_factory=dict)
    total_wall_s: float = 0.0
    results: dict = field(default_factory=dict)

    def __post_init__(self):
        self._t0 = time.perf_counter()

    @contextmanager
    def phase(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.timings_s[name] = time.perf_counter() - t

    def write(self, primary_output: str | Path) -> Path:
        self.total_wall_s = time.perf_counter() - self._t0
        path = Path(f"{primary_output}.manifest.json")
        data = asdict(self)
        data["inputs"] = {k: str(Path(v).resolve()) if v and Path(v).exists() else v for k, v in self.inputs.items()}
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
        return path


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_build(args) -> int:
    man = RunManifest("build", inputs={"package": args.package})
    with man.phase("parse"):
        spec = load_package(args.package)
    with man.phase("assemble"):
        model = build_rc(spec)
    with man.phase("write"):
        fp = save_model(model, args.out)
    per_layer = {name: len(model.layer_nodes(name)) for name in model.layers}
    man.results = {
        "package": spec.name,
        "nodes": model.n_nodes,
        "nodes_per_layer": per_layer,
        "chiplet_nodes": int(model.chiplet_mask.sum()),
        "power_blocks": len(model.power_ids),
        "conductances": int((model.G.nnz - model.n_nodes) // 2),
        "model_fingerprint": fp,
    }
    man.write(args.out)
    _err(f"wrote {args.out}: {model.n_nodes} nodes, {man.results['chiplet_nodes']} in chiplets")
    return 0


def _num(r: dict, key: str, path: str) -> float:
    if key not in r:
        raise PackageError(f"{path}.{key}", "missing required key")
    v = r[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PackageError(f"{path}.{key}", f"expected a number, got {v!r}")
    return float(v)


def cmd_calibrate(args) -> int:
    man = RunManifest("calibrate", inputs={"input": args.input})
    doc = yaml.safe_load(Path(args.input).read_text()) or {}
    if not isinstance(doc, dict):
        raise PackageError("", "calibration document must be a mapping")
    out: list[tuple[str, float]] = []
    with man.phase("compute"):
        if "conductivity" in doc:
            c = doc["conductivity"]
            k = equivalent_conductivity(
                _num(c, "q_dot_w", "conductivity"),
                _num(c, "l_m", "conductivity"),
                _num(c, "area_m2", "conductivity"),
                _num(c, "delta_t_k", "conductivity"),
            )
            out.append(("k_eq_w_per_m_k", k))
        if "composite" in doc:
            c = doc["composite"]
            parts = []
            for i, item in enumerate(c.get("constituents", [])):
                m = item["material"]
                path = f"composite.constituents[{i}].material"
                parts.append(
                    (
                        _num(item, "volume_fraction", f"composite.constituents[{i}]"),
                        Material(m.get("name", f"m{i}"), 1.0, 1.0, 1.0, _num(m, "rho", path), _num(m, "c_v", path)),
                    )
                )
            comp = composite_from_fractions(parts, _num(c, "thickness_m", "composite"), _num(c, "area_m2", "composite"))
            rho, c_v = weighted_average_capacitance(comp)
            out += [("rho_eq_kg_per_m3", rho), ("c_v_eq_j_per_kg_k", c_v), ("heat_capacity_j_per_k", rho * c_v * comp.volume)]
        if "heatsink" in doc:
            h = doc["heatsink"]
            hs = HeatsinkSpec(
                h_avg=_num(h, "h_avg", "heatsink"),
                A_t=_num(h, "a_t_m2", "heatsink"),
                A_f=_num(h, "a_f_m2", "heatsink"),
                N=int(_num(h, "n_fins", "heatsink")),
                eta_f=_num(h, "eta_f", "heatsink"),
                L=_num(h, "l_m", "heatsink"),
                W=_num(h, "w_m", "heatsink"),
            )
            out.append(("h_eq_w_per_m2_k", heatsink_htc(hs)))
    if not out:
        raise PackageError("", "calibration document has none of: conductivity, composite, heatsink")
    text = "".join(f"{k} = {v!r}\n" for k, v in out)
    sys.stdout.write(text)
    man.results = dict(out)
    target = args.out or args.input
    if args.out:
        Path(args.out).write_text(text)
    man.write(target)
    return 0


def cmd_synth(args) -> int:
    man = RunManifest("synth-wl1", inputs={"package": args.package})
    spec = load_package(args.package)
    max_power = args.max_power
    if max_power is None:
        max_power = 1.2 if len({layer.name for layer, _ in spec.chiplets()}) > 1 else 3.0
    synth = SynthSpec(args.stress, args.prbs, args.cooldown, args.dwell, max_power, args.seed)
    man.config = asdict(synth)
    with man.phase("generate"):
        trace = synth_wl1(synth, chiplet_sources(spec))
    trace.save(args.out)
    man.results = {"rows": len(trace.times), "power_blocks": len(trace.block_ids), "end_time_s": trace.end_time}
    man.write(args.out)
    return 0


def _write_heatmaps(trace, model, layer, times, out_dir) -> list[str]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in times:
        hm = layer_heatmap(trace, model, layer, t)
        path = out_dir / hm.filename()
        hm.write_csv(path)
        written.append(str(path))
    return written


def _times(text: str | None) -> list[float]:
    if not text:
        return []
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_simulate(args) -> int:
    man = RunManifest("simulate", inputs={"model": args.model, "power": args.power})
    config = SolverConfig(rtol=args.rtol, atol=args.atol, max_step=args.max_step, output_dt=args.output_dt, method=args.method)
    man.config = asdict(config)
    with man.phase("load"):
        model = load_model(args.model)
        trace = load_power_csv(args.power)
    with man.phase("integrate"):
        result = simulate(model, trace, config)
    with man.phase("write"):
        result.write_csv(args.out_trace)
        if args.heatmap_layer:
            man.results["heatmaps"] = _write_heatmaps(
                result, model, args.heatmap_layer, _times(args.heatmap_times) or [float(result.times[-1])],
                args.heatmap_dir or Path(args.out_trace).parent,
            )
    man.results.update(
        {"samples": len(result.times), "max_temperature_c": float(result.values.max()), "model_fingerprint": file_fingerprint(args.model)}
    )
    man.write(args.out_trace)
    return 0


def cmd_steady(args) -> int:
    man = RunManifest("steady", inputs={"model": args.model, "power": args.power or ""})
    with man.phase("load"):
        model = load_model(args.model)
        if args.power_const is not None:
            trace = constant_trace(model.power_ids, args.power_const, 1.0)
        elif args.power:
            trace = load_power_csv(args.power)
        else:
            raise UsageError("steady needs --power-const or --power")
    powers = dict(zip(trace.block_ids, trace.power_at(args.at)))
    man.config = {"power_const_w": args.power_const, "at_s": args.at}
    with man.phase("solve"):
        temps = steady_state(model, powers)
    total = float(model.power_vector(powers).sum())
    rise = temps - model.ambient
    outflow = float(np.dot(model.g_conv, rise))
    lines = [
        f"# total_power_w = {total!r}",
        f"# convective_outflow_w = {outflow!r}",
        f"# max_temperature_c = {float(temps.max())!r}",
        "node_id,temperature_c",
    ]
    lines += [f"{nid},{t!r}" for nid, t in zip(model.node_ids, temps.tolist())]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.heatmap_layer:
        man.results["heatmaps"] = _write_heatmaps(
            steady_trace(model, temps), model, args.heatmap_layer, [0.0], args.heatmap_dir or Path(args.out or args.model).parent
        )
    man.results.update({"total_power_w": total, "convective_outflow_w": outflow, "max_temperature_c": float(temps.max())})
    man.write(args.out or f"{args.model}.steady")
    _err(f"total dissipated power: {total:g} W, max temperature {temps.max():.3f} C")
    return 0


def cmd_discretize(args) -> int:
    man = RunManifest("discretize", inputs={"model": args.model}, config={"ts_s": args.ts})
    with man.phase("load"):
        model = load_model(args.model)
    with man.phase("expm"):
        dss = discretize(model, args.ts)
    # bind to the bytes of the model file actually read
    dss = replace(dss, model_fingerprint=file_fingerprint(args.model))
    with man.phase("write"):
        save_dss(dss, args.out)
    man.results = {"nodes": len(dss.node_ids), "power_blocks": len(dss.power_ids), "model_fingerprint": dss.model_fingerprint}
    man.write(args.out)
    return 0


def cmd_run_dss(args) -> int:
    man = RunManifest("run-dss", inputs={"dss": args.dss, "power": args.power})
    with man.phase("load"):
        dss = load_dss(args.dss)
        trace = load_power_csv(args.power)
        if args.model:
            fp = file_fingerprint(args.model)
            if fp != dss.model_fingerprint:
                raise PackageError("", f"DSS file was built from a different model (fingerprint {dss.model_fingerprint[:12]} != {fp[:12]}); rediscretize")
    man.config = {"ts_s": dss.Ts}
    with man.phase("step"):
        result = run_dss(dss, trace)
    with man.phase("write"):
        result.write_csv(args.out_trace)
    man.results = {"steps": len(result.times) - 1, "max_temperature_c": float(result.values.max())}
    man.write(args.out_trace)
    return 0


def cmd_compare(args) -> int:
    man = RunManifest("compare", inputs={"ref": args.ref, "cand": args.cand}, config={"threshold_c": args.threshold, "guard_k": args.guard})
    ref = read_trace_csv(args.ref)
    cand = read_trace_csv(args.cand)
    nodes = None
    if args.model and not args.all_nodes:
        nodes = [nd.id for nd in load_model(args.model).nodes if nd.is_chiplet]
    elif not args.all_nodes:
        _err("note: no --model given, so chiplet nodes are unknown; comparing all shared nodes")
    with man.phase("compare"):
        rep = compare(ref, cand, args.threshold, args.guard, nodes=nodes, chiplet_only=not args.all_nodes)
    text = rep.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    if args.per_node:
        rep.write_per_node_csv(args.per_node)
    man.results = {"mae_k": rep.mae, "violation_accuracy": rep.violation_accuracy}
    man.write(args.out or args.cand)
    return 0


def cmd_heatmap(args) -> int:
    man = RunManifest("heatmap", inputs={"model": args.model, "trace": args.trace})
    model = load_model(args.model)
    trace = read_trace_csv(args.trace)
    written = _write_heatmaps(trace, model, args.layer, _times(args.times) or [float(trace.times[-1])], args.out_dir)
    man.results = {"files": written}
    man.write(Path(args.out_dir) / f"{args.layer}")
    for p in written:
        print(p)
    return 0


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mfit", description="Multi-fidelity thermal models for chiplet packages.")
    p.add_argument(
        "--version",
        action="version",
        version=f"mfit {__version__} (model format {MODEL_FILE_VERSION}, dss format {DSS_FILE_VERSION})",
    )
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("build", help="assemble the RC model of a package")
    s.add_argument("--package", required=True, help="package YAML file or bundled example name")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("calibrate", help="abstracted block / heatsink parameters")
    s.add_argument("--input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("synth-wl1", help="synthetic stress / PRBS / cooldown power trace")
    s.add_argument("--package", required=True)
    s.add_argument("--stress", type=float, default=10.0)
    s.add_argument("--prbs", type=float, default=30.0)
    s.add_argument("--cooldown", type=float, default=15.0)
    s.add_argument("--dwell", type=float, default=0.1)
    s.add_argument("--max-power", type=float, default=None, help="W per chiplet (default 3.0 for 2.5D, 1.2 for stacked 3D)")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("simulate", help="transient RC simulation")
    s.add_argument("--model", required=True)
    s.add_argument("--power", required=True)
    s.add_argument("--rtol", type=float, default=1e-6)
    s.add_argument("--atol", type=float, default=1e-8)
    s.add_argument("--max-step", type=float, default=None)
    s.add_argument("--output-dt", type=float, default=DEFAULT_TS)
    s.add_argument("--method", default="BDF", choices=["BDF", "LSODA", "Radau"])
    s.add_argument("--out-trace", required=True)
    s.add_argument("--heatmap-layer")
    s.add_argument("--heatmap-times", help="comma-separated times in s")
    s.add_argument("--heatmap-dir")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("steady", help="steady-state temperatures")
    s.add_argument("--model", required=True)
    s.add_argument("--power-const", type=float, help="W applied to every power block")
    s.add_argument("--power", help="power CSV; the row active at --at is used")
    s.add_argument("--at", type=float, default=0.0)
    s.add_argument("--out")
    s.add_argument("--heatmap-layer")
    s.add_argument("--heatmap-dir")
    s.set_defaults(func=cmd_steady)

    s = sub.add_parser("discretize", help="zero-order-hold DSS model")
    s.add_argument("--model", required=True)
    s.add_argument("--ts", type=float, default=DEFAULT_TS)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_discretize)

    s = sub.add_parser("run-dss", help="step a DSS model over a power trace")
    s.add_argument("--dss", required=True)
    s.add_argument("--power", required=True)
    s.add_argument("--model", help="verify the DSS file against this model file")
    s.add_argument("--out-trace", required=True)
    s.set_defaults(func=cmd_run_dss)

    s = sub.add_parser("compare", help="MAE and violation accuracy of a trace")
    s.add_argument("--ref", required=True)
    s.add_argument("--cand", required=True)
    s.add_argument("--threshold", type=float, default=85.0)
    s.add_argument("--guard", type=float, default=1.0)
    s.add_argument("--model", help="model file, to restrict the comparison to chiplet nodes")
    s.add_argument("--all-nodes", action="store_true")
    s.add_argument("--out")
    s.add_argument("--per-node")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("heatmap", help="per-layer heat maps from a trace")
    s.add_argument("--model", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--layer", required=True)
    s.add_argument("--times")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage() + "mfit: error: a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return 1
    except (SolverError, SingularModelError, DSSError, np.linalg.LinAlgError, FloatingPointError) as exc:
        _err(f"mfit: numerical failure: {exc}")
        return 2
    except (PackageError, TraceFormatError, ValueError, KeyError, OSError, yaml.YAMLError) as exc:
        _err(f"mfit: error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
