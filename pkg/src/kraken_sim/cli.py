"""Command-line entry point: ``kraken-sim <engine> <action> ...``.

Exit codes: 0 success, 1 usage error, 2 bad input, 3 invariant or oracle failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import codec
from .calibrate import calibration_json
from .cutie import PEAK_OPS_PER_CYCLE, count_ops, cutie_cycles, cutie_forward, cutie_memcheck
from .energy import (
    ReportRow,
    SimReport,
    activity_sweep,
    efficiency,
    energy_per_inference,
    load_calibration,
    sne_throughput,
    sweep_report,
)
from .errors import KrakenError, MemoryBudgetExceeded
from .io import fixture_path, gen_synthetic, save_events, load_events, load_image, load_network, synthetic_events, trits_from_text, trits_to_text
from .pulp import ClusterCycleModel, ConvPatchSpec, cluster_inference_rate, network_cycles, patch_cycles
from .sne import dense_reference, run_stream

EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 1, 2, 3


class InvariantFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    try:
        if len(parts) == 1:
            a = float(parts[0])
            return a, a, 0.0
        if len(parts) == 3:
            return float(parts[0]), float(parts[1]), float(parts[2])
    except ValueError:
        pass
    raise argparse.ArgumentTypeError("expected MIN:MAX:STEP or a single value")


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.lower().replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma- or x-separated integers") from None


def _emit(report: SimReport, args) -> None:
    text = report.to_json() if args.json else report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _model(cal) -> ClusterCycleModel:
    return ClusterCycleModel(overhead=cal.pulp_overhead, utilization_cap=cal.pulp_utilization_cap)


def _power(cal, engine, freq):
    p = cal.power[engine]
    return p if freq is None else replace(p, freq_hz=freq)


# ------------------------------------------------------------------ sne


def cmd_sne_run(args, cal) -> None:
    loaded = load_network(args.net)
    if loaded.engine != "sne":
        raise KrakenError(f"{args.net} is a {loaded.engine} network, expected sne")
    net = loaded.network
    events = load_events(args.events, args.format, polarity=args.polarity, auto_sort=args.sort)
    result = run_stream(net, events)
    if args.oracle:
        ref = dense_reference(net, events)
        same = (
            result.events == ref.events
            and result.stats == ref.stats
            and all(np.array_equal(a, b) for a, b in zip(result.membranes, ref.membranes))
        )
        if not same:
            raise InvariantFailure("event-driven run disagrees with the dense reference")
        print("oracle: event-driven and dense reference agree", file=sys.stderr)
    if args.events_out:
        save_events(args.events_out, result.events)
    s = result.stats
    print(
        f"input events {s.input_events}, spikes {list(s.spikes)}, SOPs {s.sops}, "
        f"ticks {s.ticks_observed}, input activity {s.input_activity:.6g}",
        file=sys.stderr,
    )
    p = _power(cal, "SNE", args.freq)
    report = SimReport()
    if s.input_activity > 0:
        thr = sne_throughput(min(s.input_activity, 1.0), p.freq_hz, cal.sne_model)
        report.add(
            ReportRow(
                "SNE",
                loaded.doc.get("name", Path(args.net).stem),
                p.freq_hz,
                p.power_w,
                thr,
                energy_per_inference(p, thr),
                s.sops * thr / p.power_w,
            )
        )
    else:
        report.add(ReportRow("SNE", loaded.doc.get("name", Path(args.net).stem), p.freq_hz, p.power_w, None, None, None))
    _emit(report, args)


def cmd_sne_sweep(args, cal) -> None:
    a_min, a_max, step = args.activity
    p = _power(cal, "SNE", args.freq)
    counter = None
    if args.simulate:
        loaded = load_network(args.simulate)
        net = loaded.network
        dims = net.input_dims

        def counter(activity):
            events = synthetic_events(dims, args.ticks, activity, args.seed)
            return run_stream(net, events).stats.sops

    rows = activity_sweep(cal.sne_model, p, a_min, a_max, step, counter)
    _emit(sweep_report(rows, p), args)


# ---------------------------------------------------------------- cutie


def _load_cutie(path):
    loaded = load_network(path)
    if loaded.engine != "cutie":
        raise KrakenError(f"{path} is a {loaded.engine} network, expected cutie")
    return loaded


def cmd_cutie_run(args, cal) -> None:
    loaded = _load_cutie(args.net)
    x = trits_from_text(Path(args.input).read_text(), path=args.input) if args.input.endswith(".trits") else load_image(args.input)
    res = cutie_forward(loaded.network, x)
    print(f"label {res.label} scores {[int(v) for v in res.scores]}", file=sys.stderr)
    _cutie_report(loaded, args, cal)


def _cutie_report(loaded, args, cal) -> None:
    net = loaded.network
    overhead = args.overhead if args.overhead is not None else loaded.doc.get("overhead_per_layer", cal.cutie_overhead_per_layer)
    p = _power(cal, "CUTIE", args.freq)
    est = cutie_cycles(net, p.freq_hz, overhead)
    ops = count_ops(net)
    mem = cutie_memcheck(net)
    print(
        f"cycles {est.cycles}, inf/s {est.inf_per_s:.6g}, ops {ops}, weight bytes {mem.weight_bytes}, "
        f"fm bytes {mem.fm_bytes}, fits {mem.fits}",
        file=sys.stderr,
    )
    if not mem.fits:
        raise MemoryBudgetExceeded("network does not fit CUTIE memories")
    report = SimReport()
    name = loaded.doc.get("name", Path(args.net).stem)
    report.add(ReportRow("CUTIE", name, p.freq_hz, p.power_w, est.inf_per_s, energy_per_inference(p, est.inf_per_s), efficiency(ops, est.cycles, p)))
    _emit(report, args)


def cmd_cutie_cycles(args, cal) -> None:
    _cutie_report(_load_cutie(args.net), args, cal)


# ----------------------------------------------------------------- pulp


def cmd_pulp_estimate(args, cal) -> None:
    model = _model(cal)
    p = _power(cal, "PULP", args.freq)
    name = "patch"
    network_macs = args.macs
    if args.net:
        loaded = load_network(args.net)
        if loaded.engine != "pulp-patch":
            raise KrakenError(f"{args.net} is a {loaded.engine} network, expected pulp-patch")
        spec = loaded.network
        name = loaded.doc.get("name", name)
        network_macs = network_macs or loaded.doc.get("network_macs")
    else:
        n_out, c_in, c_out, k = args.patch
        spec = ConvPatchSpec(n_out, c_in, c_out, k, args.a_bits, args.w_bits)
    est = patch_cycles(spec, not args.no_mac_ld, model)
    base = patch_cycles(spec, False, model)
    ld = patch_cycles(spec, True, model)
    speedup = base.cycles / ld.cycles if ld.cycles else 0.0
    print(
        f"cycles {est.cycles:.6g}, MAC-steps/cycle/core {est.mac_steps_per_cycle_per_core:.4f}, "
        f"MACs/cycle/core {est.macs_per_cycle_per_core:.4f}, MAC-LD speedup {speedup:.4f}",
        file=sys.stderr,
    )
    report = SimReport()
    patch_eff = efficiency(2 * spec.macs, est.cycles, p) if est.cycles else 0.0
    report.add(ReportRow("PULP", name, p.freq_hz, p.power_w, None, None, patch_eff))
    if network_macs:
        bits = (spec.a_bits, spec.w_bits)
        rate = cluster_inference_rate(network_macs, bits, p.freq_hz, model)
        cycles = network_cycles(network_macs, bits, model)
        report.add(
            ReportRow("PULP", f"{name}-network", p.freq_hz, p.power_w, rate, energy_per_inference(p, rate), efficiency(2 * network_macs, cycles, p))
        )
    _emit(report, args)


# ---------------------------------------------------------------- codec


def cmd_codec_pack(args, cal) -> None:
    t = trits_from_text(Path(args.input).read_text(), path=args.input)
    Path(args.output).write_bytes(codec.pack_tensor(t))


def cmd_codec_unpack(args, cal) -> None:
    t = codec.unpack_tensor(Path(args.input).read_bytes())
    Path(args.output).write_text(trits_to_text(t))


# ------------------------------------------------------------ gen/report


def cmd_gen(args, cal) -> None:
    extra = {}
    if args.channels:
        extra["channels"] = args.channels
    if args.ticks:
        extra["ticks"] = args.ticks
    syn = gen_synthetic(args.kind, args.dims, args.density, args.seed, **extra)
    path = syn.write(args.out, args.name)
    print(path)


def build_report(cal) -> SimReport:
    """Consolidated report over the reference workload of each engine."""
    report = SimReport()
    p = cal.power["SNE"]
    for activity in (0.01, 0.20):
        thr = sne_throughput(activity, p.freq_hz, cal.sne_model)
        report.add(ReportRow("SNE", f"activity={activity:g}", p.freq_hz, p.power_w, thr, energy_per_inference(p, thr)))

    loaded = load_network(fixture_path("cutie_cifar10.json"))
    pc = cal.power["CUTIE"]
    est = cutie_cycles(loaded.network, pc.freq_hz, cal.cutie_overhead_per_layer)
    ops = count_ops(loaded.network)
    report.add(
        ReportRow(
            "CUTIE", loaded.doc["name"], pc.freq_hz, pc.power_w, est.inf_per_s,
            energy_per_inference(pc, est.inf_per_s), efficiency(ops, est.cycles, pc),
        )
    )
    pe = cal.cutie_efficiency_point
    report.add(ReportRow("CUTIE", "peak-datapath", pe.freq_hz, pe.power_w, None, None, efficiency(PEAK_OPS_PER_CYCLE, 1, pe)))

    pp = cal.power["PULP"]
    model = _model(cal)
    rate = cluster_inference_rate(cal.dronet_total_macs, cal.dronet_bits, pp.freq_hz, model)
    cycles = network_cycles(cal.dronet_total_macs, cal.dronet_bits, model)
    report.add(
        ReportRow(
            "PULP", "dronet-int8", pp.freq_hz, pp.power_w, rate,
            energy_per_inference(pp, rate), efficiency(2 * cal.dronet_total_macs, cycles, pp),
        )
    )
    return report


def cmd_report(args, cal) -> None:
    _emit(build_report(cal), args)


def cmd_calibrate(args, cal) -> None:
    text = calibration_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _output_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write the report here instead of stdout")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="emit the report as JSON")
    fmt.add_argument("--csv", action="store_true", help="emit the report as CSV (default)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kraken-sim", description="Functional and performance simulator for the SNE, CUTIE and PULP engines.")
    parser.add_argument("--config", help="calibration file (default: $KRAKEN_SIM_CONFIG or the bundled one)")
    top = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    sne = top.add_parser("sne", help="spiking engine").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = sne.add_parser("run", help="run an event stream through an SNE network")
    p.add_argument("net")
    p.add_argument("events")
    p.add_argument("--format", choices=["csv", "binary"])
    p.add_argument("--polarity", action="store_true", help="fourth CSV column is DVS polarity")
    p.add_argument("--sort", action="store_true", help="sort an unsorted stream instead of rejecting it")
    p.add_argument("--oracle", action="store_true", help="cross-check against the dense reference")
    p.add_argument("--freq", type=float)
    p.add_argument("--events-out", help="write output spikes (CSV, or binary for .kev)")
    _output_opts(p)
    p.set_defaults(func=cmd_sne_run)

    p = sne.add_parser("sweep", help="throughput and energy versus input activity")
    p.add_argument("--activity", type=_range, default=(0.01, 0.20, 0.01), help="MIN:MAX:STEP")
    p.add_argument("--freq", type=float)
    p.add_argument("--simulate", metavar="NET", help="also measure SOPs on this network with synthetic streams")
    p.add_argument("--ticks", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _output_opts(p)
    p.set_defaults(func=cmd_sne_sweep)

    cutie = top.add_parser("cutie", help="ternary engine").add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, func in (("run", cmd_cutie_run), ("cycles", cmd_cutie_cycles)):
        p = cutie.add_parser(name)
        p.add_argument("net")
        if name == "run":
            p.add_argument("input", help="PGM/PPM image or .trits text tensor")
        p.add_argument("--freq", type=float)
        p.add_argument("--overhead", type=int, help="cycles of overhead per layer")
        _output_opts(p)
        p.set_defaults(func=func)

    pulp = top.add_parser("pulp", help="cluster model").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = pulp.add_parser("estimate", help="cycles for a convolution patch")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--net", help="pulp-patch description")
    src.add_argument("--patch", type=_dims, metavar="N_OUT,C_IN,C_OUT,K")
    p.add_argument("--a-bits", type=int, default=8, choices=[2, 4, 8])
    p.add_argument("--w-bits", type=int, default=8, choices=[2, 4, 8])
    p.add_argument("--no-mac-ld", action="store_true")
    p.add_argument("--macs", type=int, help="MACs of a whole network for an inference-rate row")
    p.add_argument("--freq", type=float)
    _output_opts(p)
    p.set_defaults(func=cmd_pulp_estimate)

    cod = top.add_parser("codec", help="ternary packing").add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, func in (("pack", cmd_codec_pack), ("unpack", cmd_codec_unpack)):
        p = cod.add_parser(name)
        p.add_argument("input")
        p.add_argument("output")
        p.set_defaults(func=func)

    p = top.add_parser("gen", help="write a deterministic synthetic workload")
    p.add_argument("kind", choices=["sne", "cutie", "patch"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--name", default="net")
    p.add_argument("--dims", type=_dims)
    p.add_argument("--density", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=_dims, help="sne: output channels per layer")
    p.add_argument("--ticks", type=int, help="sne: stream length in ticks")
    p.set_defaults(func=cmd_gen)

    p = top.add_parser("report", help="consolidated report of the reference workloads")
    _output_opts(p)
    p.set_defaults(func=cmd_report)

    p = top.add_parser("calibrate", help="regenerate the calibration file from the anchor values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cal = load_calibration(args.config) if args.group in ("sne", "cutie", "pulp", "report") else None
        if args.group == "pulp" and args.action == "estimate" and args.patch is not None and len(args.patch) != 4:
            parser.error("--patch needs four integers")
        args.func(args, cal)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (InvariantFailure, MemoryBudgetExceeded) as exc:
        print(f"kraken-sim: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (KrakenError, OSError, ValueError) as exc:
        print(f"kraken-sim: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
