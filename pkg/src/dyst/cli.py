"""Command-line entry point: ``python -m dyst <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import analysis, config as cfgmod, detect, experiments
from .bitcore import BitError, ConfigError
from .channel import ChannelConfig, direct_embedding_baseline, run_channel
from .traffic import (PRESETS, TraceError, read_jsonl, read_pcap, synth_trace, write_jsonl,
                      write_pcap)

log = logging.getLogger("dyst")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# helpers

def int_range(text: str) -> list[int]:
    """'14-18' or '6,8,10' or '7'."""
    out: list[int] = []
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer range {text!r}") from None
    return out


def load_trace(path: str | Path) -> list:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"trace file not found: {p}")
    try:
        if p.suffix in (".pcap", ".cap"):
            return read_pcap(p)
        return read_jsonl(p)
    except TraceError as exc:
        raise DataError(str(exc)) from None


def prepare_out_dir(path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def echo_config(out: Path, command: str, args: argparse.Namespace, extra: dict | None = None) -> None:
    rec = {"command": command,
           "args": {k: v for k, v in vars(args).items() if k != "func" and v is not None}}
    if extra:
        rec.update(extra)
    (out / "config.json").write_text(json.dumps(rec, indent=2, sort_keys=True, default=str) + "\n")


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.10g}"


def _svg(path: Path, draw) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "dyst"
    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# --------------------------------------------------------------------------
# commands

def cmd_gen(args) -> int:
    rate, duration = args.rate, args.duration
    if args.preset:
        rate = PRESETS[args.preset].rate_per_hour
    if rate <= 0 or duration <= 0:
        raise UsageError("--rate and --duration must be positive")
    if not 0 <= args.mix <= 1:
        raise UsageError("--mix must lie in [0, 1]")
    trace = synth_trace(rate, duration, args.mix, args.seed)
    out = prepare_out_dir(args.out_dir)
    n = write_jsonl(trace, out / args.name)
    if args.pcap:
        write_pcap(trace, out / (Path(args.name).stem + ".pcap"))
    echo_config(out, "gen", args, {"rate_per_hour": rate})
    print(f"wrote {n} records to {out / args.name}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    trace = load_trace(args.capture)
    out = prepare_out_dir(args.out_dir)
    n = write_jsonl(trace, out / args.name)
    echo_config(out, "ingest", args)
    print(f"wrote {n} records to {out / args.name}")
    return EXIT_OK


def _sim_trace(cfg: dict, seed: int, trace_arg: str | None) -> list:
    if trace_arg:
        return load_trace(trace_arg)
    t = cfg["trace"]
    if "path" in t:
        return load_trace(t["path"])
    s = t.get("synth")
    if not isinstance(s, dict):
        raise ConfigError("config field 'trace': needs 'path' or 'synth'")
    try:
        return synth_trace(float(s["rate_per_hour"]), float(s["duration_s"]),
                           float(s.get("mix", 1.0)), seed)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"config field 'trace.synth': {exc}") from None


def cmd_sim(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.preset:
        cfg = cfgmod.apply_preset(cfg, args.preset)
    seed = args.seed if args.seed is not None else int(cfg["seed"])
    runs = cfgmod.build_runs(cfg)
    message = cfgmod.message_bytes(cfg)
    trace = _sim_trace(cfg, seed, args.trace)
    if not trace:
        raise DataError("trace is empty")
    reports = []
    for run in runs:
        rep = run_channel(trace, run.channel, message, run.jitter, seed, run.signal_jitter)
        reports.append((run.name, rep))
    # outputs are written only once every run succeeded
    out = prepare_out_dir(args.out_dir)
    cfg["seed"] = seed
    echo_config(out, "sim", args, {"config": cfg})
    lines = []
    for name, rep in reports:
        rep.save(out / f"{name}.transcript.json")
        lines.append(f"{name}: {rep.summary()}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_pareto(args) -> int:
    try:
        variants, skipped = analysis.standard_grid(args.basic_h, args.payload_bits, args.c,
                                                args.t, args.checksums)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not variants:
        raise UsageError("the parameter grid is empty")
    seeds = (args.seed, args.seed + 1)
    rows = analysis.sweep(variants, mc_samples=args.mc_samples, seeds=seeds,
                          mc_max_distance=args.mc_max_distance,
                          use_mc_for_front=args.front == "mc")
    out = prepare_out_dir(args.out_dir)
    echo_config(out, "pareto", args, {"skipped": [list(s) for s in skipped]})
    header = ["mode", "h", "t", "c", "checksum", "distance_analytic", "bw_analytic",
              "distance_mc", "bw_mc", "on_pareto_front", "payload_bits",
              *[f"distance_mc_seed{s}" for s in seeds], "mc_rel_err"]
    table = []
    for r in rows:
        v = r.variant
        per_seed = [_fmt(m.distance) for m in r.mc] + [""] * (len(seeds) - len(r.mc))
        p = r.mc_point()
        mc = ["", ""] if p is None else [_fmt(p.distance), _fmt(p.bandwidth)]
        err = "" if p is None else f"{p.distance / r.analytic.distance - 1:+.5f}"
        table.append([v.mode.value, v.h, v.t, v.c, v.checksum.value if v.checksum else "",
                      _fmt(r.analytic.distance), _fmt(r.analytic.bandwidth), *mc,
                      int(r.on_front), v.payload_bits, *per_seed, err])
    write_csv(out / "pareto.csv", header, table)
    write_csv(out / "front.csv", header, [t for t in table if t[9] == 1])

    def draw(ax):
        for on, style in ((0, dict(c="0.7", s=8, label="dominated")),
                          (1, dict(c="C3", s=14, label="Pareto front"))):
            pts = [(r.analytic.distance, r.analytic.bandwidth) for r in rows if r.on_front == on]
            if pts:
                ax.scatter(*zip(*pts), **style)
        ax.set_xscale("log")
        ax.set_xlabel("distance (PoIs per signal)")
        ax.set_ylabel("bandwidth (bits per PoI)")
        ax.legend()
    if not args.no_plot:
        _svg(out / "pareto.svg", draw)
    n_front = sum(r.on_front for r in rows)
    print(f"{len(rows)} variants ({len(skipped)} skipped), {n_front} on the front "
          f"({100 * n_front / len(rows):.1f}%)")
    for r in rows:
        if r.on_front:
            print(f"  {r.variant.label():40s} distance {r.analytic.distance:12.1f}  "
                  f"bandwidth {r.analytic.bandwidth:.3e}")
    return EXIT_OK


def _parse_recording(spec: str) -> tuple[str, str | None]:
    path, _, tag = spec.partition("=")
    if tag and tag not in ("covert", "filtered", "legit"):
        raise UsageError(f"unknown recording tag {tag!r} (use covert, filtered or legit)")
    return path, tag or None


def cmd_detect(args) -> int:
    recs = [_parse_recording(s) for s in args.recordings]
    series = {}
    for k, (path, tag) in enumerate(recs):
        trace = load_trace(path)
        name = path if path not in series else f"{path}#{k}"
        try:
            series[name] = (tag, detect.extract_ipds(trace, detect.is_arp_request, name))
        except detect.SeriesError as exc:
            raise DataError(f"{path}: {exc}") from None
    out = prepare_out_dir(args.out_dir)
    echo_config(out, "detect", args)
    names = list(series)
    ks_rows = []
    if len(names) < 2:
        warnings.warn("a single recording: KS comparison skipped")
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            r = detect.ks_two_sample(series[a][1], series[b][1])
            ks_rows.append([a, b, f"{r.d_stat:.6f}", f"{r.p_value:.6g}"])
    write_csv(out / "ks.csv", ["recording_id_a", "recording_id_b", "d_stat", "p_value"], ks_rows)
    k_rows = []
    for name in names:
        try:
            wins = detect.compressibility_scores(series[name][1], args.window)
        except detect.SeriesError as exc:
            warnings.warn(f"{name}: {exc}")
            continue
        k_rows += [[name, w.index, f"{w.kappa:.6f}"] for w in wins]
    write_csv(out / "kappa.csv", ["recording_id", "window_index", "kappa"], k_rows)

    tags = {n: series[n][0] for n in names}
    if any(t is None for t in tags.values()):
        if len(names) > 1:
            warnings.warn("untagged recordings: class summary omitted")
    else:
        classes = {"covert-vs-filtered": {"covert", "filtered"},
                   "legit-vs-legit": {"legit"}, "covert-vs-legit": {"covert", "legit"}}
        summary = []
        for cls, want in classes.items():
            ps = [float(r[3]) for r in ks_rows
                  if {tags[r[0]], tags[r[1]]} == want and
                  (len(want) == 2 or tags[r[0]] == tags[r[1]])]
            if ps:
                summary.append([cls, len(ps), f"{sum(ps) / len(ps):.6g}", f"{min(ps):.6g}"])
        write_csv(out / "classes.csv", ["class", "pairs", "mean_p_value", "min_p_value"], summary)
        for row in summary:
            print(f"{row[0]:20s} pairs={row[1]:3d} mean p={row[2]}")
    if k_rows and not args.no_plot:
        def draw(ax):
            for name in names:
                ks = [float(r[2]) for r in k_rows if r[0] == name]
                if ks:
                    ax.hist(ks, bins=20, alpha=0.5, label=Path(name).name)
            ax.set_xlabel("compressibility score")
            ax.legend(fontsize="small")
        _svg(out / "kappa.svg", draw)
    print(f"{len(ks_rows)} KS pairs, {len(k_rows)} compressibility windows")
    return EXIT_OK


def cmd_bench_multipointer(args) -> int:
    out_rows = []
    if args.trace:
        trace = load_trace(args.trace)
        msg = experiments.random_message(4096, args.seed)
        for n in [1 << k for k in range(args.chunk_bits + 1)]:
            cfg = experiments.basic_config(args.h or args.chunk_bits, pointers=n,
                                           chunk_bits=args.chunk_bits)
            rep = direct_embedding_baseline(trace, cfg, msg)
            hours = (trace[-1].ts - trace[0].ts) / 3600.0
            out_rows.append([n, rep.pointer_bits, args.chunk_bits, rep.signals_sent,
                             _fmt(args.chunk_bits * rep.signals_sent / hours),
                             _fmt(rep.bits_delivered / hours), _fmt(rep.caf)])
    else:
        for r in experiments.multipointer_throughput(args.chunk_bits, args.h, args.pois,
                                                     args.rate, args.seed):
            out_rows.append([r.pointers, r.pointer_bits, r.chunk_bits, r.signals,
                             _fmt(r.bitrate), _fmt(r.baseline_bitrate), _fmt(r.caf)])
    out = prepare_out_dir(args.out_dir)
    echo_config(out, "bench-multipointer", args)
    header = ["pointers", "pointer_bits", "chunk_bits", "signals", "bitrate", "baseline_bitrate",
              "caf"]
    write_csv(out / "multipointer.csv", header, out_rows)
    if not args.no_plot:
        def draw(ax):
            xs = [r[1] for r in out_rows]
            ax.plot(xs, [float(r[4]) for r in out_rows], "o-", label="history channel")
            ax.plot(xs, [float(r[5]) for r in out_rows], "s--", label="direct embedding")
            ax.set_xlabel("pointer bits")
            ax.set_ylabel("bits per hour")
            ax.legend()
        _svg(out / "multipointer.svg", draw)
    for r in out_rows:
        print("  ".join(str(x) for x in r))
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="dyst", description="History covert channel simulator and analysis tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp, config=True, trace=True, preset=True):
        if config:
            sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--seed", type=int, default=None if config else 0)
        sp.add_argument("--out-dir", default="out")
        if trace:
            sp.add_argument("--trace", help="JSONL or pcap trace to replay")
        if preset:
            sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--no-plot", action="store_true", help=argparse.SUPPRESS)

    g = sub.add_parser("gen", help="generate a synthetic JSONL trace")
    common(g, config=False, trace=False)
    g.add_argument("--rate", type=float, default=10000.0, help="PoI arrivals per hour")
    g.add_argument("--duration", type=float, default=3600.0, help="seconds")
    g.add_argument("--mix", type=float, default=1.0, help="fraction of arrivals that are PoIs")
    g.add_argument("--name", default="trace.jsonl")
    g.add_argument("--pcap", action="store_true", help="also write a pcap copy")
    g.set_defaults(func=cmd_gen)

    i = sub.add_parser("ingest", help="convert a pcap capture to the JSONL trace format")
    common(i, config=False, trace=False, preset=False)
    i.add_argument("capture")
    i.add_argument("--name", default="trace.jsonl")
    i.set_defaults(func=cmd_ingest)

    s = sub.add_parser("sim", help="run the channel over a trace")
    common(s)
    s.set_defaults(func=cmd_sim)

    pa = sub.add_parser("pareto", help="distance/bandwidth sweep and Pareto front")
    common(pa, config=False, trace=False, preset=False)
    pa.add_argument("--basic-h", type=int_range, default=list(range(14, 21)))
    pa.add_argument("--payload-bits", type=int_range, default=list(range(14, 19)))
    pa.add_argument("--c", type=int_range, default=list(range(6, 11)))
    pa.add_argument("--t", type=int_range, default=list(range(1, 6)))
    pa.add_argument("--checksums", type=lambda s: [x for x in s.split(",") if x],
                    default=["sha3", "crc8", "adhoc"])
    pa.add_argument("--mc-samples", type=int, default=0,
                    help="PRF hashes per Monte-Carlo run (0 = analytic only)")
    pa.add_argument("--mc-max-distance", type=float, default=1e5)
    pa.add_argument("--front", choices=("analytic", "mc"), default="analytic")
    pa.set_defaults(func=cmd_pareto)

    d = sub.add_parser("detect", help="KS and compressibility over recordings")
    common(d, config=False, trace=False, preset=False)
    d.add_argument("recordings", nargs="+", help="trace files, optionally PATH=covert|filtered|legit")
    d.add_argument("--window", type=int, default=detect.KAPPA_WINDOW)
    d.set_defaults(func=cmd_detect)

    b = sub.add_parser("bench-multipointer", help="throughput against direct embedding")
    common(b, config=False, preset=False)
    b.add_argument("--chunk-bits", type=int, default=8)
    b.add_argument("--h", type=int, default=None)
    b.add_argument("--pois", type=int, default=50000)
    b.add_argument("--rate", type=float, default=7300.0)
    b.set_defaults(func=cmd_bench_multipointer)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dyst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except cfgmod.ConfigFieldError as exc:
        print(f"dyst: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, TraceError, ConfigError, BitError) as exc:
        print(f"dyst: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
