"""Command line interface.

Verbs:
  bench synthetic|scr|dl   run a workload, write CSV/trace/plot artifacts
  check                    race-check a trace file against a model
  replay                   re-simulate a recorded trace under a calibration

Exit codes: 0 success, 1 usage or input error, 2 storage race detected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import ConfigError, SimConfig, parse_kv_config
from .kernel import World
from .layers import MODEL_NAMES, layer_file
from .races import (
    UnknownModelError,
    UnknownSyncOpError,
    builtin_model,
    check_properly_synchronized,
    races_in,
)
from .trace import ParseError, read_records, records_to_execution_trace
from .workloads import (
    DlConfig,
    ScrConfig,
    plot_script,
    run_dl,
    run_scr,
    run_synthetic,
    synthetic_shape,
    to_csv,
)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config(path: str | None) -> tuple[SimConfig, str | None]:
    """Sim calibration plus optional consistency_model from a run config."""
    if path is None:
        return SimConfig.default(), None
    mapping = parse_kv_config(Path(path).read_text())
    allowed = SimConfig.field_names() | {"consistency_model"}
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    model = mapping.pop("consistency_model", None)
    if model is not None and model not in MODEL_NAMES:
        raise ConfigError(f"bad consistency_model {model!r}")
    return SimConfig.from_mapping(mapping), model


def _write_outputs(args, results) -> None:
    csv_text = to_csv(results)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.trace:
        results[-1].trace.save(args.trace)
    if args.plot:
        Path(args.plot).write_text(plot_script(args.csv or "bench.csv"))


def _add_common(parser):
    parser.add_argument("--model", choices=MODEL_NAMES, help="consistency model")
    parser.add_argument("--config", help="run-config file (calibration keys, consistency_model)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="CSV output path (default: stdout)")
    parser.add_argument("--trace", help="trace output path")
    parser.add_argument("--plot", help="gnuplot script output path")


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="bbfs")
    sub = parser.add_subparsers(dest="verb", required=True)

    bench = sub.add_parser("bench", help="run a benchmark workload")
    bench_sub = bench.add_subparsers(dest="workload", required=True)

    syn = bench_sub.add_parser("synthetic", help="shared-file write/read phases")
    syn.add_argument("--shape", required=True, choices=["cnw", "snw", "ccr", "csr"])
    syn.add_argument("--n", type=int, required=True, help="nodes per role")
    syn.add_argument("--p", type=int, default=1, help="processes per node")
    syn.add_argument("--size", type=int, default=8192, help="access size in bytes")
    syn.add_argument("--mw", type=int, default=10, help="writes per process")
    syn.add_argument("--mr", type=int, default=10, help="reads per process")
    _add_common(syn)

    scr = bench_sub.add_parser("scr", help="checkpoint/restart emulation")
    scr.add_argument("--n", type=int, required=True, help="total nodes incl. spare")
    scr.add_argument("--p", type=int, default=4)
    scr.add_argument("--particles", type=int, default=500_000, help="particles per rank")
    scr.add_argument("--arrays", type=int, default=9)
    scr.add_argument("--value-size", type=int, default=4)
    _add_common(scr)

    dl = bench_sub.add_parser("dl", help="preloaded random-read emulation")
    dl.add_argument("--n", type=int, required=True)
    dl.add_argument("--p", type=int, default=4)
    dl.add_argument("--sample-size", type=int, default=116 * 1024)
    dl.add_argument("--samples-per-proc", type=int, default=32)
    dl.add_argument("--epochs", type=int, default=1)
    _add_common(dl)

    check = sub.add_parser("check", help="race-check a trace against a model")
    check.add_argument("--model", required=True, help="model name (posix, commit, commit-relaxed, session, mpiio)")
    check.add_argument("--trace", required=True)
    check.add_argument("--json", dest="json_out", help="also write machine-readable reports")

    replay = sub.add_parser("replay", help="re-simulate a recorded trace")
    replay.add_argument("--trace", required=True)
    replay.add_argument("--model", choices=MODEL_NAMES, required=True)
    replay.add_argument("--config", help="run-config file")
    return parser


def _pick_model(args, file_model: str | None, default: str = "commit") -> str:
    return args.model or file_model or default


def cmd_bench(args) -> int:
    sim_config, file_model = _load_config(args.config)
    if args.seed:
        sim_config.seed = args.seed
    if args.workload == "synthetic":
        config = synthetic_shape(
            args.shape, args.n, args.p, writes_per_proc=args.mw, reads_per_proc=args.mr,
            access_size=args.size, model=_pick_model(args, file_model), seed=args.seed,
        )
        results = [run_synthetic(sim_config, config)]
    elif args.workload == "scr":
        config = ScrConfig(args.n, args.p, particles_per_rank=args.particles,
                           arrays=args.arrays, value_size=args.value_size,
                           model=_pick_model(args, file_model, "session"), seed=args.seed)
        results = [run_scr(sim_config, config)]
    else:
        config = DlConfig(args.n, args.p, sample_size=args.sample_size,
                          samples_per_proc=args.samples_per_proc, epochs=args.epochs,
                          model=_pick_model(args, file_model, "session"), seed=args.seed)
        results = [run_dl(sim_config, config)]
    _write_outputs(args, results)
    return 0


def cmd_check(args) -> int:
    model = builtin_model(args.model)
    trace = records_to_execution_trace(read_records(args.trace))
    reports = check_properly_synchronized(trace, model)
    races = races_in(reports)
    for rep in reports:
        print(rep.describe())
    print(f"{len(reports)} conflicting pair(s), {len(races)} race(s) under model {model.name!r}")
    if args.json_out:
        payload = {"model": model.name, "reports": [rep.to_dict() for rep in reports]}
        Path(args.json_out).write_text(json.dumps(payload, indent=2) + "\n")
    return 2 if races else 0


def cmd_replay(args) -> int:
    sim_config, file_model = _load_config(args.config)
    records = read_records(args.trace)
    records_to_execution_trace(records)  # validate before running
    model = args.model or file_model or "commit"
    final, accounting = replay_records(records, model, sim_config)
    ops = sum(1 for r in records if r.kind != "so")
    print(f"replayed {ops} op(s) under model {model!r}: final clock {final:.9f} s")
    for kind, count in sorted(accounting["rpc_kind"].items()):
        print(f"  rpc {kind}: {count}")
    return 0


def replay_records(records, model: str, sim_config: SimConfig):
    """Re-execute a recorded operation schedule against the cost model.

    Program order and so edges are taken from the trace; each process runs
    on its own node.  Returns (final clock, accounting snapshot).
    """
    ops_by_proc: dict[int, list] = {}
    blockers: dict[int, list[int]] = {}
    for rec in records:
        if rec.kind == "so":
            blockers.setdefault(rec.to_id, []).append(rec.from_id)
        else:
            ops_by_proc.setdefault(rec.process, []).append(rec)
    if not ops_by_proc:
        return 0.0, World(sim_config, nodes=1).sim.accounting.snapshot()
    procs = sorted(ops_by_proc)
    world = World(sim_config, nodes=len(procs), procs_per_node=1)
    futures = {}
    for recs in ops_by_proc.values():
        for rec in recs:
            futures[rec.seq] = world.sim.future()

    _SYNC_ACTIONS = {"commit", "session_open", "session_close"}

    def proc_body(node_index: int, recs):
        client = world.clients[node_index]
        files: dict[str, object] = {}
        for rec in recs:
            for src in blockers.get(rec.seq, ()):  # cross-process ordering
                if src in futures:
                    yield futures[src]
            f = files.get(rec.file)
            if f is None:
                f = files[rec.file] = layer_file(model, client, rec.file)
                if model == "session" and rec.kind != "sync":
                    yield from f.session_open()
            if rec.kind == "write":
                yield from f.seek(rec.offset)
                yield from f.write(rec.size)
            elif rec.kind == "read":
                yield from f.seek(rec.offset)
                yield from f.read(rec.size)
            else:
                name = rec.sync_name
                if name not in _SYNC_ACTIONS:
                    raise UnknownSyncOpError(f"cannot replay sync op {name!r} under {model!r}")
                if name == "commit" and model == "commit":
                    yield from f.commit()
                elif name == "session_open" and model == "session":
                    if not f._session_open:
                        yield from f.session_open()
                elif name == "session_close" and model == "session":
                    yield from f.session_close()
                else:
                    raise UnknownSyncOpError(f"sync op {name!r} does not belong to model {model!r}")
            futures[rec.seq].set()

    for i, p in enumerate(procs):
        world.sim.spawn(proc_body(i, ops_by_proc[p]))
    final = world.run()
    return final, world.sim.accounting.snapshot()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    try:
        if args.verb == "bench":
            return cmd_bench(args)
        if args.verb == "check":
            return cmd_check(args)
        return cmd_replay(args)
    except (ConfigError, ParseError, UnknownModelError, UnknownSyncOpError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
