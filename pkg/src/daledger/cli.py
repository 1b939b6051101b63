"""Command-line harness: benchmarks, sampling tables, scenarios and chain archives.

Exit codes: 0 success, 2 configuration or I/O error, 3 failed trend check or
scenario expectation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path

from . import bench
from .block import MODES, SIMPLISTIC, read_archive, write_archive
from .nmt import DEFAULT_MAX_LEAF_SIZE

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERT = 3


class CheckFailed(Exception):
    pass


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _require(ok: bool, what: str) -> None:
    if not ok:
        raise CheckFailed(what)


# -- trend checks, shared with the acceptance tests ---------------------------------

def check_validity(rows: list[dict]) -> None:
    x = [r["blockSize"] for r in rows]
    fit = bench.fit_line(x, [r["simplisticBytes"] for r in rows], through_origin=True)
    _require(fit["r2"] >= 0.999, f"simplistic R^2 {fit['r2']:.6f} < 0.999")
    ratio = rows[-1]["probabilisticBytes"] / rows[0]["probabilisticBytes"]
    _require(ratio < 8, f"probabilistic growth {ratio:.2f}x >= 8x")


def check_proofsize(rows: list[dict]) -> None:
    x = [r["irrelevantBytes"] for r in rows]
    for col in ("appProofBytesSimplistic", "appProofBytesProbabilistic"):
        cmp = bench.log_vs_linear(x, [r[col] for r in rows])
        _require(cmp["aic_log"] < cmp["aic_linear"], f"{col}: linear fit beats log fit")
    _require(all(r["appProofBytesProbabilistic"] < r["appProofBytesSimplistic"] for r in rows),
             "probabilistic proof not below simplistic")


def check_statesize(rows: list[dict]) -> None:
    _require(len({r["currencyEntries"] for r in rows}) == 1, "currency state size changed")
    total = [r["totalEntries"] for r in rows]
    _require(total == sorted(total) and total[-1] > total[0], "total state did not grow")


def check_registrar(rows: list[dict], kind: str) -> None:
    x = [r["x"] for r in rows]
    y = [r["downloadBytes"] for r in rows]
    if kind == "topUp":
        fit = bench.fit_line(x, y)
        _require(fit["r2"] >= 0.95 and fit["b"] > 0, f"topUp not linear (R^2 {fit['r2']:.4f})")
    else:
        t = bench.linear_term_t(x, y)
        _require(abs(t) < 2, f"register linear term t={t:.2f}")


def check_sampling(rows: list[dict], p: float) -> None:
    for r in rows:
        want = p if r["kind"] == "coverage" else 0.99
        _require(r["coverage"] >= want, f"row n={r['n']} s={r['s']} below target")


# -- subcommands ---------------------------------------------------------------------

def _spec(args, which: str, default_sweep) -> bench.BenchmarkSpec:
    sweep = tuple(args.sweep) if args.sweep else tuple(default_sweep)
    return bench.BenchmarkSpec(which, sweep, args.seed, args.share_size, args.samples,
                               args.max_leaf_size, getattr(args, "mode", SIMPLISTIC))


def cmd_bench_validity(args) -> None:
    rows = bench.bench_validity(_spec(args, "validity", bench.DEFAULT_VALIDITY_SWEEP))
    _emit(rows_to_csv(rows), args.out)
    if args.check:
        check_validity(rows)


def cmd_bench_proofsize(args) -> None:
    rows = bench.bench_proofsize(_spec(args, "proofsize", bench.DEFAULT_DUMMY_SWEEP))
    _emit(rows_to_csv(rows), args.out)
    if args.check:
        check_proofsize(rows)


def cmd_bench_statesize(args) -> None:
    rows = bench.bench_statesize(_spec(args, "statesize", bench.DEFAULT_DUMMY_SWEEP[:9]))
    _emit(rows_to_csv(rows), args.out)
    if args.check:
        check_statesize(rows)


def cmd_bench_registrar(args) -> None:
    which = "registrar-topup" if args.kind == "topUp" else "registrar-register"
    rows = bench.bench_registrar(_spec(args, which, bench.DEFAULT_COUNT_SWEEP), args.kind)
    _emit(rows_to_csv(rows), args.out)
    if args.check:
        check_registrar(rows, args.kind)


def cmd_sampling_table(args) -> None:
    rows = bench.sampling_table(tuple(args.k), args.h, args.p, tuple(args.m))
    _emit(rows_to_csv(rows), args.out)
    if args.check:
        check_sampling(rows, args.p)


def bundled_scenarios() -> list[str]:
    root = resources.files("daledger.netsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("daledger.netsim") / "scenarios" / f"{name}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}")


def cmd_run_scenario(args) -> None:
    from .netsim import Simulation, check_agreement, check_soundness, load_scenario
    from .netsim.checks import expectation_failures

    if args.list:
        print("\n".join(bundled_scenarios()))
        return
    if not args.config:
        raise ValueError("run-scenario needs a config path or bundled name")
    cfg = load_scenario(resolve_scenario(args.config))
    if args.samples is not None:
        cfg = _with_samples(cfg, args.samples)
    sim = Simulation(cfg)
    trace = sim.run()
    chains = {n.id: sim.node_chain(n.id) for n in cfg.nodes if n.honest}
    _emit(trace.to_csv(), args.out)
    failures = expectation_failures(trace, chains)
    verdict = {
        "scenario": cfg.name,
        "soundness": check_soundness(trace),
        "agreement": check_agreement(trace),
        "chains": chains,
        "sync_match": all(r["match"] for r in trace.sync.values()),
        "expectation_failures": failures,
    }
    print(json.dumps(verdict, sort_keys=True), file=sys.stderr)
    if failures:
        raise CheckFailed(f"{cfg.name}: expectation failed: {', '.join(failures)}")


def _with_samples(cfg, samples: int):
    from .netsim import parse_scenario

    raw = dict(cfg.raw)
    raw["samples"] = samples
    return parse_scenario(raw)


def cmd_make_chain(args) -> None:
    if args.mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not args.out or args.out == "-":
        raise ValueError("make-chain needs --out for the archive")
    blocks = bench.make_chain(args.blocks, args.mode, args.transfers, args.dummy_bytes, args.seed,
                              args.share_size, args.max_leaf_size)
    write_archive(args.out, blocks)
    if args.check:
        back = read_archive(args.out, args.share_size)
        _require([b.hash for b in back] == [b.hash for b in blocks], "archive round trip changed blocks")
    summary = [{"height": b.header.height, "hash": b.hash.hex(), "messages": len(b.messages),
                "bytes": b.data_size()} for b in blocks]
    print(json.dumps(summary))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="daledger", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, share_size=225):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--share-size", type=int, default=share_size)
        sp.add_argument("--samples", type=int, default=15)
        sp.add_argument("--max-leaf-size", type=int, default=DEFAULT_MAX_LEAF_SIZE)
        sp.add_argument("--no-check", dest="check", action="store_false", help="skip trend assertions")

    def sweep(sp):
        sp.add_argument("--sweep", type=int, nargs="+", help="x-axis values, strictly increasing")

    sp = sub.add_parser("bench-validity", help="bytes downloaded per validity rule vs block size")
    common(sp, share_size=512)
    sweep(sp)
    sp.set_defaults(func=cmd_bench_validity)

    sp = sub.add_parser("bench-proofsize", help="application proof bytes vs irrelevant data")
    common(sp)
    sweep(sp)
    sp.set_defaults(func=cmd_bench_proofsize)

    sp = sub.add_parser("bench-statesize", help="currency state entries vs irrelevant data")
    common(sp)
    sweep(sp)
    sp.add_argument("--mode", choices=MODES, default=SIMPLISTIC)
    sp.set_defaults(func=cmd_bench_statesize)

    sp = sub.add_parser("bench-registrar", help="registrar client download vs workload")
    common(sp)
    sweep(sp)
    sp.add_argument("--kind", choices=("topUp", "register"), default="topUp")
    sp.add_argument("--mode", choices=MODES, default=SIMPLISTIC)
    sp.set_defaults(func=cmd_bench_registrar)

    sp = sub.add_parser("sampling-table", help="per-node sample counts for a stake split")
    common(sp)
    sp.add_argument("--k", type=int, nargs="+", default=[2, 4, 8])
    sp.add_argument("--h", type=float, default=0.5)
    sp.add_argument("--p", type=float, default=0.99)
    sp.add_argument("--m", type=float, nargs="+", default=[0.5, 0.25, 0.125])
    sp.set_defaults(func=cmd_sampling_table)

    sp = sub.add_parser("run-scenario", help="run a netsim scenario and print verdicts")
    sp.add_argument("config", nargs="?", help="JSON path or bundled scenario name")
    sp.add_argument("--list", action="store_true", help="list bundled scenarios")
    sp.add_argument("--out", default=None, help="trace CSV (default stdout)")
    sp.add_argument("--seed", type=int, default=None, help="unused; seeds live in the config")
    sp.add_argument("--samples", type=int, default=None, help="override the scenario sample count")
    sp.set_defaults(func=cmd_run_scenario)

    sp = sub.add_parser("make-chain", help="build a chain and write a block archive")
    common(sp)
    sp.add_argument("--blocks", type=int, default=4)
    sp.add_argument("--mode", choices=MODES, default=SIMPLISTIC)
    sp.add_argument("--transfers", type=int, default=10)
    sp.add_argument("--dummy-bytes", type=int, default=4096)
    sp.set_defaults(func=cmd_make_chain)
    return p


def main(argv: list[str] | None = None) -> int:
    from .netsim import ConfigError

    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CheckFailed as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_ASSERT
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
