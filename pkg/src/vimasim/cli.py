"""Command-line entry point: ``vimasim run | sweep | compare``.

Exit codes: 0 ok, 1 usage, 2 configuration/validation, 3 oracle mismatch,
4 simulated VIMA fault.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import (BACKENDS, KERNELS, MB, ConfigError, SimConfig, ValidationError, apply_overrides,
                     parse_config, validate)
from .kernels import GenerationError
from .metrics import detail_dump, emit_csv, row_from_stats, write_csv
from .simulate import simulate

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_MISMATCH, EXIT_FAULT = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class RunFailure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--kernel", required=True, choices=KERNELS, help="workload kernel")
    p.add_argument("--size-mb", type=float, default=None,
                   help="data set footprint in MiB (default: the config's workload.footprint_bytes)")
    p.add_argument("--seed", type=int, default=None, help="data set seed (default: fixed constant)")
    p.add_argument("--config", metavar="FILE", help="config file of 'section.key = value' lines")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one config key (repeatable), e.g. topology.vima_cache_bytes=32768")
    p.add_argument("--knn-features", type=int, default=None, help="kNN features per instance")
    p.add_argument("--mlp-features", type=int, default=None, help="MLP features per instance")
    p.add_argument("--sample-phases", type=int, default=None,
                   help="simulate this many phases and extrapolate the rest (0 = all)")
    p.add_argument("--idle-uncore-off", action="store_true",
                   help="do not charge host cache static power during VIMA runs")
    p.add_argument("--out", metavar="FILE", default=None, help="CSV output (default: stdout)")
    p.add_argument("--detail", metavar="FILE", default=None,
                   help="write a key = value dump of every counter and energy term")
    p.add_argument("--jobs", type=int, default=1, help="independent simulations run in parallel")
    p.add_argument("--corrupt-output", action="store_true", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vimasim", description="Near-memory vector engine simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="one simulation, one CSV row (appended)")
    _common(run)
    run.add_argument("--backend", required=True, choices=BACKENDS, help="execution backend")
    run.add_argument("--threads", type=int, default=1, help="host threads (avx/scalar backends)")

    sweep = sub.add_parser("sweep", help="one row per value of a config key")
    _common(sweep)
    sweep.add_argument("--backend", default="vima", choices=BACKENDS, help="execution backend")
    sweep.add_argument("--threads", type=int, default=1, help="host threads (avx/scalar backends)")
    sweep.add_argument("--param", required=True, help="config key, e.g. topology.vima_cache_bytes")
    sweep.add_argument("--values", required=True, help="comma-separated values")

    cmp_ = sub.add_parser("compare", help="oracle check, then AVX (per thread count) and VIMA rows")
    _common(cmp_)
    cmp_.add_argument("--threads-list", default="1",
                      help="comma-separated AVX thread counts (AVX-1T is always the baseline)")
    return parser


def base_config(args) -> SimConfig:
    cfg = SimConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = parse_config(fh.read(), cfg, check=False)
    cfg = apply_overrides(cfg, args.set)
    sets = [f"workload.kernel={args.kernel}"]
    if args.size_mb is not None:
        sets.append(f"workload.footprint_bytes={int(round(args.size_mb * MB))}")
    if args.seed is not None:
        sets.append(f"workload.seed={args.seed}")
    if args.knn_features is not None:
        sets.append(f"workload.knn_features={args.knn_features}")
    if args.mlp_features is not None:
        sets.append(f"workload.mlp_features={args.mlp_features}")
    if args.sample_phases is not None:
        sets.append(f"workload.sample_phases={args.sample_phases}")
    if args.idle_uncore_off:
        sets.append("energy.idle_uncore_off=true")
    return apply_overrides(cfg, sets)


def with_run(cfg: SimConfig, backend: str, threads: int) -> SimConfig:
    return apply_overrides(cfg, [f"workload.backend={backend}", f"workload.threads={threads}"])


def _check(cfg: SimConfig):
    errors = validate(cfg)
    if errors:
        raise ValidationError(errors)


def execute(cfg: SimConfig, check: bool = True, corrupt: bool = False):
    """Simulate one point; raise RunFailure on a fault or oracle mismatch."""
    res = simulate(cfg, check=check, corrupt_output=corrupt)
    if res.stats.faults:
        f = res.stats.faults[0]
        raise RunFailure(EXIT_FAULT, f"VIMA fault at instruction {f.get('instr')}: {f.get('reason')}")
    if res.mismatches:
        raise RunFailure(EXIT_MISMATCH, "output differs from the scalar oracle: " + "; ".join(
            str(m) for m in res.mismatches[:3]))
    return res


def _execute_all(cfgs, jobs, corrupt=False):
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(execute, c, True, corrupt) for c in cfgs]
            return [f.result() for f in futs]  # plan order, not completion order
    return [execute(c, True, corrupt) for c in cfgs]


def _summary(row) -> str:
    return (f"{row.kernel} {row.backend} {row.size_mb:g}MB T{row.threads}: "
            f"{row.cycles} cycles, {row.elapsed_ps / 1e6:.3f} us, {row.energy_pj / 1e6:.3f} uJ"
            + (f", speedup {row.speedup:.3f}" if row.speedup is not None else "")
            + (f", energy ratio {row.energy_ratio:.3f}" if row.energy_ratio is not None else ""))


def _emit(rows, args, append, labels=None):
    if args.out:
        emit_csv(rows, args.out, append=append)
    else:
        write_csv(rows, sys.stdout)
    stream = sys.stdout if args.out else sys.stderr
    for i, r in enumerate(rows):
        prefix = f"{labels[i]}: " if labels else ""
        print(prefix + _summary(r), file=stream)


def _dump(args, results):
    if args.detail:
        with open(args.detail, "w") as fh:
            for res in results:
                fh.write(detail_dump(res.stats, res.energy))
                fh.write("\n")


def cmd_run(args):
    cfg = with_run(base_config(args), args.backend, args.threads)
    _check(cfg)
    res = execute(cfg, corrupt=args.corrupt_output)
    _emit([row_from_stats(res.stats, res.energy)], args, append=True)
    _dump(args, [res])


def cmd_sweep(args):
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values needs at least one value")
    base = with_run(base_config(args), args.backend, args.threads)
    cfgs = [apply_overrides(base, [f"{args.param}={v}"]) for v in values]
    for c in cfgs:
        _check(c)
    results = _execute_all(cfgs, args.jobs, args.corrupt_output)
    # the CSV columns are fixed; rows follow the order of --values
    _emit([row_from_stats(r.stats, r.energy) for r in results], args, append=False,
          labels=[f"{args.param}={v}" for v in values])
    _dump(args, results)


def cmd_compare(args):
    try:
        threads = sorted({int(t) for t in args.threads_list.split(",") if t.strip()} | {1})
    except ValueError:
        raise UsageError("--threads-list must be comma-separated integers") from None
    base = base_config(args)
    cfgs = [with_run(base, "avx", t) for t in threads] + [with_run(base, "vima", 1)]
    for c in cfgs:
        _check(c)
    # correctness gates performance: the VIMA run is checked against the oracle first
    vima = execute(cfgs[-1], corrupt=args.corrupt_output)
    avx = _execute_all(cfgs[:-1], args.jobs)
    results = avx + [vima]
    ref, ref_e = avx[0].stats, avx[0].energy
    rows = [row_from_stats(r.stats, r.energy, ref, ref_e) for r in results]
    _emit(rows, args, append=False)
    _dump(args, results)


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"vimasim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print("vimasim: invalid configuration:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, GenerationError, OSError) as exc:
        print(f"vimasim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as exc:
        print(f"vimasim: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
