"""Command-line workbench: ``cqpolar <subcommand> [flags]``.

Exit codes: 0 success, 2 validation error, 3 resource cap, 4 property-suite failure.
Reals are written with 12 significant digits; files are UTF-8 with LF endings.
With ``--format csv`` the table goes to ``--out`` (or stdout) and the summary
JSON to ``<out>.summary.json`` (or stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, qmath
from .channels import (
    ChannelFamilySpec,
    bob_channel,
    build_channel,
    capacity_ratio_curve,
    channel_fidelity,
    check_classical_environment,
    degradable_range,
    eve_channel,
    is_degradable,
    standard_degrading_map,
    symmetric_coherent_info,
    symmetric_holevo,
    verify_degrading_map,
    FAMILIES,
)
from .polarize import (
    CqChannel,
    auto_table,
    bec,
    combine_minus,
    combine_plus,
    evolve_table,
    fractions_from_table,
    trajectory_rows,
    verify_pure_state_invariance,
)
from .qmath import DimensionError, DomainError, ResourceError
from .wiretap import (
    WiretapCode,
    exact_leakage,
    partition_channels,
    partition_rows,
    reliability_bound,
    security_report,
    set_identity_rate,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_SUITE = 0, 2, 3, 4

SUITES = ("appendix_a", "appendix_b", "lemma1", "conservation")
MODES = ("classical_sc", "quantum_sc", "coherent")


class SuiteFailure(Exception):
    def __init__(self, report: dict):
        super().__init__(report.get("suite", "suite"))
        self.report = report


# --- formatting ---------------------------------------------------------------------------------


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def clean(obj):
    """JSON-safe copy with reals rounded to 12 significant digits; non-finite reals become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(format(v, ".12g")) if math.isfinite(v) else fmt(v)
    return obj


def dump_json(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _write(path: str | None, text: str, stream) -> None:
    if path is None:
        stream.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit(args, summary: dict, header=None, rows=None) -> None:
    summary = dict(summary, seed=args.seed)
    if args.format == "csv" and header is not None:
        _write(args.out, dump_csv(header, rows), sys.stdout)
        side = None if args.out is None else str(Path(args.out)) + ".summary.json"
        _write(side, dump_json(summary), sys.stderr)
        return
    doc = {"summary": summary}
    if header is not None:
        doc["columns"] = list(header)
        doc["rows"] = [list(r) for r in rows]
    _write(args.out, dump_json(doc), sys.stdout)


# --- inputs -------------------------------------------------------------------------------------


def load_spec(text: str | None) -> ChannelFamilySpec:
    if text is None:
        raise DomainError("--spec is required")
    p = Path(text)
    if not text.lstrip().startswith("{") and p.exists():
        text = p.read_text(encoding="utf-8")
    return ChannelFamilySpec.from_json(text)


def level(args) -> int:
    if args.blocklength is not None:
        N = int(args.blocklength)
        n = N.bit_length() - 1
        if N < 1 or 2**n != N:
            raise DimensionError(f"block length {N} is not a power of two")
        return n
    if args.n < 0:
        raise DomainError("--n must be non-negative")
    return args.n


def parse_grid(text: str) -> list[float]:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, k = text.split(":")
            return [float(v) for v in np.linspace(float(a), float(b), int(k))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise DomainError(f"malformed grid {text!r}") from exc


def _pair(args):
    spec = load_spec(args.spec)
    ch = build_channel(spec)
    W = bob_channel(ch)
    Wstar = bob_channel(build_channel(load_spec(args.eve_spec))) if args.eve_spec else eve_channel(ch)
    return spec, ch, W, Wstar


# --- subcommands --------------------------------------------------------------------------------


def cmd_channel_info(args) -> int:
    spec = load_spec(args.spec)
    ch = build_channel(spec)
    W, Wstar = bob_channel(ch), eve_channel(ch)
    report = {
        "channel": spec.to_dict(),
        "I_W": symmetric_holevo(W),
        "I_Wstar": symmetric_holevo(Wstar),
        "I_c": symmetric_coherent_info(ch),
        "F_W": channel_fidelity(W),
        "F_Wstar": channel_fidelity(Wstar),
        "commutator_norm": check_classical_environment(ch),
        "degradable": is_degradable(spec),
        "degradable_range": degradable_range(spec),
    }
    if args.format == "csv":
        emit(args, {}, ("quantity", "value"), [(k, v) for k, v in report.items() if k != "channel"])
    else:
        emit(args, report)
    return EXIT_OK


def cmd_polarize(args) -> int:
    spec = load_spec(args.spec)
    n = level(args)
    W = bob_channel(build_channel(spec))
    table = auto_table(W, n, args.cap)
    good, poor, und = fractions_from_table(table, args.beta)
    rows = [(i, path, lo, up, val) for (_, i, path, lo, up, val) in trajectory_rows(table)]
    summary = {
        "channel": spec.to_dict(),
        "n": n,
        "beta": args.beta,
        "mode": table.kind,
        "good_fraction": good,
        "poor_fraction": poor,
        "undecided_fraction": und,
    }
    emit(args, summary, ("index", "path", "lower_log2", "upper_log2", "exact"), rows)
    return EXIT_OK


def cmd_partition(args) -> int:
    spec, ch, W, Wstar = _pair(args)
    n = level(args)
    p = partition_channels(W, Wstar, n, args.beta, args.cap)
    if p.undecided == 0 and abs(set_identity_rate(p) - len(p.A) / p.N) > 1e-12:
        raise SuiteFailure({"suite": "partition", "reason": "rate identity violated"})
    leak = None
    if n <= 2 and not args.eve_spec:
        leak = exact_leakage(WiretapCode.with_seed(p, args.seed), ch)
    report = security_report(p, leak).to_dict()
    report.update(channel=spec.to_dict(), n=n, beta=args.beta, A=list(p.A), B=list(p.B), X=list(p.X), Y=list(p.Y))
    emit(args, report, ("index", "set", "bob_upper_log2", "eve_lower_log2"), partition_rows(p))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .qpolar.decoders import simulate_classical_sc, simulate_quantum_sc
    from .qpolar.protocol import run_coherent_protocol

    spec, ch, W, Wstar = _pair(args)
    n = level(args)
    p = partition_channels(W, Wstar, n, args.beta, args.cap)
    if args.mode == "coherent":
        trace = run_coherent_protocol(ch, p)
        doc = trace.to_dict()
        doc["satisfies_bound"] = trace.satisfies_bound
        emit(args, doc)
        return EXIT_OK
    code = WiretapCode.with_seed(p, args.seed)
    bound = reliability_bound(p, p.bob_table)
    run = simulate_classical_sc if args.mode == "classical_sc" else simulate_quantum_sc
    res = run(W, code, args.trials, args.seed, bound)
    summary = dict(res.summary(), mode=args.mode, channel=spec.to_dict(), n=n, beta=args.beta)
    rows = [(t, int(e)) for t, e in enumerate(res.errors)]
    rows.append(("summary", res.block_error))
    emit(args, summary, ("trial", "error_flag"), rows)
    return EXIT_OK


def cmd_capacity(args) -> int:
    family = args.family
    if family is None and args.spec is not None:
        family = load_spec(args.spec).family
    if family not in FAMILIES:
        raise DomainError(f"--family must be one of {FAMILIES}")
    grid = parse_grid(args.grid) if args.grid else None
    if grid is None:
        grid = [2, 3, 4, 5, 6] if family == "cloning" else [float(v) for v in np.linspace(0.02, 0.45, 44)]
    rows = [(r.parameter, r.q_true, r.ic_sym, r.ratio, r.flag) for r in capacity_ratio_curve(family, grid)]
    emit(args, {"family": family, "points": len(rows)}, ("parameter", "q_true", "ic_sym", "ratio", "flag"), rows)
    return EXIT_OK


# --- property suites ----------------------------------------------------------------------------


def _rng_dims(rng, lo=2, hi=4) -> int:
    return int(rng.integers(lo, hi + 1))


def suite_appendix_a(trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst, overlaps = 0.0, []
    for _ in range(trials):
        d = _rng_dims(rng)
        a, b = qmath.random_pure(d, rng), qmath.random_pure(d, rng)
        _, _, gap = verify_pure_state_invariance(a, b)
        worst = max(worst, gap)
        overlaps.append(abs(np.vdot(a, b)) ** 2)
    return {"max_gap": worst, "tolerance": 1e-9, "min_overlap": min(overlaps), "max_overlap": max(overlaps),
            "passed": worst <= 1e-9}


def suite_appendix_b(trials: int, seed: int) -> dict:
    rows = {}
    ok = True
    for fam in FAMILIES:
        if fam == "cloning":
            specs = [ChannelFamilySpec(fam, clones=k) for k in range(2, 22)]
        else:
            specs = [ChannelFamilySpec(fam, parameter=float(t)) for t in np.linspace(0.0, 0.95, 20)]
        comm, degr = 0.0, 0.0
        for s in specs:
            ch = build_channel(s)
            comm = max(comm, check_classical_environment(ch))
            if is_degradable(s):
                degr = max(degr, verify_degrading_map(bob_channel(ch), eve_channel(ch), standard_degrading_map(s)))
        fam_ok = comm <= 1e-12 and degr <= 1e-9
        ok &= fam_ok
        rows[fam] = {"max_commutator_norm": comm, "max_degrading_error": degr, "passed": fam_ok}
    return {"families": rows, "passed": ok}


def suite_lemma1(n: int, eps=(0.2, 0.3), beta: float = 0.2) -> dict:
    lo, hi = sorted(eps)
    tb, te = evolve_table(bec(lo), n), evolve_table(bec(hi), n)
    z_ok = bool(np.all(tb.upper_log2 <= te.lower_log2 + 1e-12))
    gb, ge = tb.good_mask(beta), te.good_mask(beta)
    pb, pe = tb.poor_mask(beta), te.poor_mask(beta)
    good_ok = bool(np.all(~ge | gb))
    poor_ok = bool(np.all(~pb | pe))
    return {"pair": [lo, hi], "n": n, "beta": beta, "z_monotone": z_ok, "good_subset": good_ok,
            "poor_subset": poor_ok, "passed": z_ok and good_ok and poor_ok}


def _random_channel(rng) -> CqChannel:
    d = _rng_dims(rng)
    return CqChannel(qmath.random_density(d, rng), qmath.random_density(d, rng))


def suite_conservation(trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        W = _random_channel(rng)
        err = abs(symmetric_holevo(combine_minus(W)) + symmetric_holevo(combine_plus(W)) - 2 * symmetric_holevo(W))
        worst = max(worst, err)
    return {"max_error": worst, "tolerance": 1e-8, "passed": worst <= 1e-8}


def cmd_verify(args) -> int:
    if args.suite == "appendix_a":
        rep = suite_appendix_a(args.trials, args.seed)
    elif args.suite == "appendix_b":
        rep = suite_appendix_b(args.trials, args.seed)
    elif args.suite == "lemma1":
        eps = (0.2, 0.3)
        if args.spec:
            eps = (load_spec(args.spec).parameter, load_spec(args.eve_spec).parameter if args.eve_spec else 0.3)
        rep = suite_lemma1(level(args), eps, args.beta)
    else:
        rep = suite_conservation(args.trials, args.seed)
    rep["suite"] = args.suite
    emit(args, rep)
    return EXIT_OK if rep["passed"] else EXIT_SUITE


# --- entry point --------------------------------------------------------------------------------


def _common(n: int = 4, trials: int = 1000) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="channel spec JSON, inline or a file path")
    common.add_argument("--n", type=int, default=n, help="level; block length N = 2**n")
    common.add_argument("--blocklength", type=int, default=None, help="block length N (power of two), overrides --n")
    common.add_argument("--beta", type=float, default=0.2)
    common.add_argument("--trials", type=int, default=trials)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--cap", type=int, default=128, help="class cap for exact tracking")
    common.add_argument("--eve-spec", default=None, help="channel spec whose Bob output plays Eve")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqpolar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("channel-info", parents=[_common()]).set_defaults(func=cmd_channel_info)
    sub.add_parser("polarize", parents=[_common()]).set_defaults(func=cmd_polarize)
    sub.add_parser("partition", parents=[_common()]).set_defaults(func=cmd_partition)
    sim = sub.add_parser("simulate", parents=[_common()])
    sim.add_argument("--mode", choices=MODES, default="classical_sc")
    sim.set_defaults(func=cmd_simulate)
    cap = sub.add_parser("capacity", parents=[_common()])
    cap.add_argument("--family", choices=FAMILIES, default=None)
    cap.add_argument("--grid", default=None, help="start:stop:count or comma list")
    cap.set_defaults(func=cmd_capacity)
    ver = sub.add_parser("verify", parents=[_common(n=10, trials=100)])
    ver.add_argument("--suite", choices=SUITES, required=True)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.trials <= 0:
        parser.error("--trials must be positive")
    if not 0 < args.beta < 0.5:
        parser.error("--beta must lie in (0, 1/2)")
    try:
        return args.func(args)
    except SuiteFailure as exc:
        sys.stderr.write(dump_json(exc.report))
        return EXIT_SUITE
    except ResourceError as exc:
        sys.stderr.write(f"cqpolar: resource cap: {exc}\n")
        return EXIT_RESOURCE
    except (DomainError, DimensionError, OSError) as exc:
        sys.stderr.write(f"cqpolar: error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
