"""``smbstat`` command line.

Every subcommand writes ``<command>.json`` (and CSV tables where useful) plus
``manifest.json`` into ``--out-dir``. Exit codes: 0 success, 2 invalid input,
3 results flagged unreliable (or a failed invariant in ``verify``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, checks, infostats, mixing, oracle
from .errors import SmbError, ValidationError
from .limits import clt_sample, lil_statistic, rate_fit, stein_defaults, stein_diagnostic, wip_diagnostics, wip_paths
from .model import MarkovModel, TruncationPolicy, ingest_stream, load_model

EXIT_OK, EXIT_INVALID, EXIT_UNRELIABLE = 0, 2, 3
SEED_ENV = "SMB_SEED"
# flags that change wall time only and stay out of the input digest
RUNTIME_FLAGS = ("workers", "out_dir")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _parse_floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _parse_ints(text: str) -> list:
    """``"0,1,5"`` or ``"0:10"`` (inclusive range) or ``"0:10:2"``."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) not in (2, 3):
            raise ValidationError(f"bad range {text!r}")
        step = parts[2] if len(parts) == 3 else 1
        return list(range(parts[0], parts[1] + 1, step))
    vals = _parse_floats(text)
    if any(v != int(v) for v in vals):
        raise ValidationError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _parse_pairs(text: str) -> list:
    out = []
    for item in text.split(","):
        try:
            s, t = (float(x) for x in item.split(":"))
        except ValueError:
            raise ValidationError(f"bad pair {item!r}; expected s:t") from None
        out.append((s, t))
    return out


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"{SEED_ENV}={env!r} is not an integer") from None


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# commands; each returns ({filename: text}, unreliable_flags)


def _model(args):
    if not args.model:
        raise ValidationError("--model is required for this command")
    return load_model(args.model)


def _policy(args) -> TruncationPolicy:
    return TruncationPolicy(tail_mass=args.tail_mass)


def cmd_entropy(args):
    model = _model(args)
    grid = _parse_ints(args.m_grid)
    est = infostats.entropy_rate_estimate(model, grid, _policy(args))
    rep = infostats.moment_report(model, args.n, orders=(1.0,), policy=_policy(args))
    try:
        h = oracle.entropy_rate(model)
    except ValidationError:
        h = None
    body = {"n": args.n, "H_n": rep.H_n, "entropy_rate": h, "estimate": est.to_dict(), "retained_mass": rep.retained_mass}
    flags = est.flags + rep.flags
    return {"entropy.json": dumps(body)}, flags


def cmd_variance(args):
    model = _model(args)
    body = {"model": model.to_dict()}
    flags = []
    if isinstance(model, MarkovModel):
        br = oracle.markov_variance(model.p, model.P, args.tail_tol)
        body["breakdown"] = br.to_dict()
        body["sigma2"] = br.sigma2
        flags += br.flags
    else:
        body["sigma2"] = oracle.variance_rate(model)
    est = infostats.variance_rate_estimate(model, args.n, _policy(args))
    body["extrapolated"] = {k: est[k] for k in ("n_max", "sigma2_over_n", "richardson_1", "sigma2_hat")}
    body["sigma2_n"] = est["sigma2_n"]
    return {"variance.json": dumps(body)}, flags


def cmd_moments(args):
    model = _model(args)
    orders = _parse_floats(args.orders)
    ns = _parse_ints(args.n_grid) if args.n_grid else [args.n]
    reps = [infostats.moment_report(model, n, orders, _policy(args)) for n in ns]
    flags = [f for r in reps for f in r.flags if not r.reliable]
    body = {"reports": [r.to_dict() for r in reps]}
    if len(ns) >= 3:
        g = infostats.moment_growth(model, ns, _policy(args))
        body["growth"] = {k: g[k] for k in ("exponent_M3", "exponent_M4", "loglog_M3", "loglog_M4")}
    header = ["n", "H_n", "K2", "K3", "K4", "sigma2", "M3", "M4", "retained_mass"]
    return {"moments.json": dumps(body), "moments.csv": _csv_text(header, infostats.moments_csv_rows(reps))}, flags


def cmd_mixing(args):
    model = _model(args)
    depths = [(n, m) for n in range(1, args.max_depth + 1) for m in range(1, args.max_depth + 1)]
    prof = mixing.mixing_profile(model, _parse_ints(args.delta_grid), depths, _policy(args), workers=args.workers)
    decay = mixing.max_cylinder_decay(model, _parse_ints(args.n_grid))
    body = {"profile": prof.to_dict(), "max_cylinder_decay": decay}
    header = ["delta", "psi", "phi", "alpha_lo", "alpha_hi"]
    return {"mixing.json": dumps(body), "mixing.csv": _csv_text(header, prof.csv_rows())}, prof.flags


def cmd_clt(args):
    model = _model(args)
    rep = clt_sample(model, args.n, args.N, _seed(args), args.centering, args.scaling, workers=args.workers)
    return {"clt.json": dumps(rep.to_dict()), "clt.csv": _csv_text(["t", "Xi_n", "normal"], rep.csv_rows())}, rep.flags


def cmd_rate(args):
    model = _model(args)
    ns = [int(round(10**x)) for x in _parse_floats(args.log10_n_grid)]
    rep = rate_fit(model, ns, args.N, _seed(args), args.centering, args.scaling, args.bootstrap, workers=args.workers)
    return {"rate.json": dumps(rep.to_dict())}, rep.flags


def cmd_stein(args):
    model = _model(args)
    if args.m is None or args.r is None or args.delta is None:
        d = stein_defaults(args.n)
        m = args.m if args.m is not None else d["m"]
        delta = args.delta if args.delta is not None else d["delta"]
        r = args.r if args.r is not None else d["r"]
    else:
        m, delta, r = args.m, args.delta, args.r
    rep = stein_diagnostic(model, m, delta, r, args.N, _seed(args), workers=args.workers)
    body = rep.to_dict()
    body["bound_holds"] = rep.bound_holds
    body["slope_consistent"] = rep.slope_consistent
    return {"stein.json": dumps(body)}, rep.flags


def cmd_lil(args):
    model = _model(args)
    rep = lil_statistic(model, args.n, args.N, _seed(args), workers=args.workers)
    flags = [] if rep.all_finite else ["non-finite statistic on some path"]
    return {"lil.json": dumps(rep.to_dict())}, flags


def cmd_wip(args):
    model = _model(args)
    pairs = _parse_pairs(args.pairs)
    times = sorted({0.0, 1.0} | {x for p in pairs for x in p} | set(np.linspace(0, 1, args.grid).tolist()))
    ens = wip_paths(model, args.n, args.N, times, _seed(args), workers=args.workers)
    diag = wip_diagnostics(ens, pairs)
    body = {"n": ens.n, "N": ens.N, "sigma_used": ens.sigma_used, "h_used": ens.h_used, "seed": ens.seed,
            "t": ens.t.tolist(), "diagnostics": diag}
    files = {"wip.json": dumps(body)}
    if args.paths_csv:
        files["wip_paths.csv"] = _csv_text(["t", "path_id", "value"], ens.csv_rows())
    return files, []


def cmd_ingest(args):
    if not args.source:
        raise ValidationError("--source is required for ingest")
    try:
        text = Path(args.source).read_text()
    except OSError as exc:
        raise ValidationError(f"{args.source}: cannot read: {exc.strerror}") from None
    model = ingest_stream(text, args.order)
    body = model.to_dict()
    body["provenance"] = model.provenance
    flags = list(model.provenance.get("flags", []))
    for f in flags:
        print(f"warning: {f}", file=sys.stderr)
    # removed symbols are reported but do not make the fitted model unreliable
    return {"model.json": dumps(body)}, []


def cmd_verify(args):
    model = _model(args)
    res = checks.run_suite(model)
    failed = [c.name for c in res if c.status == "fail"]
    body = {"checks": [c.to_dict() for c in res], "failed": failed}
    return {"verify.json": dumps(body)}, [f"check failed: {n}" for n in failed]


COMMANDS = {
    "entropy": (cmd_entropy, "entropy H_n and the extrapolated entropy rate"),
    "variance": (cmd_variance, "asymptotic variance: closed form and extrapolation"),
    "moments": (cmd_moments, "H_n, K_w, sigma_n^2, M3, M4 by exact enumeration"),
    "mixing": (cmd_mixing, "psi, phi, alpha over a gap grid, with decay fit"),
    "clt": (cmd_clt, "Monte Carlo distribution of the normalised information"),
    "rate": (cmd_rate, "KS distance across n and the fitted rate exponent"),
    "stein": (cmd_stein, "exchangeable-pair bound for blocked sums"),
    "lil": (cmd_lil, "iterated-logarithm running maxima"),
    "wip": (cmd_wip, "interpolated path ensemble and increment diagnostics"),
    "ingest": (cmd_ingest, "fit an empirical model to a symbol stream"),
    "verify": (cmd_verify, "run the invariant suite on a model"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smbstat", description="Information-function statistics and limit-theorem diagnostics.",
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--version", action="version", version=f"smbstat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON file")
    common.add_argument("--out-dir", default="smbstat_out", help="directory for reports and manifest")
    common.add_argument("--seed", type=int, default=None, help=f"master seed (falls back to ${SEED_ENV}, then 0)")
    common.add_argument("--workers", type=int, default=1, help="worker threads; never changes results")
    common.add_argument("--tail-mass", type=float, default=1e-12, help="enumeration tail mass epsilon")

    def add(name):
        fn, help_text = COMMANDS[name]
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sp.set_defaults(func=fn)
        return sp

    sp = add("entropy")
    sp.add_argument("--n", type=int, default=10, help="depth for H_n")
    sp.add_argument("--m-grid", default="2,4,6,8,10,12", help="depths for the entropy-rate fit")

    sp = add("variance")
    sp.add_argument("--n", type=int, default=14, help="largest depth for the extrapolation")
    sp.add_argument("--tail-tol", type=float, default=1e-12, help="truncation tolerance of the correlation series")

    sp = add("moments")
    sp.add_argument("--n", type=int, default=5, help="depth")
    sp.add_argument("--n-grid", default=None, help="several depths, e.g. 4:14 (overrides --n)")
    sp.add_argument("--orders", default="2,3,4,4.5", help="moment orders w")

    sp = add("mixing")
    sp.add_argument("--delta-grid", default="0:20", help="gaps, list or lo:hi[:step]")
    sp.add_argument("--max-depth", type=int, default=3, help="block lengths n, m range over 1..max-depth")
    sp.add_argument("--n-grid", default="1:20", help="depths for the largest-atom decay")

    for name in ("clt", "rate"):
        sp = add(name)
        sp.add_argument("--N", type=int, default=100_000, help="Monte Carlo sample size")
        sp.add_argument("--centering", choices=("H_n", "nh"), default="H_n")
        sp.add_argument("--scaling", choices=("sigma_n", "sigma_sqrt_n"), default="sigma_n")
        if name == "clt":
            sp.add_argument("--n", type=int, default=10_000, help="depth")
        else:
            sp.add_argument("--log10-n-grid", default="2,2.5,3,3.5,4", help="log10 of the depths")
            sp.add_argument("--bootstrap", type=int, default=100, help="bootstrap replicates for the interval")

    sp = add("stein")
    sp.add_argument("--n", type=int, default=10_000, help="total length used for default block sizes")
    sp.add_argument("--m", type=int, default=None, help="block length")
    sp.add_argument("--delta", type=int, default=None, help="gap between blocks")
    sp.add_argument("--r", type=int, default=None, help="number of blocks")
    sp.add_argument("--N", type=int, default=100_000, help="Monte Carlo replicates")

    sp = add("lil")
    sp.add_argument("--n", type=int, default=1_000_000, help="path length n_max")
    sp.add_argument("--N", type=int, default=200, help="number of paths")

    sp = add("wip")
    sp.add_argument("--n", type=int, default=10_000, help="path length")
    sp.add_argument("--N", type=int, default=10_000, help="number of paths")
    sp.add_argument("--grid", type=int, default=11, help="number of equally spaced times")
    sp.add_argument("--pairs", default="0:1,0:0.5,0.5:1,0.25:0.75", help="increments s:t")
    sp.add_argument("--paths-csv", action="store_true", help="also write every path as CSV")

    sp = add("ingest")
    sp.add_argument("--source", help="whitespace-separated symbol stream")
    sp.add_argument("--order", type=int, choices=(0, 1), default=0)

    add("verify")
    return p


def _manifest(args, argv, files: dict) -> dict:
    inputs = {k: v for k, v in sorted(vars(args).items()) if k not in RUNTIME_FLAGS + ("func",)}
    inputs["seed"] = _seed(args)
    model_digest = None
    if getattr(args, "model", None):
        model_digest = _sha256(Path(args.model).read_bytes())
    if getattr(args, "source", None):
        inputs["source_sha256"] = _sha256(Path(args.source).read_bytes())
    inputs["model_sha256"] = model_digest
    inputs["version"] = __version__
    return {
        "tool": "smbstat",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "inputs": inputs,
        "inputs_sha256": _sha256(dumps(inputs).encode()),
        "runtime": {"workers": args.workers},
        "outputs": {name: _sha256(text.encode()) for name, text in sorted(files.items())},
    }


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    warnings.showwarning = _show_warning
    try:
        with np.errstate(all="ignore"):
            files, flags = args.func(args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)
        (out / "manifest.json").write_text(dumps(_manifest(args, argv, files)))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SmbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNRELIABLE
    if flags:
        for f in flags:
            print(f"unreliable: {f}", file=sys.stderr)
        return EXIT_UNRELIABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
