"""Command line front end: ``qpholder <subcommand> ...``.

Every subcommand writes machine-readable output (CSV, JSON or JSON lines) to
stdout with floats at 17 significant digits.
"""

import argparse
import csv
import dataclasses
import json
import math
import sys

import numpy as np

from .cocycle import SchrodingerCocycle, lyapunov_exponent, rotation_number
from .holder import ScanConfig, holder_scan
from .kam import KamAbort, KamConfig, schrodinger_kam
from .torus import AnalyticTorusFunction, FrequencyVector, check_diophantine
from .weyl import accumulate_Pk

GOLDEN = (math.sqrt(5) - 1) / 2


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _energies(text):
    """'a:b:n' -> n points from a to b; a plain number -> one point."""
    parts = text.split(":")
    if len(parts) == 3:
        return list(np.linspace(float(parts[0]), float(parts[1]), int(parts[2])))
    return [float(text)]


def _g(x):
    return format(float(x), ".17g")


def _cocycle(args, E):
    alpha = FrequencyVector(_floats(args.alpha)) if args.alpha else FrequencyVector([GOLDEN])
    if args.potential:
        with open(args.potential) as fh:
            V = AnalyticTorusFunction.from_dict(json.load(fh))
    else:
        V = AnalyticTorusFunction.cosine_potential(alpha.d)
    return SchrodingerCocycle(float(E), args.lam, V, alpha)


def _add_model(p):
    p.add_argument("--potential", help="Fourier-series JSON file (default: sum of cos 2 pi theta_i)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--alpha", help="comma-separated frequencies (default: golden mean)")


def _write_csv(header, rows, out):
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_g(v) for v in row])


def cmd_lyapunov(args, out):
    rows = []
    for E in _energies(args.E):
        rows.append((E, lyapunov_exponent(_cocycle(args, E), n=args.iters, seed=args.seed)))
    _write_csv(("E", "LE"), rows, out)


def cmd_rotation(args, out):
    rows = []
    for E in _energies(args.E):
        rho = rotation_number(_cocycle(args, E), n=args.iters).rho
        rows.append((E, rho if args.cmd == "rotation" else 1.0 - 2.0 * rho))
    _write_csv(("E", "rho" if args.cmd == "rotation" else "N"), rows, out)


def cmd_weyl(args, out):
    sc = _cocycle(args, args.E)
    theta = _floats(args.theta) if args.theta else [0.0] * sc.d
    acc = accumulate_Pk(sc, theta, args.k)
    json.dump(acc.to_dict(), out, indent=1)
    out.write("\n")


def cmd_kam(args, out):
    sc = _cocycle(args, args.E)
    cfg = KamConfig()
    try:
        st = schrodinger_kam(sc, r0=args.r0, max_steps=args.max_steps, floor=args.floor, config=cfg)
        records = st.ledger
        status = 0
    except KamAbort as exc:
        records = exc.state.ledger if exc.state is not None else []
        print(f"kam aborted: {exc}", file=sys.stderr)
        status = 1
    for rec in records:
        out.write(json.dumps(rec.to_json()) + "\n")
    return status


def cmd_holder(args, out):
    cfg = ScanConfig.from_json(args.config)
    rep = holder_scan(cfg, workers=args.workers)
    text = rep.to_csv()
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text)
    else:
        out.write(text)
    summary = rep.to_json()
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(summary + "\n")
    else:
        print(summary, file=sys.stderr)
    return 0 if rep.summary["chain_violations"] == 0 else 2


def cmd_diophantine(args, out):
    cert = check_diophantine(_floats(args.alpha), args.kappa, args.tau, args.N, norm=args.norm)
    doc = {"certified": bool(cert), "kind": type(cert).__name__}
    doc.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(cert).items()})
    json.dump(doc, out, indent=1)
    out.write("\n")
    return 0 if cert else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="qpholder", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("lyapunov", help="Lyapunov exponent on an energy grid")
    _add_model(p)
    p.add_argument("--E", required=True, help="a:b:n or a single energy")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lyapunov)

    for name in ("rotation", "ids"):
        p = sub.add_parser(name, help="fibered rotation number" if name == "rotation" else "IDS = 1 - 2 rho")
        _add_model(p)
        p.add_argument("--E", required=True)
        p.add_argument("--iters", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=cmd_rotation)

    p = sub.add_parser("weyl", help="P_k accumulator as JSON")
    _add_model(p)
    p.add_argument("--E", type=float, required=True)
    p.add_argument("--theta", help="comma-separated cocycle phase")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_weyl)

    p = sub.add_parser("kam-trace", help="KAM iteration ledger as JSON lines")
    _add_model(p)
    p.add_argument("--E", type=float, required=True)
    p.add_argument("--r0", type=float, default=0.05)
    p.add_argument("--max-steps", type=int, default=8)
    p.add_argument("--floor", type=float, default=1e-12)
    p.set_defaults(func=cmd_kam)

    p = sub.add_parser("holder-scan", help="mu(E - eps, E + eps) / sqrt(eps) scan")
    p.add_argument("--config", required=True)
    p.add_argument("--csv", help="write rows here instead of stdout")
    p.add_argument("--summary", help="write the JSON summary here instead of stderr")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_holder)

    p = sub.add_parser("diophantine", help="Diophantine certificate as JSON")
    p.add_argument("--alpha", required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--norm", default="l2", choices=("l2", "sup", "l1"))
    p.set_defaults(func=cmd_diophantine)
    return ap


def main(argv=None, out=None):
    args = build_parser().parse_args(argv)
    status = args.func(args, out or sys.stdout)
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
