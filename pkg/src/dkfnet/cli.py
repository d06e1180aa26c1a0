"""Command line front end.

Subcommands: validate a network file, search for a certified gain
design, run a scenario to the CSV bundle, verify externally produced
steady-state covariances, and check a reconfiguration request without
running anything.

Exit codes are part of the contract: 0 success or certified, 1 usage
or parse error, 2 a check that ran and failed.
"""

import argparse
import json
import os
import sys

import numpy as np

from .design import (
    centralized_design_search,
    default_certificate,
    load_certificate,
    save_certificate,
    verify_pbar,
)
from .matio import load_matrix
from .network import load_network, validate_assumptions
from .pnp import (
    EVENT_ADD_SENSOR,
    EVENT_PLUG,
    EVENT_REPLACE_SENSORS,
    EVENT_UNPLUG,
    add_sensor,
    evaluate_plugin,
    evaluate_unplug,
    replace_sensors,
)
from .sim import SimulationHalted, event_from_dict, load_scenario, \
    simulate, write_csv_bundle

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2

_LOAD_ERRORS = (OSError, ValueError, KeyError, TypeError,
                json.JSONDecodeError)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract reserves 2 for
    # failed checks, so usage problems are remapped to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fail(msg) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


def cmd_validate(args) -> int:
    try:
        net = load_network(args.config)
    except _LOAD_ERRORS as exc:
        return _fail(exc)
    report = validate_assumptions(net, pbh_tol=args.tol)
    print("subsystem  invertible_A  detectable  detectable_scaled  "
          "stabilizable  stabilizable_scaled")
    for i in sorted(report.per_subsystem):
        a = report.per_subsystem[i]
        print(f"{i:>9}  {_yn(a.invertible_A):>12}  {_yn(a.detectable):>10}  "
              f"{_yn(a.detectable_scaled):>17}  {_yn(a.stabilizable):>12}  "
              f"{_yn(a.stabilizable_scaled):>19}")
    if report.ok:
        print("all structural checks passed")
        return EXIT_OK
    for i, msgs in sorted(report.failures().items()):
        print(f"subsystem {i} fails: {', '.join(msgs)}")
    return EXIT_CHECK_FAILED


def cmd_design(args) -> int:
    try:
        net = load_network(args.config)
    except _LOAD_ERRORS as exc:
        return _fail(exc)
    result = centralized_design_search(net, margin=args.margin)
    cert = result.certificate
    if cert is not None:
        print(f"sigma(Gamma) = {cert.sigma_gamma:.6f}")
        for i in cert.ids:
            d = cert.designs[i]
            print(f"  subsystem {i}: rho = {cert.rho(i):.6f}  "
                  f"theta = {d.theta:.2f}  H = {d.h_mode}")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "certificate.json")
            save_certificate(cert, path)
            print(f"wrote {path}")
    if result.feasible:
        print("certified")
        return EXIT_OK
    print(f"not certified: {result.message}")
    return EXIT_CHECK_FAILED


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.config)
    except _LOAD_ERRORS as exc:
        return _fail(exc)
    if args.seed is not None:
        scenario.seed = args.seed
    try:
        result = simulate(scenario)
    except SimulationHalted as exc:
        print(f"halted: {exc}")
        return EXIT_CHECK_FAILED
    out = args.out or "."
    paths = write_csv_bundle(result, out)
    print(f"wrote {len(paths)} csv files to {out}")
    lo, hi = args.window
    horizon = scenario.horizon
    lo, hi = min(lo, horizon), min(hi, horizon)
    if hi <= lo:
        lo, hi = 0, horizon
        print(f"window clipped to the whole run [0, {horizon})")

    def mean_of(series):
        if series is None:
            return "n/a"
        return format(float(np.mean(series[lo:hi])), ".6g")

    print(f"mean e(t) over steps [{lo}, {hi}): "
          f"dkf = {mean_of(result.e_dkf)}, "
          f"centralized = {mean_of(result.e_central)}")
    if result.decisions:
        for d in result.decisions:
            verdict = "accepted" if d.accepted else "denied"
            extra = " (forced)" if d.forced else ""
            print(f"step {d.step}: {d.kind} of subsystem {d.subject} "
                  f"{verdict}{extra}")
    return EXIT_OK


def cmd_verify_pbar(args) -> int:
    try:
        net = load_network(args.config)
    except _LOAD_ERRORS as exc:
        return _fail(exc)
    pbar = {}
    for i in net.ids:
        path = os.path.join(args.matrices, f"Pbar_{i}.mat")
        if not os.path.exists(path):
            return _fail(f"missing matrix file {path}")
        try:
            pbar[i] = load_matrix(path)
        except ValueError as exc:
            return _fail(exc)
        n = net.subsystem(i).A.shape[0]
        if pbar[i].shape != (n, n):
            return _fail(f"{path}: expected a {n}x{n} matrix, "
                         f"got {pbar[i].shape[0]}x{pbar[i].shape[1]}")
    report = verify_pbar(net, pbar, tol=args.tol)
    for i in sorted(report.residual_min_eig):
        status = "ok" if report.inequality_ok[i] else "FAIL"
        print(f"subsystem {i}: residual min eigenvalue "
              f"{report.residual_min_eig[i]: .3e}  {status}")
    print(f"closed-loop spectral radius {report.sigma_closed_loop:.6f}")
    if report.ok:
        print("verified")
        return EXIT_OK
    print("verification failed")
    return EXIT_CHECK_FAILED


def cmd_pnp_check(args) -> int:
    try:
        net = load_network(args.config)
        with open(args.event) as fh:
            ev = event_from_dict(json.load(fh))
    except _LOAD_ERRORS as exc:
        return _fail(exc)
    try:
        if args.certificate:
            cert = load_certificate(args.certificate)
        else:
            cert = default_certificate(net)
    except _LOAD_ERRORS as exc:
        print(f"no usable certificate for the current network: {exc}")
        return EXIT_CHECK_FAILED

    if ev.kind == EVENT_PLUG:
        dec = evaluate_plugin(net, cert, ev.model, ev.incoming)
        payload = _decision_json(dec)
    elif ev.kind == EVENT_UNPLUG:
        dec = evaluate_unplug(net, cert, ev.subject, ev.unplug_mode)
        payload = _decision_json(dec)
    elif ev.kind == EVENT_ADD_SENSOR:
        _, cert2 = add_sensor(net, cert, ev.subject, ev.C, ev.R)
        payload = {"kind": ev.kind, "subject": ev.subject, "accepted": True,
                   "reasons": [],
                   "rho_before": _str_keys(cert.rho_map()),
                   "rho_after": _str_keys(cert2.rho_map()),
                   "lam_after": {}}
    elif ev.kind == EVENT_REPLACE_SENSORS:
        dec = replace_sensors(net, cert, ev.subject, ev.C, ev.R)
        payload = _decision_json(dec)
    else:
        return _fail(f"unknown event kind {ev.kind!r}")

    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK if payload["accepted"] else EXIT_CHECK_FAILED


def _str_keys(d):
    return {str(k): float(v) for k, v in d.items()}


def _decision_json(dec) -> dict:
    return {
        "kind": dec.event,
        "subject": dec.subject,
        "accepted": dec.accepted,
        "reasons": list(dec.reasons),
        "rho_before": _str_keys(dec.rho_before or {}),
        "rho_after": (_str_keys(dec.rho_after)
                      if dec.rho_after is not None else None),
        "lam_after": _str_keys(dec.lam_after or {}),
    }


def _window(text: str):
    try:
        a, b = text.split(":")
        lo, hi = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError("window must look like 30:100")
    if lo < 0 or hi <= lo:
        raise argparse.ArgumentTypeError("window must be a nonempty "
                                         "nonnegative range")
    return lo, hi


def _build_parser() -> _Parser:
    parser = _Parser(prog="dkfnet",
                     description="distributed estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate",
                       help="structural checks on a network file")
    p.add_argument("--config", required=True, help="network JSON")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="rank tolerance for the structural tests")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("design",
                       help="search for a certified gain design")
    p.add_argument("--config", required=True, help="network JSON")
    p.add_argument("--out", help="directory for certificate.json")
    p.add_argument("--margin", type=float, default=0.05,
                   help="decay-rate margin above the closed-loop radius")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--out", help="directory for the CSV bundle "
                   "(default: current directory)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--window", type=_window, default=(30, 100),
                   metavar="LO:HI",
                   help="steps for the mean error summary (default 30:100)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-pbar",
                       help="check steady-state covariances from .mat files")
    p.add_argument("--config", required=True, help="network JSON")
    p.add_argument("--matrices", required=True,
                   help="directory holding Pbar_<id>.mat")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="eigenvalue tolerance for the inequality")
    p.set_defaults(func=cmd_verify_pbar)

    p = sub.add_parser("pnp-check",
                       help="evaluate a reconfiguration request")
    p.add_argument("--config", required=True, help="network JSON")
    p.add_argument("--event", required=True, help="event JSON")
    p.add_argument("--certificate",
                   help="certificate JSON (default: design in place)")
    p.add_argument("--out", help="write the decision JSON here as well")
    p.set_defaults(func=cmd_pnp_check)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
