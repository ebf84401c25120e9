"""Command-line front end.

Every subcommand writes one CSV table or one JSON object, to ``--out`` or
standard output. Identical arguments give byte-identical output.

Exit codes: 0 success, 1 failed oracle comparison (``verify``), 2 invalid
parameters, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .ber import ProtocolParams, ber_curve
from .channel import (
    ChannelParams,
    attack_from_channel,
    channel_from_attack,
    gaussian_protocol_secure,
    within_ctl,
)
from .errors import AmpbsaError, ConvergenceError, EmptyAcceptanceError, ParameterError
from .infotheory import PostselectionWindow, info_advantage
from .montecarlo import McConfig, estimate_conditional_bers, verify_against_analytic
from .security import boundary_curve, classify_point

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_PARAMETER = 2
EXIT_CONVERGENCE = 3

_DEFAULT_FORMAT = {
    "params": "json",
    "classify": "json",
    "verify": "json",
}


def fmt(v) -> str:
    """Render one CSV cell; floats keep 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf/nan
        return v if math.isfinite(v) else None
    return v


class Output:
    def __init__(self, command: str, params: dict[str, Any]):
        self.command = command
        self.params = params

    def csv(self, columns: Sequence[str], rows: Iterable[Sequence], units: str, notes: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        buf.write(f"# ampbsa {__version__} {self.command}\n")
        for k in sorted(self.params):
            buf.write(f"# {k} = {fmt(self.params[k])}\n")
        for line in notes:
            buf.write(f"# {line}\n")
        buf.write(f"# units: {units}\n")
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def json(self, data) -> str:
        meta = {
            "tool": "ampbsa",
            "version": __version__,
            "command": self.command,
            "parameters": self.params,
            "seed": self.params.get("seed"),
        }
        doc = {"meta": _jsonable(meta), "data": _jsonable(data)}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- config


def load_config(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment. Keys may use dashes."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------- subcommands


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ParameterError(f"missing required parameter(s): {flags}")


def _channel(args) -> ChannelParams:
    _need(args, "eta", "delta")
    return ChannelParams(args.eta, args.delta)


def _protocol(args) -> ProtocolParams:
    _need(args, "n")
    return ProtocolParams.from_photon_number(args.n)


def _mc(args) -> McConfig:
    return McConfig(
        seed=args.seed,
        rounds=args.rounds,
        bin_width=args.bin_width,
        stream_count=args.streams,
        workers=args.workers,
    )


def cmd_params(args):
    if args.g is not None or args.kappa is not None:
        _need(args, "g", "kappa")
        ch = channel_from_attack(args.g, args.kappa)
    else:
        ch = _channel(args)
    atk = attack_from_channel(ch)
    row = {
        "eta": ch.eta,
        "delta": ch.delta,
        "g": atk.g,
        "kappa": atk.kappa,
        "xi": atk.xi,
        "within_ctl": within_ctl(ch),
        "gaussian_secure": gaussian_protocol_secure(ch),
    }
    out = Output("params", {"eta": ch.eta, "delta": ch.delta})
    if args.format == "json":
        return out.json(row), EXIT_OK
    cols = list(row)
    return out.csv(cols, [[row[c] for c in cols]], "eta, kappa dimensionless; delta in vacuum-variance units; g, xi amplitude ratios"), EXIT_OK


def cmd_classify(args):
    _need(args, "eta", "delta", "n")
    verdict = classify_point(args.eta, args.delta, args.n)
    row = {"eta": args.eta, "delta": args.delta, "n": args.n, "verdict": verdict.value}
    out = Output("classify", {"eta": args.eta, "delta": args.delta, "n": args.n})
    if args.format == "json":
        return out.json(row), EXIT_OK
    cols = list(row)
    return out.csv(cols, [[row[c] for c in cols]], "n in mean photons"), EXIT_OK


def cmd_ber(args):
    ch, pp = _channel(args), _protocol(args)
    if args.steps < 1:
        raise ParameterError("--steps must be >= 1")
    x = np.linspace(args.x_min, args.x_max, args.steps)
    pts = ber_curve(x, pp, ch)
    params = {"eta": ch.eta, "delta": ch.delta, "n": pp.n, "x_min": args.x_min, "x_max": args.x_max, "steps": args.steps}
    out = Output("ber", params)
    cols = ["x", "q_bob", "q_eve", "q_eve_bound"]
    rows = [[p.x, p.q_bob, p.q_eve, p.q_eve_bound] for p in pts]
    if args.format == "json":
        return out.json([dict(zip(cols, r)) for r in rows]), EXIT_OK
    units = "x in quadrature units (coherent-state variance 1/4); BERs are probabilities; q_eve_bound empty outside its validity domain"
    return out.csv(cols, rows, units), EXIT_OK


def cmd_info(args):
    ch, pp = _channel(args), _protocol(args)
    if args.steps < 1:
        raise ParameterError("--steps must be >= 1")
    x0s = np.linspace(args.x0_min, args.x0_max, args.steps)
    rows = []
    for x0 in x0s:
        x1 = args.x1 if args.width is None else x0 + args.width
        w = PostselectionWindow(float(x0), x1)
        r = info_advantage(w, pp, ch, sifting=args.sifting)
        rows.append([w.x0, w.x1 if w.bounded else None, r.i_ab, r.i_ae, r.advantage, r.acceptance_prob])
    params = {
        "eta": ch.eta,
        "delta": ch.delta,
        "n": pp.n,
        "x0_min": args.x0_min,
        "x0_max": args.x0_max,
        "steps": args.steps,
        "x1": args.x1,
        "width": args.width,
        "sifting": args.sifting,
    }
    out = Output("info", params)
    cols = ["x0", "x1", "i_ab", "i_ae", "advantage", "acceptance_prob"]
    if args.format == "json":
        return out.json([dict(zip(cols, r)) for r in rows]), EXIT_OK
    units = "x0, x1 in quadrature units (x1 empty = unbounded); informations in bits per sent signal"
    return out.csv(cols, rows, units), EXIT_OK


def cmd_boundary(args):
    _need(args, "n")
    if args.steps < 1:
        raise ParameterError("--steps must be >= 1")
    etas = np.linspace(args.eta_min, args.eta_max, args.steps)
    curve = boundary_curve(etas, args.n, args.tol, density=args.density, workers=args.workers)
    params = {
        "n": args.n,
        "eta_min": args.eta_min,
        "eta_max": args.eta_max,
        "steps": args.steps,
        "tol": args.tol,
        "density": args.density,
    }
    out = Output("boundary", params)
    failures = curve.failures
    if args.format == "json":
        data = [
            {
                "eta": p.eta,
                "delta_star": p.delta_star,
                "solver_iters": p.iterations,
                "on_xi_line": p.on_xi_line,
                "monotone": p.monotone,
                "error": p.error,
            }
            for p in curve.points
        ]
        text = out.json(data)
    else:
        rows = [[p.eta, p.delta_star if p.ok else None, p.iterations] for p in curve.points]
        notes = [f"failed at eta = {fmt(p.eta)}: {p.error}" for p in failures]
        text = out.csv(["eta", "delta_star", "solver_iters"], rows, "eta dimensionless; delta_star in vacuum-variance units; solver_iters = gap evaluations", notes)
    return text, (EXIT_CONVERGENCE if failures else EXIT_OK)


def cmd_simulate(args):
    ch, pp = _channel(args), _protocol(args)
    cfg = _mc(args)
    est = estimate_conditional_bers(cfg, pp, ch)
    b = est.bins
    params = {
        "eta": ch.eta,
        "delta": ch.delta,
        "n": pp.n,
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "bin_width": cfg.bin_width,
        "streams": cfg.stream_count,
    }
    summary = {
        "bob_mean": est.bob_mean,
        "bob_mean_se": est.bob_mean_se,
        "bob_var": est.bob_var,
        "bob_var_se": est.bob_var_se,
        "eve_var": est.eve_var,
        "eve_var_se": est.eve_var_se,
        "cov_bob_eve": est.cov_be,
        "cov_bob_eve_se": est.cov_be_se,
        "i_ab_hat": est.i_ab_hat,
        "i_ae_hat": est.i_ae_hat,
    }
    cols = ["x_lo", "x_hi", "count", "q_bob_hat", "se_bob", "q_eve_hat", "se_eve"]
    rows = []
    for k in range(b.lo.size):
        empty = b.counts[k] == 0
        rows.append(
            [
                b.lo[k],
                b.hi[k] if math.isfinite(b.hi[k]) else None,
                b.counts[k],
                None if empty else b.q_bob_hat[k],
                None if empty else b.se_bob[k],
                None if empty else b.q_eve_hat[k],
                None if empty else b.se_eve[k],
            ]
        )
    out = Output("simulate", params)
    if args.format == "json":
        return out.json({"summary": summary, "bins": [dict(zip(cols, r)) for r in rows]}), EXIT_OK
    notes = [f"{k} = {fmt(v)}" for k, v in summary.items()]
    units = "x_lo, x_hi bound |x_bob| in quadrature units (x_hi empty = tail bin); rates are probabilities; empty cells mark empty bins"
    return out.csv(cols, rows, units, notes), EXIT_OK


def cmd_verify(args):
    ch, pp = _channel(args), _protocol(args)
    cfg = _mc(args)
    rep = verify_against_analytic(
        cfg, pp, ch, xi_scale=args.xi_scale, min_count=args.min_count, min_expected=args.min_expected
    )
    params = {
        "eta": ch.eta,
        "delta": ch.delta,
        "n": pp.n,
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "bin_width": cfg.bin_width,
        "streams": cfg.stream_count,
        "xi_scale": args.xi_scale,
        "min_count": args.min_count,
        "min_expected": args.min_expected,
    }
    out = Output("verify", params)
    code = EXIT_OK if rep.passed else EXIT_VERIFY_FAILED
    if args.format == "json":
        data = {
            "passed": rep.passed,
            "z_limit": rep.z_limit,
            "checks": [{"name": c.name, "max_z": c.max_z, "passed": c.passed, "detail": c.detail} for c in rep.checks],
        }
        return out.json(data), code
    rows = [[c.name, c.max_z, c.passed, c.detail] for c in rep.checks]
    return out.csv(["check", "max_z", "passed", "detail"], rows, "max_z in standard errors"), code


# ---------------------------------------------------------------- parser


def _add_common(p):
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--config", default=None, help="key = value defaults file")


def _add_channel(p):
    p.add_argument("--eta", type=float, help="line transmission in (0, 1]")
    p.add_argument("--delta", type=float, help="excess quadrature noise >= 0")


def _add_n(p):
    p.add_argument("--n", type=float, help="mean photon number alpha^2")


def _add_mc(p, rounds):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=rounds)
    p.add_argument("--bin-width", type=float, default=0.05)
    p.add_argument("--streams", type=int, default=8)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="ampbsa",
        description="Security analysis of binary coherent-state CV-QKD under the amplification-beam-splitting attack.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("params", help="channel <-> attack parameter mapping")
    _add_channel(p)
    p.add_argument("--g", type=float, help="amplifier gain (with --kappa, instead of --eta/--delta)")
    p.add_argument("--kappa", type=float, help="beam-splitter transmission")
    subs["params"] = p

    p = sub.add_parser("classify", help="security verdict for one (eta, delta, n)")
    _add_channel(p)
    _add_n(p)
    subs["classify"] = p

    p = sub.add_parser("ber", help="conditional BER curves")
    _add_channel(p)
    _add_n(p)
    p.add_argument("--x-min", type=float, default=0.0)
    p.add_argument("--x-max", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=201)
    subs["ber"] = p

    p = sub.add_parser("info", help="postselected mutual information over a threshold grid")
    _add_channel(p)
    _add_n(p)
    p.add_argument("--x0-min", type=float, default=0.0)
    p.add_argument("--x0-max", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=31)
    p.add_argument("--x1", type=float, default=math.inf, help="upper cutoff (default: none)")
    p.add_argument("--width", type=float, default=None, help="window width; sets x1 = x0 + width")
    p.add_argument("--sifting", type=float, default=1.0)
    subs["info"] = p

    p = sub.add_parser("boundary", help="security boundary delta*(eta) for one photon number")
    _add_n(p)
    p.add_argument("--eta-min", type=float, default=0.05)
    p.add_argument("--eta-max", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--density", type=int, default=1, help="x-scan density multiplier")
    p.add_argument("--workers", type=int, default=1)
    subs["boundary"] = p

    p = sub.add_parser("simulate", help="Monte Carlo of binned conditional BERs")
    _add_channel(p)
    _add_n(p)
    _add_mc(p, rounds=1_000_000)
    subs["simulate"] = p

    p = sub.add_parser("verify", help="compare Monte Carlo against the analytic model")
    _add_channel(p)
    _add_n(p)
    _add_mc(p, rounds=10_000_000)
    p.add_argument("--xi-scale", type=float, default=1.0, help="corrupt the simulated xi (negative control)")
    p.add_argument("--min-count", type=int, default=1000, help="rounds a bin needs to be compared")
    p.add_argument("--min-expected", type=float, default=5.0, help="expected errors (and non-errors) a bin needs for its z-test")
    subs["verify"] = p

    for p in subs.values():
        _add_common(p)
    return parser, subs


_COMMANDS = {
    "params": cmd_params,
    "classify": cmd_classify,
    "ber": cmd_ber,
    "info": cmd_info,
    "boundary": cmd_boundary,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def _parse(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = load_config(args.config)
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ParameterError(f"unknown key(s) in {args.config}: {', '.join(unknown)}")
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    if args.format is None:
        args.format = _DEFAULT_FORMAT.get(args.command, "csv")
    return args


def run_cli(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        text, code = _COMMANDS[args.command](args)
    except (ParameterError, EmptyAcceptanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except AmpbsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


def main() -> None:
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
