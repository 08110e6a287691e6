"""Command-line front end.

    ocdm-cfo mse  [--preset fig1] [--config run.yaml] [overrides] --out DIR
    ocdm-cfo ber  [--preset fig2] [--equalizer zf,mmse] --out DIR
    ocdm-cfo scan [--w0 0.3] [--snr 20] [--grid 4096] --out DIR
    ocdm-cfo info [--config run.yaml]

Exit codes: 0 success, 2 configuration error, 3 runtime or
configuration-incompatibility error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .cfo_estimator import CovarianceEstimate, analytic_covariance, scan_cost
from .errors import OcdmError
from .montecarlo import run_ber_experiment, run_mse_experiment, spectral_efficiency
from .waveform import ChannelRealization, assemble_blocks, draw_channel, map_qpsk, propagate_blocks

logger = logging.getLogger("ocdm_cfo")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list:
    try:
        return [float(t) for t in _list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config (a run manifest also works)")
    common.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="experiment preset")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--snr", type=_float_list, metavar="LIST", help="SNR grid in dB, e.g. 0,10,20")
    common.add_argument("--runs", type=int, metavar="M", help="Monte Carlo runs per SNR point")
    common.add_argument("--blocks", type=int, metavar="N_b", help="blocks per run")
    common.add_argument("--grid", type=int, metavar="N_c", help="CFO search candidates")
    common.add_argument("--out", metavar="DIR", default="results", help="output directory")
    common.add_argument("--equalizer", type=_list, metavar="LIST", help="zf,mmse,ml")
    common.add_argument("--estimator", type=_list, metavar="LIST", help="proposed,cp_baseline,two_step")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ocdm-cfo", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("mse", parents=[common], help="CFO MSE vs SNR")
    sub.add_parser("ber", parents=[common], help="BER vs SNR per equalizer")
    scan = sub.add_parser("scan", parents=[common], help="cost function J(w) over the grid")
    scan.add_argument("--w0", type=float, help="true normalized CFO in [-pi, pi)")
    sub.add_parser("info", parents=[common], help="frame structure, identifiability and cost summary")
    return p


def _overrides(args) -> dict:
    exp = {}
    for key, attr in (("seed", "seed"), ("snr_db", "snr"), ("runs", "runs"), ("blocks", "blocks"),
                      ("grid", "grid"), ("equalizers", "equalizer"), ("estimators", "estimator"),
                      ("workers", "workers")):
        value = getattr(args, attr, None)
        if value is not None:
            exp[key] = value
    over = {"experiment": exp} if exp else {}
    if args.command == "scan":
        sc = {}
        if args.w0 is not None:
            sc["w0"] = args.w0
        if args.snr is not None:
            if len(args.snr) != 1:
                raise cfgmod.ConfigError("scan takes a single --snr value", "command line")
            sc["snr_db"] = args.snr[0]
        if sc:
            over["scan"] = sc
        over.get("experiment", {}).pop("snr_db", None)
    return over


def _write_manifest(out: Path, cfg: dict, args) -> None:
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "tool": "ocdm-cfo",
        "version": __version__,
        "command": args.command,
        "seed": cfg["experiment"]["seed"],
        "output_dir": str(out),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    (out / "manifest.yaml").write_text(cfgmod.dump(cfg, meta))


def cmd_mse(cfg: dict, args) -> int:
    out = Path(args.out)
    plans = cfgmod.plans(cfg, args.config or "<config>")
    _write_manifest(out, cfg, args)
    for label, plan in plans:
        logger.info("mse: range %s, %d SNR points x %d runs", label, len(plan.snr_db), plan.runs)
        for name, curve in run_mse_experiment(plan).items():
            path = out / f"mse_{name}_{label}.csv"
            path.write_text(curve.to_csv())
            print(f"wrote {path}")
    return EXIT_OK


def cmd_ber(cfg: dict, args) -> int:
    out = Path(args.out)
    plans = cfgmod.plans(cfg, args.config or "<config>")
    _write_manifest(out, cfg, args)
    for label, plan in plans:
        logger.info("ber: range %s, equalizers %s", label, ",".join(plan.equalizers))
        for name, curve in run_ber_experiment(plan).items():
            path = out / f"ber_{name}_{label}.csv"
            path.write_text(curve.to_csv())
            print(f"wrote {path}")
    return EXIT_OK


def _taps(spec, L: int, rng) -> ChannelRealization:
    if spec is None:
        return draw_channel(L, rng)
    taps = []
    for t in spec:
        if isinstance(t, list):
            taps.append(complex(t[0], t[1]))
        else:
            taps.append(complex(t))
    return ChannelRealization(taps)


def cmd_scan(cfg: dict, args) -> int:
    sc, exp = cfg["scan"], cfg["experiment"]
    system = cfgmod.system_config(cfg["system"], args.config or "<config>")
    if sc["snr_db"] is not None:
        system = system.with_snr_db(sc["snr_db"])
    rng = np.random.default_rng(exp["seed"])
    ch = _taps(sc["taps"], system.L, rng)
    w0 = sc["w0"]
    if sc["covariance"] == "empirical":
        bits = rng.integers(0, 2, (exp["blocks"], 2 * system.K))
        S = map_qpsk(bits, system.Es).reshape(exp["blocks"], system.K)
        R = CovarianceEstimate.from_blocks(propagate_blocks(assemble_blocks(S, system), ch, w0, system, rng))
    elif sc["covariance"] == "analytic":
        R = analytic_covariance(ch, w0, system)
    else:
        raise cfgmod.ConfigError("scan.covariance must be 'analytic' or 'empirical'", args.config or "<config>")
    out = Path(args.out)
    _write_manifest(out, cfg, args)
    scan = scan_cost(R, system, exp["grid"])
    path = out / "scan.csv"
    path.write_text(scan.to_csv())
    m = int(np.argmin(scan.cost))
    print(f"wrote {path}")
    print(f"argmin w = {float(scan.grid[m])!r}  J = {float(scan.cost[m])!r}")
    return EXIT_OK


def info_report(cfg: dict) -> str:
    s, exp = cfg["system"], cfg["experiment"]
    N, K, L = s["N"], s["K"], s["L"]
    nulls = N - K
    lines = [f"N = {N}, K = {K}, L = {L}, cp_len = {s['cp_len']}",
             f"null subchirps: {nulls}"]
    if nulls >= L + 1:
        lines.append(f"identifiable: yes ({nulls} nulls ≥ {L + 1})")
    else:
        lines.append(f"identifiable: NO ({nulls} nulls < {L + 1})")
    try:
        eff = spectral_efficiency(N, L)
        lines.append(f"spectral efficiency (L+1 nulls, CP = L): {eff.numerator}/{eff.denominator} "
                     f"= {float(eff):.4f}")
    except OcdmError:
        lines.append("spectral efficiency: n/a (N <= L + 1)")
    Nc, Nb = exp["grid"], exp["blocks"]
    lines.append(f"cost-scan operations N_c*K*N^2: {Nc}*{K}*{N * N} = {Nc * K * N * N}")
    lines.append(f"covariance operations N_b*N^2: {Nb}*{N * N} = {Nb * N * N}")
    return "\n".join(lines)


def cmd_info(cfg: dict, args) -> int:
    print(info_report(cfg))
    return EXIT_OK


COMMANDS = {"mse": cmd_mse, "ber": cmd_ber, "scan": cmd_scan, "info": cmd_info}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config, args.preset, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OcdmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
