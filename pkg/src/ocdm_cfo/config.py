"""YAML run configuration: schema, presets and line-anchored validation.

A config has up to four sections::

    system:      {N, K, L, cp_len, Es}
    experiment:  {snr_db, runs, blocks, grid, refine_iters, seed, workers,
                  cfo_ranges, estimators, equalizers, cfo_mode, csi, ml_cap}
    ml_system:   {N, K, L, cp_len, Es}     # optional reduced system for ML
    scan:        {w0, snr_db, covariance, taps}

``cfo_ranges`` are given in multiples of pi. A ``manifest`` section is
accepted and ignored, so a run manifest doubles as a config.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .cfo_estimator import DEFAULT_GRID, DEFAULT_REFINE_ITERS
from .equalizers import ML_CAP
from .montecarlo import CFO_MODES, CSI_MODES, EQUALIZERS, ESTIMATORS, ExperimentPlan
from .waveform import SystemConfig


class ConfigError(Exception):
    """Invalid or unreadable configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.message, self.source, self.line = message, source, line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


DEFAULTS = {
    "system": {"N": 16, "K": 12, "L": 2, "cp_len": None, "Es": 1.0},
    "experiment": {
        "snr_db": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        "runs": 100,
        "blocks": 1000,
        "grid": DEFAULT_GRID,
        "refine_iters": DEFAULT_REFINE_ITERS,
        "seed": 0,
        "workers": 1,
        "cfo_ranges": [[-1.0, 1.0]],
        "estimators": ["proposed"],
        "equalizers": ["zf", "mmse"],
        "cfo_mode": "estimate",
        "csi": "static",
        "ml_cap": ML_CAP,
    },
    "ml_system": None,
    "scan": {"w0": 0.0, "snr_db": None, "covariance": "analytic", "taps": None},
}

PRESETS = {
    "fig1": {
        "system": {"N": 16, "K": 12, "L": 2, "cp_len": 4},
        "experiment": {
            "runs": 100,
            "blocks": 1000,
            "cfo_ranges": [[-0.05, 0.05], [-0.1, 0.1], [-1.0, 1.0]],
            "estimators": ["proposed", "cp_baseline", "two_step"],
        },
    },
    "fig2": {
        "system": {"N": 16, "K": 12, "L": 2, "cp_len": 2},
        "experiment": {
            "runs": 100,
            "blocks": 1000,
            "cfo_ranges": [[-1.0, 1.0]],
            "equalizers": ["zf", "mmse", "ml"],
            "cfo_mode": "estimate",
            "csi": "per_block",
        },
        "ml_system": {"N": 8, "K": 4, "L": 2},
    },
}

_SYSTEM_TYPES = {"N": int, "K": int, "L": int, "cp_len": (int, type(None)), "Es": float}
_TYPES = {
    "system": _SYSTEM_TYPES,
    "ml_system": _SYSTEM_TYPES,
    "experiment": {
        "snr_db": list, "runs": int, "blocks": int, "grid": int, "refine_iters": int,
        "seed": int, "workers": int, "cfo_ranges": list, "estimators": list,
        "equalizers": list, "cfo_mode": str, "csi": str, "ml_cap": int,
    },
    "scan": {"w0": float, "snr_db": (float, type(None)), "covariance": str, "taps": (list, type(None))},
}


def _key_lines(text: str) -> dict:
    """Map ('section', 'key') and ('section',) to the 1-based line where they appear."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        lines[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[(knode.value, k2.value)] = k2.start_mark.line + 1
    return lines


def _check_type(value, want) -> bool:
    wants = want if isinstance(want, tuple) else (want,)
    for w in wants:
        if w is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if w is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if w not in (int, float) and isinstance(value, w):
            return True
    return False


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for sec, vals in over.items():
        if vals is None:
            out[sec] = None
        elif isinstance(vals, dict) and isinstance(out.get(sec), dict):
            out[sec].update(vals)
        else:
            out[sec] = copy.deepcopy(vals)
    return out


def validate(raw, source: str = "<config>", lines: dict | None = None) -> dict:
    """Check a parsed config against the schema; returns it without the manifest section."""
    lines = lines or {}
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping of sections", source, 1)
    out = {}
    for sec, vals in raw.items():
        if sec == "manifest":
            continue
        if sec not in _TYPES:
            raise ConfigError(f"unknown section {sec!r}", source, lines.get((sec,)))
        if vals is None and sec == "ml_system":
            out[sec] = None
            continue
        if not isinstance(vals, dict):
            raise ConfigError(f"section {sec!r} must be a mapping", source, lines.get((sec,)))
        for key, value in vals.items():
            line = lines.get((sec, key))
            if key not in _TYPES[sec]:
                raise ConfigError(f"unknown key {sec}.{key}", source, line)
            if not _check_type(value, _TYPES[sec][key]):
                raise ConfigError(f"{sec}.{key}: unexpected value {value!r}", source, line)
        out[sec] = dict(vals)
    exp = out.get("experiment", {})
    _validate_lists(exp, source, lines)
    return out


def _validate_lists(exp: dict, source: str, lines: dict):
    def fail(key, msg):
        raise ConfigError(f"experiment.{key}: {msg}", source, lines.get(("experiment", key)))

    if "snr_db" in exp and not all(_check_type(s, float) for s in exp["snr_db"]):
        fail("snr_db", "expected a list of numbers")
    if "cfo_ranges" in exp:
        for r in exp["cfo_ranges"]:
            if not (isinstance(r, list) and len(r) == 2 and all(_check_type(v, float) for v in r)):
                fail("cfo_ranges", f"expected [lo, hi] pairs in multiples of pi, got {r!r}")
            if not (-1.0 <= r[0] < r[1] <= 1.0):
                fail("cfo_ranges", f"range {r} not inside [-1, 1) (units of pi)")
    for key, allowed in (("estimators", ESTIMATORS), ("equalizers", EQUALIZERS)):
        for name in exp.get(key, []):
            if name not in allowed:
                fail(key, f"unknown name {name!r}; choose from {', '.join(allowed)}")
    if exp.get("cfo_mode", "estimate") not in CFO_MODES:
        fail("cfo_mode", f"choose from {', '.join(CFO_MODES)}")
    if exp.get("csi", "static") not in CSI_MODES:
        fail("csi", f"choose from {', '.join(CSI_MODES)}")


def load(path=None, preset: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve defaults < preset < config file < overrides into a full config dict."""
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}", "--preset")
        cfg = _merge(cfg, PRESETS[preset])
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config not found", str(path))
        text = p.read_text()
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", str(path),
                              mark.line + 1 if mark else None) from None
        cfg = _merge(cfg, validate(raw, str(path), _key_lines(text)))
    if overrides:
        cfg = _merge(cfg, validate(overrides, "command line"))
    return resolve(cfg)


def resolve(cfg: dict) -> dict:
    """Fill implicit defaults (cp_len) so the dict is fully explicit."""
    cfg = copy.deepcopy(cfg)
    for sec in ("system", "ml_system"):
        if cfg.get(sec) is not None:
            s = cfg[sec]
            base = DEFAULTS["system"]
            for k, v in base.items():
                s.setdefault(k, v)
            if s.get("cp_len") is None:
                s["cp_len"] = s["L"]
            s["Es"] = float(s["Es"])
    exp = cfg["experiment"]
    exp["snr_db"] = [float(s) for s in exp["snr_db"]]
    exp["cfo_ranges"] = [[float(a), float(b)] for a, b in exp["cfo_ranges"]]
    sc = cfg["scan"]
    sc["w0"] = float(sc["w0"])
    if sc["snr_db"] is not None:
        sc["snr_db"] = float(sc["snr_db"])
    return cfg


def system_config(section: dict, source: str = "<config>") -> SystemConfig:
    try:
        return SystemConfig(section["N"], section["K"], section["L"], section["cp_len"], section["Es"])
    except ValueError as exc:
        raise ConfigError(str(exc), source) from None


def plans(cfg: dict, source: str = "<config>") -> list:
    """One :class:`ExperimentPlan` per configured CFO range, with a file label for each."""
    exp = cfg["experiment"]
    sys_cfg = system_config(cfg["system"], source)
    ml_cfg = system_config(cfg["ml_system"], source) if cfg.get("ml_system") else None
    out = []
    for lo, hi in exp["cfo_ranges"]:
        try:
            plan = ExperimentPlan(
                cfg=sys_cfg, snr_db=tuple(exp["snr_db"]), runs=exp["runs"], blocks=exp["blocks"],
                cfo_range=(lo * np.pi, hi * np.pi), estimators=tuple(exp["estimators"]),
                equalizers=tuple(exp["equalizers"]), grid=exp["grid"],
                refine_iters=exp["refine_iters"], seed=exp["seed"], cfo_mode=exp["cfo_mode"],
                ml_cfg=ml_cfg, ml_cap=exp["ml_cap"], csi=exp["csi"], workers=exp["workers"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc), source) from None
        out.append((range_label(lo, hi), plan))
    return out


def range_label(lo: float, hi: float) -> str:
    if lo == -hi:
        return f"pm{hi:g}pi"
    return f"{lo:g}pi_{hi:g}pi"


def dump(cfg: dict, manifest: dict | None = None) -> str:
    doc = dict(cfg)
    if manifest is not None:
        doc = {"manifest": manifest, **doc}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
