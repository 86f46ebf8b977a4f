"""Flat ``key = value`` experiment configs.

Grammar: one assignment per line, ``#`` starts a comment, blank lines are
ignored, keys are case-sensitive and unknown keys are rejected.  Booleans are
``true``/``false``; ``none`` clears an optional key.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Optional

from .agent import AlgorithmParams, Protocol
from .environment import SyntheticConfig
from .ingest import read_bundle, truth_from_bundle
from .protocol import default_snapshot_interval
from .runner import ExperimentConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _opt(conv):
    def parse(s: str):
        return None if s.lower() == "none" else conv(s)
    return parse


def _finite(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"{s!r} is not finite")
    return v


# key -> parser; order is the dump order
KEYS = {
    "protocol": Protocol,
    "num_users": int,
    "num_clusters": int,
    "dim": int,
    "items_per_round": int,
    "K": int,
    "horizon": int,
    "theta_mode": str,
    "clip_weights": _bool,
    "embeddings": _opt(str),
    "lambda": _finite,
    "alpha_c": _finite,
    "alpha_d": _finite,
    "delta": _finite,
    "R": _finite,
    "beta": _opt(_finite),
    "server_order": str,
    "num_runs": int,
    "base_seed": int,
    "snapshot_interval": int,
    "output": str,
}

DEFAULTS = {
    "protocol": Protocol.FEDC3UCB_H,
    "num_users": 40,
    "num_clusters": 5,
    "dim": 20,
    "items_per_round": 200,
    "K": 4,
    "horizon": 1000,
    "theta_mode": "orthogonal",
    "clip_weights": True,
    "embeddings": None,
    "lambda": 1.0,
    "alpha_d": 1.0,
    "R": 0.5,
    "beta": None,
    "server_order": "upload_first",
    "num_runs": 1,
    "base_seed": 0,
    "output": "results.csv",
}


def parse_text(text: str, source: str = "<config>") -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            raw[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return raw


def load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, os.fspath(path))


def resolve(raw: dict) -> dict:
    """Fill every default so the result is a complete, replayable config."""
    cfg = dict(DEFAULTS)
    cfg.update(raw)
    cfg["protocol"] = Protocol(cfg["protocol"])
    if cfg["embeddings"] is not None:
        bundle = read_bundle(cfg["embeddings"])
        derived = {"num_users": len(bundle.cluster_of), "num_clusters": bundle.J, "dim": bundle.d}
        for key, value in derived.items():
            if key in raw and raw[key] != value:
                raise ConfigError(f"{key}={raw[key]} conflicts with the embeddings file ({value})")
            cfg[key] = value
    if cfg["protocol"] is Protocol.FORCE_COMM and not cfg["lambda"] > cfg["K"]:
        if "lambda" in raw:
            raise ConfigError(f"lambda must exceed K={cfg['K']} for force_comm, got {cfg['lambda']}")
        warnings.warn(f"force_comm needs lambda > K; raising lambda to {cfg['K'] + 1}")
        cfg["lambda"] = float(cfg["K"] + 1)
    cfg.setdefault("alpha_c", 1.0 / cfg["num_users"] ** 2)
    cfg.setdefault("delta", 1.0 / max(cfg["horizon"], 2))
    cfg.setdefault("snapshot_interval", default_snapshot_interval(cfg["horizon"]))
    return cfg


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Protocol):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump(cfg: dict) -> str:
    return "".join(f"{k} = {_fmt(cfg[k])}\n" for k in KEYS)


def build(cfg: dict) -> ExperimentConfig:
    """Validated experiment from a resolved config; errors name the key."""
    try:
        env = SyntheticConfig(num_users=cfg["num_users"], num_clusters=cfg["num_clusters"],
                              dim=cfg["dim"], items_per_round=cfg["items_per_round"], K=cfg["K"],
                              horizon=cfg["horizon"], theta_mode=cfg["theta_mode"],
                              clip_weights=cfg["clip_weights"])
        params = AlgorithmParams(num_users=cfg["num_users"], dim=cfg["dim"], K=cfg["K"],
                                 horizon=cfg["horizon"], lam=cfg["lambda"],
                                 alpha_c=cfg["alpha_c"], alpha_d=cfg["alpha_d"],
                                 delta=cfg["delta"], R=cfg["R"], protocol=cfg["protocol"],
                                 beta=cfg["beta"], server_order=cfg["server_order"])
        truth = None
        if cfg["embeddings"] is not None:
            truth = truth_from_bundle(read_bundle(cfg["embeddings"]))
        return ExperimentConfig(env, params, num_runs=cfg["num_runs"], base_seed=cfg["base_seed"],
                                snapshot_interval=cfg["snapshot_interval"],
                                output_path=cfg["output"], truth=truth)
    except ValueError as exc:
        msg = str(exc).replace("lam ", "lambda ")
        raise ConfigError(msg) from None


@dataclass
class Loaded:
    resolved: dict
    experiment: ExperimentConfig


def from_file(path, base_seed: Optional[int] = None) -> Loaded:
    raw = load(path)
    if base_seed is not None:
        raw["base_seed"] = base_seed
    cfg = resolve(raw)
    return Loaded(cfg, build(cfg))
