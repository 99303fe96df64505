"""Experiment configuration: TOML parsing, presets, validation and echo.

Schema (every key optional unless noted)::

    mode = "mo_a2c"            # required: mo_a2c | so_a2c | harness
    seeds = [0, 1, 2]          # required, non-empty list of ints
    output_dir = "runs/x"      # required unless given on the command line
    preset = "paper_5_2"       # optional base values, overridden by this file
    jobs = 1                   # worker processes for independent seeds

    [env]
    kind = "cache"             # cache | synthetic (synthetic needs mode=harness)
    num_files = 20             # plus every other CacheEnvConfig field
    horizon = 64               # T
    discount = 0.96            # gamma_disc

    [train]
    episodes = 3000            # E_max
    lr_actor = 1e-2
    lr_critic = 1e-2
    actor_hidden = 128         # 64 by default in so_a2c mode
    critic_hidden = 64
    ema_decay = 0.9
    clip_norm = 10.0           # 0 disables clipping
    log_std_init = -0.5
    normalize_rewards = true   # centre and normalise raw rewards before rescaling
    reward_rescale = [1, 1, 1] # per-objective multipliers
    scales = [1, 1, 1]         # required in so_a2c mode

    [harness]
    num_objectives = 2
    dim = 8
    problem_seed = 0
    sigma = 0.05
    iterations = 5000
    decay_iterations = 20000
    mu0 = 0.1
    n0 = 500
    monotone_threshold = 1e-6

Precedence, lowest first: built-in defaults, preset, file, command line.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .cache_env import CacheEnv, CacheEnvConfig
from .exceptions import ConfigurationError
from .mo_a2c import A2CConfig

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "resolve",
    "PRESETS",
    "dump_toml",
    "MODES",
]

MODES = ("mo_a2c", "so_a2c", "harness")
ENV_KINDS = ("cache", "synthetic")

_ENV_DEFAULTS = {"kind": "cache", **{
    name: getattr(CacheEnvConfig(), name) for name in CacheEnvConfig.field_names()}}

_TRAIN_DEFAULTS = {
    "episodes": 3000,
    "lr_actor": 1e-2,
    "lr_critic": 1e-2,
    "actor_hidden": None,
    "critic_hidden": 64,
    "ema_decay": 0.9,
    "clip_norm": 10.0,
    "log_std_init": -0.5,
    "normalize_rewards": True,
    "reward_rescale": None,
    "scales": None,
}

_HARNESS_DEFAULTS = {
    "num_objectives": 2,
    "dim": 8,
    "problem_seed": 0,
    "sigma": 0.05,
    "iterations": 5000,
    "decay_iterations": 20000,
    "mu0": 0.1,
    "n0": 500.0,
    "monotone_threshold": 1e-6,
}

_TOP_DEFAULTS = {"mode": None, "seeds": None, "output_dir": None, "preset": None, "jobs": 1}

PRESETS = {
    "paper_5_2": {
        "env": {"num_files": 100, "cache_capacity": 10, "bs_intensity": 10.0,
                "user_intensity": 1e5, "horizon": 256, "discount": 0.96},
        "train": {"lr_actor": 1e-3, "lr_critic": 1e-3, "critic_hidden": 64,
                  "actor_hidden": 128, "so_actor_hidden": 64},
    },
}

MO_ACTOR_HIDDEN = 128
SO_ACTOR_HIDDEN = 64


@dataclass
class ExperimentConfig:
    mode: str
    seeds: list
    output_dir: Path | None
    env: dict
    train: dict
    harness: dict
    preset: str | None = None
    jobs: int = 1
    source: str | None = field(default=None, repr=False)

    @property
    def num_objectives(self) -> int:
        return self.harness["num_objectives"] if self.mode == "harness" else 3

    def cache_env_config(self) -> CacheEnvConfig:
        return CacheEnvConfig(**{k: v for k, v in self.env.items() if k != "kind"})

    def make_env(self) -> CacheEnv:
        return CacheEnv(self.cache_env_config())

    def a2c_config(self, env: CacheEnv | None = None) -> A2CConfig:
        """Learner settings; the learner reward is
        ``rescale * normaliser * (raw - centre)``."""
        env = env or self.make_env()
        t = self.train
        r = env.spec.num_objectives
        rescale = np.ones(r) if t["reward_rescale"] is None else np.asarray(t["reward_rescale"], dtype=np.float64)
        if t["normalize_rewards"]:
            scale, center = rescale * env.reward_normalizer(), env.reward_center()
        else:
            scale, center = rescale, None
        return A2CConfig(
            episodes=t["episodes"],
            lr_actor=t["lr_actor"],
            lr_critic=t["lr_critic"],
            actor_hidden=t["actor_hidden"],
            critic_hidden=t["critic_hidden"],
            ema_decay=t["ema_decay"],
            clip_norm=t["clip_norm"] or None,
            log_std_init=t["log_std_init"],
            reward_scale=tuple(float(x) for x in scale),
            reward_center=None if center is None else tuple(float(x) for x in center),
        )

    def resolved(self) -> dict:
        """Plain nested dict of every resolved value (for the echo)."""
        out = {"mode": self.mode, "seeds": list(self.seeds), "jobs": self.jobs}
        if self.preset is not None:
            out["preset"] = self.preset
        if self.output_dir is not None:
            out["output_dir"] = str(self.output_dir)
        out["env"] = dict(self.env)
        if self.mode == "harness":
            out["harness"] = dict(self.harness)
        else:
            out["train"] = {k: v for k, v in self.train.items() if v is not None}
        return out


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


class _Checker:
    def __init__(self):
        self.errors = []

    def add(self, key, msg):
        self.errors.append(f"{key}: {msg}")

    def real(self, d, sect, name, lo=None, hi=None, lo_open=False, hi_open=False):
        key = f"{sect}.{name}" if sect else name
        v = d.get(name)
        if not _is_real(v):
            self.add(key, f"expected a finite number, got {v!r}")
            return
        low_bad = lo is not None and (v <= lo if lo_open else v < lo)
        high_bad = hi is not None and (v >= hi if hi_open else v > hi)
        if low_bad or high_bad:
            lb = "(" if lo_open else "["
            rb = ")" if hi_open else "]"
            rng = f"{lb}{'-inf' if lo is None else lo}, {'inf' if hi is None else hi}{rb}"
            self.add(key, f"{v!r} outside legal range {rng}")

    def integer(self, d, sect, name, lo=None):
        key = f"{sect}.{name}" if sect else name
        v = d.get(name)
        if not _is_int(v):
            self.add(key, f"expected an integer, got {v!r}")
        elif lo is not None and v < lo:
            self.add(key, f"{v!r} outside legal range [{lo}, inf)")

    def vector(self, d, sect, name, length, positive=True):
        key = f"{sect}.{name}"
        v = d.get(name)
        if not isinstance(v, list) or not all(_is_real(x) for x in v):
            self.add(key, f"expected a list of {length} numbers, got {v!r}")
        elif len(v) != length:
            self.add(key, f"expected {length} entries, got {len(v)}")
        elif positive and not all(x > 0 for x in v):
            self.add(key, "entries must be > 0")


def _unknown_keys(chk, raw: dict):
    allowed = {
        None: set(_TOP_DEFAULTS) | {"env", "train", "harness"},
        "env": set(_ENV_DEFAULTS),
        "train": set(_TRAIN_DEFAULTS),
        "harness": set(_HARNESS_DEFAULTS),
    }
    for k, v in raw.items():
        if k not in allowed[None]:
            chk.add(k, "unknown key")
        elif k in ("env", "train", "harness"):
            if not isinstance(v, dict):
                chk.add(k, "expected a table")
                continue
            for sub in v:
                if sub not in allowed[k]:
                    chk.add(f"{k}.{sub}", "unknown key")


def resolve(raw: dict, *, preset: str | None = None, seeds=None, output_dir=None,
            source: str | None = None) -> ExperimentConfig:
    """Validate ``raw`` (a parsed TOML document) and fill defaults.

    Raises :class:`ConfigurationError` listing every problem found.
    """
    chk = _Checker()
    _unknown_keys(chk, raw)
    preset = preset if preset is not None else raw.get("preset")
    base = {**_TOP_DEFAULTS, "env": dict(_ENV_DEFAULTS), "train": dict(_TRAIN_DEFAULTS),
            "harness": dict(_HARNESS_DEFAULTS)}
    mo_hidden, so_hidden = MO_ACTOR_HIDDEN, SO_ACTOR_HIDDEN
    if preset is not None:
        if preset not in PRESETS:
            chk.add("preset", f"unknown preset {preset!r}; known: {', '.join(PRESETS)}")
        else:
            p = copy.deepcopy(PRESETS[preset])
            # actor width is mode dependent, so it stays a default until the mode is known
            mo_hidden = p["train"].pop("actor_hidden", mo_hidden)
            so_hidden = p["train"].pop("so_actor_hidden", so_hidden)
            base = _merge(base, p)
    clean = {k: v for k, v in raw.items()
             if k not in ("env", "train", "harness") or isinstance(v, dict)}
    cfg = _merge(base, clean)
    if seeds is not None:
        cfg["seeds"] = list(seeds)
    if output_dir is not None:
        cfg["output_dir"] = str(output_dir)
    cfg["preset"] = preset

    mode = cfg["mode"]
    if mode is None:
        chk.add("mode", f"missing required key; one of {', '.join(MODES)}")
    elif mode not in MODES:
        chk.add("mode", f"{mode!r} not one of {', '.join(MODES)}")
    s = cfg["seeds"]
    if s is None:
        chk.add("seeds", "missing required key")
    elif not isinstance(s, list) or not all(_is_int(x) and x >= 0 for x in s):
        chk.add("seeds", f"expected a list of non-negative integers, got {s!r}")
    elif not s:
        chk.add("seeds", "must not be empty")
    elif len(set(s)) != len(s):
        chk.add("seeds", "contains duplicates")
    if cfg["output_dir"] is not None and not isinstance(cfg["output_dir"], str):
        chk.add("output_dir", "expected a path string")
    chk.integer(cfg, "", "jobs", lo=1)

    env = cfg["env"]
    if env["kind"] not in ENV_KINDS:
        chk.add("env.kind", f"{env['kind']!r} not one of {', '.join(ENV_KINDS)}")
    elif mode == "harness" and env["kind"] != "synthetic":
        chk.add("env.kind", "harness mode runs on the synthetic problem; set kind = \"synthetic\"")
    elif mode in ("mo_a2c", "so_a2c") and env["kind"] != "cache":
        chk.add("env.kind", f"{mode} runs on the cache environment; set kind = \"cache\"")
    for name in ("num_files", "horizon"):
        chk.integer(env, "env", name, lo=1)
    for name in ("cache_capacity", "bs_intensity", "user_intensity", "outage_scale",
                 "bandwidth_halfsat", "popularity_exponent"):
        chk.real(env, "env", name, lo=0.0, lo_open=True)
    for name in ("cache_fill_cost", "popularity_noise"):
        chk.real(env, "env", name, lo=0.0)
    chk.real(env, "env", "rerequest_gain", lo=0.0, hi=1.0, hi_open=True)
    chk.real(env, "env", "discount", lo=0.0, hi=1.0, lo_open=True)
    if (_is_real(env.get("cache_capacity")) and _is_int(env.get("num_files"))
            and env["cache_capacity"] > env["num_files"]):
        chk.add("env.cache_capacity", "must not exceed env.num_files")

    if mode in ("mo_a2c", "so_a2c"):
        t = cfg["train"]
        if t["actor_hidden"] is None:
            t["actor_hidden"] = so_hidden if mode == "so_a2c" else mo_hidden
        chk.integer(t, "train", "episodes", lo=0)
        for name in ("lr_actor", "lr_critic"):
            chk.real(t, "train", name, lo=0.0, lo_open=True)
        for name in ("actor_hidden", "critic_hidden"):
            chk.integer(t, "train", name, lo=1)
        chk.real(t, "train", "ema_decay", lo=0.0, hi=1.0, hi_open=True)
        chk.real(t, "train", "clip_norm", lo=0.0)
        chk.real(t, "train", "log_std_init", lo=-5.0, hi=2.0)
        if not isinstance(t["normalize_rewards"], bool):
            chk.add("train.normalize_rewards", "expected true or false")
        if t["reward_rescale"] is None:
            t["reward_rescale"] = [1.0, 1.0, 1.0]
        chk.vector(t, "train", "reward_rescale", 3)
        if mode == "so_a2c":
            if t["scales"] is None:
                chk.add("train.scales", "missing required key in so_a2c mode")
            else:
                chk.vector(t, "train", "scales", 3, positive=False)
        elif t["scales"] is not None:
            chk.add("train.scales", "only used in so_a2c mode")
    elif mode == "harness":
        h = cfg["harness"]
        chk.integer(h, "harness", "num_objectives", lo=2)
        chk.integer(h, "harness", "dim", lo=1)
        chk.integer(h, "harness", "problem_seed", lo=0)
        chk.real(h, "harness", "sigma", lo=0.0)
        chk.integer(h, "harness", "iterations", lo=1)
        chk.integer(h, "harness", "decay_iterations", lo=1)
        for name in ("mu0", "n0"):
            chk.real(h, "harness", name, lo=0.0, lo_open=True)
        chk.real(h, "harness", "monotone_threshold")

    if chk.errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(chk.errors))

    return ExperimentConfig(
        mode=mode,
        seeds=list(cfg["seeds"]),
        output_dir=None if cfg["output_dir"] is None else Path(cfg["output_dir"]),
        env=cfg["env"],
        train=cfg["train"],
        harness=cfg["harness"],
        preset=preset,
        jobs=cfg["jobs"],
        source=source,
    )


def parse_config(path, *, preset: str | None = None, seeds=None, output_dir=None) -> ExperimentConfig:
    """Read and validate a TOML config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return resolve(raw, preset=preset, seeds=seeds, output_dir=output_dir, source=str(path))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot encode {type(v).__name__} as TOML")


def dump_toml(doc: dict) -> str:
    """Deterministic TOML for a two-level dict of scalars and lists.

    Floats use ``repr`` so the echo round-trips bit-exactly.
    """
    lines = [f"{k} = {_toml_value(v)}" for k, v in doc.items() if not isinstance(v, dict)]
    for k, v in doc.items():
        if isinstance(v, dict):
            lines.append("")
            lines.append(f"[{k}]")
            lines += [f"{sk} = {_toml_value(sv)}" for sk, sv in v.items()]
    return "\n".join(lines) + "\n"
