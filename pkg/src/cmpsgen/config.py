"""Experiment configuration files: strict JSON with explicit defaults.

A run config is one JSON object with optional sections (``process``,
``model``, ``loss``, ``train``, ``sample``, ``eval``) plus a top-level
``seed``.  Unknown keys anywhere are rejected with the offending dotted
path, so typos never silently fall back to defaults.  ``cmpsgen inspect
--defaults`` prints every default value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .core import Coupling, StateKind
from .errors import ConfigError
from .processes import DampedSineSpec, FppSpec, MsmComponent, MsmSpec, gen_damped_sines, gen_fpp, gen_gp
from .sampling import SampleConfig
from .signals import SignalSet
from .training import InitConfig, LossConfig, LossKind, TrainConfig

PROCESS_DEFAULTS: dict[str, dict[str, Any]] = {
    "damped_sines": {
        "n_signals": 64,
        "frequencies_hz": [261.6],
        "sample_rate_hz": 16000.0,
        "length": 512,
        "delay_alpha": 2.0,
        "delay_beta": 0.39,
        "delay_convention": "rate",
        "decay_time_s": 0.008,
        "amplitude": 1.0,
    },
    "gp_msm": {
        "n_signals": 64,
        "components": [[2.0, 50.0, 300.0]],
        "dt": 0.001,
        "length": 128,
        "init": "stationary",
    },
    "fpp": {
        "n_signals": 64,
        "intensity": 4.0,
        "amplitude": 1.0,
        "tau": 0.2,
        "omega": 20.0,
        "dt": 0.01,
        "length": 500,
        "burn_in": 100,
    },
}

MODEL_DEFAULTS: dict[str, Any] = {
    "bond_dim": 8,
    "dt": 0.001,
    "sigma": 1.0,
    "coupling": "direct",
    "zero_r_diagonal": False,
    "density_rank": None,
    "omega_std": 0.0,
    "r_scale": 1.0,
    "a_init": 1.0,
}

LOSS_DEFAULTS: dict[str, Any] = {
    "kind": "direct_squared",
    "reg_omega_var": None,
    "reg_r_var": None,
    "sample_rate_hz": None,
    "learn_a": True,
    "learn_psi0": True,
}

TRAIN_DEFAULTS: dict[str, Any] = {
    "batch_size": 8,
    "max_steps": 1000,
    "learning_rate": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "lr_decay_rate": 1.0,
    "lr_decay_steps": 1000,
    "checkpoint_interval": 0,
}

SAMPLE_DEFAULTS: dict[str, Any] = {
    "temperature": 0.0,
    "n_samples": 1,
    "n_steps": 128,
    "state_kind": "pure",
    "x0": 0.0,
}

EVAL_DEFAULTS: dict[str, Any] = {
    "stat": "covariance",
    "t1": 0,
    "max_lag": 50,
    "n_sigma": 3.0,
    "min_fraction": 0.95,
    "centered": False,
}

TOP_LEVEL_KEYS = ("seed", "process", "model", "loss", "train", "sample", "eval")


def default_config() -> dict[str, Any]:
    """The full default tree printed by ``inspect --defaults``."""
    return {
        "seed": 0,
        "process": dict(PROCESS_DEFAULTS["gp_msm"], kind="gp_msm"),
        "process_defaults_per_kind": {k: dict(v, kind=k) for k, v in PROCESS_DEFAULTS.items()},
        "model": dict(MODEL_DEFAULTS),
        "loss": dict(LOSS_DEFAULTS),
        "train": dict(TRAIN_DEFAULTS),
        "sample": dict(SAMPLE_DEFAULTS),
        "eval": dict(EVAL_DEFAULTS),
    }


def _check_keys(section: dict, allowed: set[str], prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{prefix}{key}'", key=f"{prefix}{key}")


def _merged(section: dict | None, defaults: dict[str, Any], prefix: str, extra_keys: set[str] = frozenset()) -> dict:
    section = dict(section or {})
    _check_keys(section, set(defaults) | extra_keys, prefix)
    out = dict(defaults)
    out.update(section)
    return out


@dataclass
class ProcessJob:
    """A fully specified generation task: spec + sample count + options."""

    kind: str
    spec: Any
    n_signals: int
    length: int | None = None  # gp_msm only; others carry length in the spec
    init: str = "stationary"

    def generate(self, seed: int) -> SignalSet:
        if self.kind == "damped_sines":
            return gen_damped_sines(self.spec, self.n_signals, seed)
        if self.kind == "gp_msm":
            return gen_gp(self.spec, self.n_signals, self.length, seed, init=self.init)
        return gen_fpp(self.spec, self.n_signals, seed)


class RunConfig:
    """Parsed and validated experiment configuration."""

    def __init__(self, raw: dict[str, Any]):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(raw, set(TOP_LEVEL_KEYS), "")
        self.raw = raw
        self.seed = int(raw.get("seed", 0))

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
        return cls(raw)

    # -- section builders ---------------------------------------------------

    def process_job(self) -> ProcessJob:
        """Build the generation task described by the ``process`` section."""
        section = self.raw.get("process")
        if not section:
            raise ConfigError("config has no 'process' section", key="process")
        kind = section.get("kind")
        if kind not in PROCESS_DEFAULTS:
            raise ConfigError(f"unknown process kind '{kind}'", key="process.kind")
        cfg = _merged(section, PROCESS_DEFAULTS[kind], "process.", extra_keys={"kind"})
        n = int(cfg.pop("n_signals"))
        cfg.pop("kind")
        try:
            if kind == "damped_sines":
                spec = DampedSineSpec(
                    frequencies_hz=tuple(cfg["frequencies_hz"]),
                    sample_rate_hz=float(cfg["sample_rate_hz"]),
                    length=int(cfg["length"]),
                    delay_alpha=float(cfg["delay_alpha"]),
                    delay_beta=float(cfg["delay_beta"]),
                    delay_convention=str(cfg["delay_convention"]),
                    decay_time_s=float(cfg["decay_time_s"]),
                    amplitude=float(cfg["amplitude"]),
                )
                return ProcessJob(kind, spec, n)
            if kind == "gp_msm":
                comps = tuple(MsmComponent(*map(float, c)) for c in cfg["components"])
                spec = MsmSpec(components=comps, dt=float(cfg["dt"]))
                return ProcessJob(kind, spec, n, length=int(cfg["length"]), init=str(cfg["init"]))
            spec = FppSpec(
                intensity=float(cfg["intensity"]),
                amplitude=float(cfg["amplitude"]),
                tau=float(cfg["tau"]),
                omega=float(cfg["omega"]),
                dt=float(cfg["dt"]),
                length=int(cfg["length"]),
                burn_in=int(cfg["burn_in"]),
            )
            return ProcessJob(kind, spec, n)
        except (ValueError, TypeError) as err:
            raise ConfigError(f"invalid process section: {err}", key="process") from err

    def init_config(self) -> InitConfig:
        cfg = _merged(self.raw.get("model"), MODEL_DEFAULTS, "model.")
        try:
            return InitConfig(
                bond_dim=int(cfg["bond_dim"]),
                dt=float(cfg["dt"]),
                sigma=float(cfg["sigma"]),
                coupling=Coupling(cfg["coupling"]),
                zero_r_diagonal=bool(cfg["zero_r_diagonal"]),
                density_rank=None if cfg["density_rank"] is None else int(cfg["density_rank"]),
                omega_std=float(cfg["omega_std"]),
                r_scale=float(cfg["r_scale"]),
                a_init=float(cfg["a_init"]),
            )
        except (ValueError, TypeError) as err:
            raise ConfigError(f"invalid model section: {err}", key="model") from err

    def loss_config(self) -> LossConfig:
        cfg = _merged(self.raw.get("loss"), LOSS_DEFAULTS, "loss.")
        model_cfg = _merged(self.raw.get("model"), MODEL_DEFAULTS, "model.")
        try:
            return LossConfig(
                kind=LossKind(cfg["kind"]),
                reg_omega_var=cfg["reg_omega_var"],
                reg_r_var=cfg["reg_r_var"],
                sample_rate_hz=cfg["sample_rate_hz"],
                learn_a=bool(cfg["learn_a"]),
                learn_psi0=bool(cfg["learn_psi0"]),
                density_rank=None if model_cfg["density_rank"] is None else int(model_cfg["density_rank"]),
            )
        except ValueError as err:
            raise ConfigError(f"invalid loss section: {err}", key="loss") from err

    def train_config(self, checkpoint_dir: str | None = None) -> TrainConfig:
        cfg = _merged(self.raw.get("train"), TRAIN_DEFAULTS, "train.")
        try:
            return TrainConfig(
                batch_size=int(cfg["batch_size"]),
                max_steps=int(cfg["max_steps"]),
                learning_rate=float(cfg["learning_rate"]),
                seed=self.seed,
                beta1=float(cfg["beta1"]),
                beta2=float(cfg["beta2"]),
                eps=float(cfg["eps"]),
                lr_decay_rate=float(cfg["lr_decay_rate"]),
                lr_decay_steps=int(cfg["lr_decay_steps"]),
                checkpoint_interval=int(cfg["checkpoint_interval"]),
                checkpoint_dir=checkpoint_dir,
            )
        except ValueError as err:
            raise ConfigError(f"invalid train section: {err}", key="train") from err

    def sample_config(self) -> tuple[list[float], SampleConfig]:
        """(temperature list, template config with T of the first entry)."""
        cfg = _merged(self.raw.get("sample"), SAMPLE_DEFAULTS, "sample.")
        temps = cfg["temperature"]
        if not isinstance(temps, (list, tuple)):
            temps = [temps]
        temps = [float(t) for t in temps]
        try:
            template = SampleConfig(
                temperature=temps[0] if temps else 0.0,
                n_steps=int(cfg["n_steps"]),
                n_samples=int(cfg["n_samples"]),
                seed=self.seed,
                state_kind=StateKind(cfg["state_kind"]),
            )
            template.x0 = float(cfg["x0"])
        except ValueError as err:
            raise ConfigError(f"invalid sample section: {err}", key="sample") from err
        return temps, template

    def eval_config(self) -> dict[str, Any]:
        cfg = _merged(self.raw.get("eval"), EVAL_DEFAULTS, "eval.")
        if cfg["stat"] not in ("covariance", "third-order"):
            raise ConfigError(f"unknown eval stat '{cfg['stat']}'", key="eval.stat")
        return cfg
