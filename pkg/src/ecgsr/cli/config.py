"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Every key has a default; list
values are comma separated. The resolved configuration is echoed into the
output directory by every command.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from ..esrnet import EsrNetConfig
from ..judge import JudgeConfig
from ..signal_data import WINDOW_POLICIES, LeadId
from ..trainer import GAMMA_PRESETS, TrainConfig


class ConfigError(ValueError):
    code = "config"


CONDITIONS = ("C_N", "LC", "LR", "LJ", "C_P")


@dataclass
class ExperimentConfig:
    out_dir: str = "esr_out"
    manifest: str = ""
    seed: int = 0
    # synthetic data
    synth_records: int = 90
    synth_fs: float = 500.0
    synth_duration: float = 10.0
    synth_noise: float = 0.01
    synth_hr_min: float = 55.0
    synth_hr_max: float = 95.0
    synth_lead: str = "II"
    # folds and windows
    n_folds: int = 10
    stratify: bool = True
    window_seconds: float = 10.0
    window_policy: str = "pad_zero_tail"
    # resampling
    fs_grid: tuple = (250.0, 25.0)
    anti_alias: bool = False
    sr_source_fs: float = 25.0
    sr_target_fs: float = 250.0
    # judge
    judge_channels: tuple = (8, 8, 16, 16, 16, 16, 32, 32, 32, 32)
    judge_kernel: int = 3
    judge_pool: int = 2
    judge_gru_hidden: int = 16
    judge_attention_dim: int = 16
    judge_activation: str = "relu"
    judge_epochs: int = 100
    judge_batch: int = 16
    judge_lr: float = 1e-3
    judge_selection: str = "val_overall_f1"  # or val_joint_loss
    # generator
    esr_channels: int = 32
    esr_blocks: int = 16
    esr_head_kernel: int = 9
    esr_block_kernel: int = 3
    esr_factors: tuple = (5, 2)
    esr_activation: str = "prelu"
    esr_global_skip: bool = True
    sr_epochs: int = 100
    sr_batch: int = 8
    sr_lr: float = 1e-3
    gammas: tuple = ("LC", "LR", "LJ")
    # evaluation and reports
    ppr_condition: str = "LJ"
    average: str = "macro"
    sweep_grid: tuple = (500.0, 250.0, 125.0, 100.0, 50.0, 25.0, 15.0, 10.0, 5.0, 1.0)
    sweep_epochs: int = 100
    report_conditions: tuple = CONDITIONS
    report_records: int = 3
    report_ids: tuple = ()

    # ------------------------------------------------------------ derived
    @property
    def out(self):
        return Path(self.out_dir)

    def judge_config(self):
        return JudgeConfig.uniform(
            list(self.judge_channels), kernel=self.judge_kernel, pool=self.judge_pool,
            gru_hidden=self.judge_gru_hidden, attention_dim=self.judge_attention_dim,
            activation=self.judge_activation,
        )

    def esr_config(self):
        return EsrNetConfig(
            self.esr_channels, self.esr_blocks, self.esr_head_kernel, self.esr_block_kernel,
            tuple(self.esr_factors), self.esr_activation, self.esr_global_skip,
        )

    def judge_train(self, epochs=None):
        return TrainConfig(
            epochs or self.judge_epochs, self.judge_batch, self.judge_lr, self.seed, self.judge_selection
        )

    def sr_train(self):
        return TrainConfig(self.sr_epochs, self.sr_batch, self.sr_lr, self.seed)

    def validate(self):
        if self.n_folds < 2:
            raise ConfigError("n_folds must be at least 2")
        if self.window_policy not in WINDOW_POLICIES:
            raise ConfigError(f"window_policy must be one of {WINDOW_POLICIES}")
        if not self.window_seconds > 0:
            raise ConfigError("window_seconds must be positive")
        try:
            LeadId.parse(self.synth_lead)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for g in self.gammas:
            if g not in GAMMA_PRESETS:
                raise ConfigError(f"unknown loss preset {g!r}; choose from {sorted(GAMMA_PRESETS)}")
        if self.ppr_condition not in CONDITIONS:
            raise ConfigError(f"ppr_condition must be one of {CONDITIONS}")
        for c in self.report_conditions:
            if c not in CONDITIONS:
                raise ConfigError(f"unknown run {c!r}; runs are {CONDITIONS}")
        if self.average not in ("macro", "micro"):
            raise ConfigError("average must be macro or micro")
        try:
            self.judge_config()
            self.esr_config().check_rates(self.sr_source_fs, self.sr_target_fs)
            self.judge_train()
            self.sr_train()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    # --------------------------------------------------------- text form
    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            else:
                v = _fmt(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def echo(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _convert(name, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            sample = default[0] if default else ""
            if isinstance(sample, int):
                return tuple(int(s) for s in items)
            if isinstance(sample, float):
                return tuple(float(s) for s in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text, source="<config>"):
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, getattr(defaults, key))
    return ExperimentConfig(**values)


def load_config(path=None, seed=None, environ=None):
    """Read a config file (or take defaults) and apply seed overrides.

    Precedence for the seed: ``seed`` argument, then ``ESR_SEED``, then the file.
    """
    environ = os.environ if environ is None else environ
    if path is None:
        cfg = ExperimentConfig()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = parse_config(path.read_text(encoding="utf-8"), str(path))
        # relative paths are taken from the config file's directory
        if cfg.manifest and not Path(cfg.manifest).is_absolute():
            cfg.manifest = str((path.parent / cfg.manifest).resolve())
        if not Path(cfg.out_dir).is_absolute():
            cfg.out_dir = str((path.parent / cfg.out_dir).resolve())
    if environ.get("ESR_SEED"):
        try:
            cfg.seed = int(environ["ESR_SEED"])
        except ValueError:
            raise ConfigError(f"ESR_SEED must be an integer, got {environ['ESR_SEED']!r}") from None
    if seed is not None:
        cfg.seed = int(seed)
    return cfg.validate()
