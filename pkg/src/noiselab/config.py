"""Plain key=value run configuration with dotted section names.

Every run resolves a full RunConfig, writes it back to disk, and derives
all randomness from the single root seed. Unknown keys are a hard error
so typos cannot silently change an experiment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ScheduleCfg:
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.2


@dataclass
class ArchCfg:
    image: int = 16
    width: int = 512
    hidden_layers: int = 3
    time_dim: int = 32


@dataclass
class BaseCfg:
    steps: int = 16000
    batch: int = 64
    lr: float = 1e-3
    null_cond_prob: float = 0.1
    early_frac: float = 0.05
    log_every: int = 100


@dataclass
class PairsCfg:
    count: int = 2048
    w_lo: float = 3.0
    w_hi: float = 5.0
    s_lo: float = 2.0
    s_hi: float = 3.0
    quality_draws: int = 8
    filter_q: float = 25.0


@dataclass
class RefinerCfg:
    steps: int = 3000
    batch: int = 64
    lr: float = 3e-4
    mode: str = "msd"
    log_every: int = 100


@dataclass
class SamplerCfgSection:
    N: int = 10
    N_guided: int = 20
    eta: float = 0.0


@dataclass
class GuidanceCfg:
    w: float = 0.0
    s: float = 0.0


@dataclass
class InvertCfg:
    k: int = 5


@dataclass
class SampleCfg:
    count: int = 16
    class_id: int = 0
    use_refiner: bool = False
    dump_traj: bool = False


@dataclass
class AnalyzeCfg:
    count: int = 200
    bins: int = 50
    prop2_n: int = 3
    prop2_batches: int = 8
    prop2_batch: int = 16
    mmd_per_class: int = 256


@dataclass
class RunConfig:
    seed: int = 0
    run_dir: str = "runs/run"
    threads: int = 1
    schedule: ScheduleCfg = field(default_factory=ScheduleCfg)
    arch: ArchCfg = field(default_factory=ArchCfg)
    base: BaseCfg = field(default_factory=BaseCfg)
    pairs: PairsCfg = field(default_factory=PairsCfg)
    refiner: RefinerCfg = field(default_factory=RefinerCfg)
    sampler: SamplerCfgSection = field(default_factory=SamplerCfgSection)
    guidance: GuidanceCfg = field(default_factory=GuidanceCfg)
    invert: InvertCfg = field(default_factory=InvertCfg)
    sample: SampleCfg = field(default_factory=SampleCfg)
    analyze: AnalyzeCfg = field(default_factory=AnalyzeCfg)


_SECTIONS = {f.name: f for f in fields(RunConfig) if f.name not in ("seed", "run_dir", "threads")}
_TOP = {"seed": int, "run_dir": str, "threads": int}


def known_keys(cfg: RunConfig | None = None) -> list[str]:
    cfg = cfg or RunConfig()
    keys = list(_TOP)
    for name in _SECTIONS:
        section = getattr(cfg, name)
        keys += [f"{name}.{f.name}" for f in fields(section)]
    return keys


def _parse_value(text: str, typ) -> object:
    text = text.strip()
    if typ is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    try:
        return typ(text)
    except ValueError as e:
        raise ConfigError(f"bad value {text!r}: {e}") from None


_TYPE_OF_KEY = {}
for _key in known_keys():
    if _key in _TOP:
        _TYPE_OF_KEY[_key] = _TOP[_key]
    else:
        _sec, _, _fld = _key.partition(".")
        _TYPE_OF_KEY[_key] = type(getattr(getattr(RunConfig(), _sec), _fld))


def set_key(cfg: RunConfig, key: str, raw: str) -> None:
    key = key.strip()
    if key not in _TYPE_OF_KEY:
        raise ConfigError(f"unknown config key {key!r}")
    if key in _TOP:
        setattr(cfg, key, _parse_value(raw, _TYPE_OF_KEY[key]))
        return
    section_name, _, field_name = key.partition(".")
    setattr(getattr(cfg, section_name), field_name, _parse_value(raw, _TYPE_OF_KEY[key]))


def parse_config_text(text: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        set_key(cfg, key, raw)
    return cfg


def load_config(path, cfg: RunConfig | None = None) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), cfg)


def resolved_text(cfg: RunConfig) -> str:
    lines = []
    for key in sorted(known_keys(cfg)):
        if key in _TOP:
            value = getattr(cfg, key)
        else:
            section_name, _, field_name = key.partition(".")
            value = getattr(getattr(cfg, section_name), field_name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(resolved_text(cfg).encode()).hexdigest()[:8]
