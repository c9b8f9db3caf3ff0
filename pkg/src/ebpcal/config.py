"""Scenario configuration: dataclasses, TOML loading and schema validation.

A scenario file is TOML with a ``schema_version`` key and the sections
``[signal]``, ``[afe]``, ``[impairments]``, ``[equalizer]``, ``[schedule]``
and ``[run]``. Unknown sections or keys are rejected by name. Defaults
describe a mismatch-free 64-QAM, 96 GBd receiver with an 8-bit 4-way
TI-ADC; impairment ranges are opt-in.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass
class SignalConfig:
    modulation: int = 64
    symbol_rate: float = 96e9
    rolloff: float = 0.10
    pulse_span: int = 32
    channel: str = "rotation"  # identity | rotation | path to a taps file
    channel_theta: float = 0.35
    channel_phase: float = 0.6
    target_ber: float = 1e-3  # 0 -> noiseless
    snr_db: float | None = None  # overrides target_ber when set
    snr_margin_db: float = 1.45  # added to the analytic SNR for target_ber
    drive_rms: float = 0.22


@dataclass
class AfeConfig:
    m: int = 4
    m1: int | None = None
    n_bits: int | None = 8
    full_scale: float = 1.0
    nominal_bw: float = 53e9
    jitter_rms_s: float = 0.0


@dataclass
class ImpairmentConfig:
    """Uniform half-widths; phase/skew in T, bandwidth as a fraction of B0."""

    gain_error: float = 0.0
    phase_error: float = 0.0
    bw_offset: float = 0.0
    offset: float = 0.0
    iq_skew: float = 0.0
    file: str | None = None  # explicit ImpairmentSet JSON, overrides ranges
    seed: int | None = None  # defaults to the run seed


@dataclass
class EqualizerConfig:
    l_g: int = 15
    l_gamma: int = 21
    pin_lane: int = 0
    pin_interleave: int = 0
    pin: bool = True


@dataclass
class ScheduleConfig:
    block_size: int = 8192
    decimation: int = 1
    n_iterations: int = 120
    training_blocks: int = 40
    mu_ce: float = 0.1
    mu_offset: float = 0.02
    mu_gain: float = 1.0
    mu_timing: float = 1.0
    mu_ffe: float = 10.0
    gear: list = field(default_factory=lambda: [[0.0, 1.0], [0.25, 0.25], [0.5, 0.0625]])
    ma_window: int = 10
    final_fraction: float = 0.25


@dataclass
class RunConfig:
    mode: str = "digital"  # digital | mixed | none
    seed: int = 1
    trials: int = 1
    jobs: int = 1
    out: str = "results"
    sine_bin: int = 1531
    sine_dbfs: float = -1.0


@dataclass
class ScenarioConfig:
    signal: SignalConfig = field(default_factory=SignalConfig)
    afe: AfeConfig = field(default_factory=AfeConfig)
    impairments: ImpairmentConfig = field(default_factory=ImpairmentConfig)
    equalizer: EqualizerConfig = field(default_factory=EqualizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @property
    def sample_rate(self) -> float:
        return 2.0 * self.signal.symbol_rate

    def replace(self, **sections) -> ScenarioConfig:
        """Copy with per-section overrides, e.g. ``replace(run={"mode": "none"})``."""
        data = self.to_dict()
        for sec, vals in sections.items():
            if sec not in data:
                raise ConfigError(f"unknown section '{sec}'", sec)
            data[sec].update(vals)
        return from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> ScenarioConfig:
        s, a, e, sch, r = self.signal, self.afe, self.equalizer, self.schedule, self.run
        checks = [
            (s.modulation in (4, 16, 64, 256), "signal.modulation"),
            (0 <= s.rolloff <= 1, "signal.rolloff"),
            (s.drive_rms > 0, "signal.drive_rms"),
            (a.m >= 1, "afe.m"),
            (a.m1 is None or (a.m1 >= 1 and a.m % a.m1 == 0), "afe.m1"),
            (a.n_bits is None or 2 <= a.n_bits <= 16, "afe.n_bits"),
            (0 < a.nominal_bw < self.sample_rate / 2, "afe.nominal_bw"),
            (e.l_g >= 1 and e.l_g % 2 == 1, "equalizer.l_g"),
            (e.l_gamma >= 1, "equalizer.l_gamma"),
            (0 <= e.pin_lane < 4 and 0 <= e.pin_interleave < a.m, "equalizer.pin_lane"),
            (sch.block_size % (2 * a.m) == 0 and sch.block_size >= e.l_g + e.l_gamma, "schedule.block_size"),
            (sch.decimation >= 1, "schedule.decimation"),
            (sch.n_iterations >= 1, "schedule.n_iterations"),
            (min(sch.mu_ce, sch.mu_offset, sch.mu_gain, sch.mu_timing, sch.mu_ffe) >= 0, "schedule.mu_ce"),
            (r.mode in ("digital", "mixed", "none"), "run.mode"),
            (r.trials >= 1, "run.trials"),
            (r.jobs >= 1, "run.jobs"),
        ]
        for ok, key in checks:
            if not ok:
                raise ConfigError(f"invalid value for '{key}'", key)
        return self


_SECTION_CLASSES = {
    "signal": SignalConfig, "afe": AfeConfig, "impairments": ImpairmentConfig,
    "equalizer": EqualizerConfig, "schedule": ScheduleConfig, "run": RunConfig,
}


def from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}", "schema_version")
    kwargs = {}
    for sec, values in data.items():
        cls = _SECTION_CLASSES.get(sec)
        if cls is None:
            raise ConfigError(f"unknown section '{sec}'", sec)
        if not isinstance(values, dict):
            raise ConfigError(f"section '{sec}' must be a table", sec)
        known = {f.name for f in dataclasses.fields(cls)}
        for key in values:
            if key not in known:
                raise ConfigError(f"unknown key '{sec}.{key}'", f"{sec}.{key}")
        kwargs[sec] = cls(**values)
    return ScenarioConfig(**kwargs).validate()


def load_config(path) -> ScenarioConfig:
    try:
        data = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(data)


def config_echo(cfg: ScenarioConfig) -> str:
    """Canonical JSON rendering used as the provenance artifact."""
    return json.dumps({"schema_version": SCHEMA_VERSION, **cfg.to_dict()}, indent=2, sort_keys=True) + "\n"


def parse_override(text: str):
    """``section.key=value`` with the value parsed as a TOML scalar."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override '{text}' must look like section.key=value", text)
    lhs, rhs = text.split("=", 1)
    sec, key = lhs.strip().split(".", 1)
    try:
        value = tomllib.loads(f"v = {rhs.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = rhs.strip()
    return sec, key, value
