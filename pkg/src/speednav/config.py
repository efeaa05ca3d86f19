"""Plain-text run configuration.

INI document with sections ``[sim]``, ``[pipe]``, ``[model]``, ``[train]`` and
``[nav]``. Every key has a default, unknown sections or keys are rejected, and
a fully resolved copy is written next to every command's outputs.

List-valued keys use compact text forms:

* ``segments``: semicolon-separated ``kind:duration:speed[:radius]`` entries,
  e.g. ``straight:10:12; arc:8:6:20; stop:5`` (stops take only a duration).
* ``vibration_windows``: semicolon-separated ``t_start:t_end:extra_std``.
* 3-vectors (``accel_bias``, ``gyro_bias``): ``x,y,z`` or empty to draw a
  random per-drive bias from the matching ``*_bias_scale`` knob.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidConfigError
from .model.network import ModelConfig
from .model.training import TrainConfig
from .simulate import Segment

_CONFIG_DOC = """\
Configuration keys (INI; every key optional, defaults shown):

[sim]
  drives = 4                number of drives to simulate
  duration = 600.0          target drive duration, s
  seed = 0                  master seed; per-drive seeds derive from it
  dt = 0.01                 tick period, s (100 Hz)
  segments =                explicit profile (kind:dur:speed[:radius]; ...);
                            empty -> a random city profile per drive
  max_speed = 15.0          random-profile target speed cap, m/s
  accel_bias =              fixed accel bias "x,y,z" m/s^2; empty -> random
  gyro_bias =               fixed gyro bias "x,y,z" rad/s; empty -> random
  accel_bias_scale = 0.03   per-axis uniform draw range for random accel bias
  gyro_bias_scale = 0.0001  per-axis uniform draw range for random gyro bias
  accel_noise_std = 0.04    white accel noise, m/s^2
  gyro_noise_std = 0.002    white gyro noise, rad/s
  vibration_windows =       rough-road bursts (t0:t1:extra_std; ...)
  position_std = 0.02       RTK fix noise per axis, m

[pipe]
  ratio = 0.85              train fraction of windows
  attitude_source = estimator   roll/pitch for gravity removal:
                            estimator | truth | level

[model]
  h1 = 19                   unidirectional layer width
  h2 = 16                   first bidirectional layer width (per direction)
  h3 = 16                   second bidirectional layer width (per direction)
  input_channels = 6
  window_len = 20
  seed = 1                  weight initialization seed

[train]
  epochs = 200
  batch_lanes = 4           parallel drive lanes per batch
  learning_rate = 0.001
  beta1 = 0.9
  beta2 = 0.999
  epsilon = 1e-08
  clip_norm = 5.0           global gradient-norm clip (0 disables)
  seed = 2
  early_stop_patience = 0   epochs without val improvement before stopping
                            (0 trains the full schedule)

[nav]
  mode = aided              plain | aided | truth
  attitude_source = estimator   estimator | level
"""


@dataclass(frozen=True)
class SimSection:
    drives: int = 4
    duration: float = 600.0
    seed: int = 0
    dt: float = 0.01
    segments: str = ""
    max_speed: float = 15.0
    accel_bias: str = ""
    gyro_bias: str = ""
    accel_bias_scale: float = 0.03
    gyro_bias_scale: float = 1e-4
    accel_noise_std: float = 0.04
    gyro_noise_std: float = 0.002
    vibration_windows: str = ""
    position_std: float = 0.02


@dataclass(frozen=True)
class PipeSection:
    ratio: float = 0.85
    attitude_source: str = "estimator"


@dataclass(frozen=True)
class NavSection:
    mode: str = "aided"
    attitude_source: str = "estimator"


@dataclass(frozen=True)
class RunConfig:
    sim: SimSection
    pipe: PipeSection
    model: ModelConfig
    train: TrainConfig
    nav: NavSection


_SECTIONS = {
    "sim": SimSection,
    "pipe": PipeSection,
    "model": ModelConfig,
    "train": TrainConfig,
    "nav": NavSection,
}

_MODEL_DEFAULT_SEEDS = {"model": 1, "train": 2}


def config_reference() -> str:
    """Human-readable description of every configuration key."""
    return _CONFIG_DOC


def default_config() -> RunConfig:
    return RunConfig(
        sim=SimSection(),
        pipe=PipeSection(),
        model=ModelConfig(seed=1),
        train=TrainConfig(seed=2),
        nav=NavSection(),
    )


def _coerce(section: str, key: str, raw: str, target_type):
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise InvalidConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file; ``None`` gives the defaults.

    ``overrides`` maps ``(section, key)`` to values applied after parsing
    (used for CLI flags like ``--seed``).

    Raises:
        InvalidConfigError: unknown section/key, bad value, or failed validation.
    """
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise InvalidConfigError(f"malformed config {path}: {exc}") from exc

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise InvalidConfigError(f"unknown config section [{section}]")
        cls = _SECTIONS[section]
        known = {f.name: f.type for f in fields(cls)}
        type_map = {f.name: type(getattr(cls, "__dataclass_fields__")[f.name].default)
                    for f in fields(cls)}
        sec_values = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise InvalidConfigError(f"unknown key {key!r} in section [{section}]")
            sec_values[key] = _coerce(section, key, raw.strip(), type_map[key])
        values[section] = sec_values

    if overrides:
        for (section, key), val in overrides.items():
            values.setdefault(section, {})[key] = val

    for name, default_seed in _MODEL_DEFAULT_SEEDS.items():
        values.setdefault(name, {}).setdefault("seed", default_seed)

    try:
        cfg = RunConfig(
            sim=SimSection(**values.get("sim", {})),
            pipe=PipeSection(**values.get("pipe", {})),
            model=ModelConfig(**values.get("model", {})),
            train=TrainConfig(**values.get("train", {})),
            nav=NavSection(**values.get("nav", {})),
        )
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    sim = cfg.sim
    if sim.drives < 1:
        raise InvalidConfigError("[sim] drives must be >= 1")
    if not sim.duration > 0.0:
        raise InvalidConfigError("[sim] duration must be positive")
    if not sim.dt > 0.0:
        raise InvalidConfigError("[sim] dt must be positive")
    for key in ("accel_bias_scale", "gyro_bias_scale", "accel_noise_std",
                "gyro_noise_std", "position_std"):
        if getattr(sim, key) < 0.0:
            raise InvalidConfigError(f"[sim] {key} must be >= 0")
    parse_segments(sim.segments, sim.dt)
    parse_vibration(sim.vibration_windows)
    parse_vector3(sim.accel_bias, "[sim] accel_bias")
    parse_vector3(sim.gyro_bias, "[sim] gyro_bias")
    if not 0.0 < cfg.pipe.ratio < 1.0:
        raise InvalidConfigError("[pipe] ratio must be in (0, 1)")
    if cfg.pipe.attitude_source not in ("estimator", "truth", "level"):
        raise InvalidConfigError("[pipe] attitude_source must be estimator|truth|level")
    if cfg.nav.mode not in ("plain", "aided", "truth"):
        raise InvalidConfigError("[nav] mode must be plain|aided|truth")
    if cfg.nav.attitude_source not in ("estimator", "level"):
        raise InvalidConfigError("[nav] attitude_source must be estimator|level")


def parse_segments(text: str, dt: float = 0.01) -> tuple[Segment, ...]:
    """Parse the compact segment list syntax (empty text gives ())."""
    text = text.strip()
    if not text:
        return ()
    segments = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = [p.strip() for p in item.split(":")]
        kind = parts[0]
        try:
            if kind == "stop":
                if len(parts) != 2:
                    raise ValueError("stop takes kind:duration")
                segments.append(Segment("stop", float(parts[1])))
            elif kind == "straight":
                if len(parts) != 3:
                    raise ValueError("straight takes kind:duration:speed")
                segments.append(Segment("straight", float(parts[1]), float(parts[2])))
            elif kind == "arc":
                if len(parts) != 4:
                    raise ValueError("arc takes kind:duration:speed:radius")
                segments.append(Segment("arc", float(parts[1]), float(parts[2]), float(parts[3])))
            else:
                raise ValueError(f"unknown segment kind {kind!r}")
        except ValueError as exc:
            raise InvalidConfigError(f"[sim] segments: {exc}") from exc
    return tuple(segments)


def parse_vibration(text: str) -> tuple[tuple[float, float, float], ...]:
    text = text.strip()
    if not text:
        return ()
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise InvalidConfigError("[sim] vibration_windows entries are t0:t1:std")
        try:
            t0, t1, std = (float(p) for p in parts)
        except ValueError as exc:
            raise InvalidConfigError(f"[sim] vibration_windows: {exc}") from exc
        if not t1 > t0 or std < 0.0:
            raise InvalidConfigError("[sim] vibration_windows need t1 > t0 and std >= 0")
        out.append((t0, t1, std))
    return tuple(out)


def parse_vector3(text: str, what: str) -> np.ndarray | None:
    text = text.strip()
    if not text:
        return None
    parts = text.split(",")
    if len(parts) != 3:
        raise InvalidConfigError(f"{what} must be three comma-separated numbers")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise InvalidConfigError(f"{what}: {exc}") from exc


def derive_seed(master: int, *tags: int) -> int:
    """Deterministic child seed from a master seed and integer tags."""
    seq = np.random.SeedSequence([int(master)] + [int(t) for t in tags])
    return int(seq.generate_state(1)[0])


def dump_config(cfg: RunConfig) -> str:
    """Render the fully resolved configuration as INI text."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, obj in (
        ("sim", cfg.sim),
        ("pipe", cfg.pipe),
        ("model", cfg.model),
        ("train", cfg.train),
        ("nav", cfg.nav),
    ):
        parser[section] = {f.name: repr(getattr(obj, f.name)) if isinstance(getattr(obj, f.name), float)
                           else str(getattr(obj, f.name)) for f in fields(type(obj))}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def write_resolved(cfg: RunConfig, out_dir) -> None:
    from pathlib import Path

    path = Path(out_dir) / "resolved_config.ini"
    path.write_text(dump_config(cfg), encoding="utf-8")
