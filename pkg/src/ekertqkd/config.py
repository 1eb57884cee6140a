"""Flat key=value run configuration.

One setting per line, dotted prefixes for sections, '#' starts a comment::

    seed=7
    duration_s=2400
    visibility=0.9388
    source.coincidence_rate=5000
    attack.mode=dephase
    attack.plane=A
    attack.angle=0
    attack.fraction=1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .eavesdrop import AttackMode, AttackSpec
from .protocol import SessionConfig
from .qstate import Plane, PoincarePoint
from .source import SourceParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    n_trials: Optional[int] = None
    duration_s: Optional[float] = None
    visibility: float = 1.0
    source: SourceParams = field(default_factory=SourceParams)
    attack: AttackSpec = field(default_factory=AttackSpec)
    detector_efficiencies: tuple = (1.0, 1.0, 1.0, 1.0)
    reconcile_rounds: int = 4
    reconcile_initial_block: Optional[int] = None
    reconcile_check_parities: int = 20
    amplify_ratio: float = 0.7
    amplify_security_bits: Optional[int] = None
    ber_confidence_sigmas: float = 3.0
    sweep_plane: Plane = Plane.A
    sweep_grid: Optional[tuple] = None
    sweep_mode: AttackMode = AttackMode.DEPHASE
    sweep_fraction: float = 1.0
    sweep_trials_per_point: int = 20000
    out_dir: str = "out"

    def __post_init__(self):
        if (self.n_trials is None) == (self.duration_s is None):
            raise ConfigError("set exactly one of n_trials and duration_s")
        if self.n_trials is not None and self.n_trials < 1:
            raise ConfigError(f"n_trials must be positive, got {self.n_trials}")
        if not 0.0 < self.amplify_ratio <= 1.0:
            raise ConfigError(f"amplify.ratio must be in (0, 1], got {self.amplify_ratio}")
        if self.reconcile_rounds < 1:
            raise ConfigError("reconcile.rounds must be at least 1")
        if self.sweep_trials_per_point < 1:
            raise ConfigError("sweep.trials_per_point must be positive")
        try:
            self.session_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def session_config(self) -> SessionConfig:
        return SessionConfig(
            n_windows=self.n_trials,
            duration_s=self.duration_s,
            source=self.source,
            visibility=self.visibility,
            attack=self.attack,
            detector_efficiencies=self.detector_efficiencies,
        )

    def with_overrides(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if "n_trials" in changes:
            changes["duration_s"] = None
        try:
            return dataclasses.replace(self, **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def _float_tuple(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


_TOP = {
    "seed": ("seed", int),
    "n_trials": ("n_trials", int),
    "duration_s": ("duration_s", float),
    "visibility": ("visibility", float),
    "detector.efficiencies": ("detector_efficiencies", _float_tuple),
    "reconcile.rounds": ("reconcile_rounds", int),
    "reconcile.initial_block": ("reconcile_initial_block", int),
    "reconcile.check_parities": ("reconcile_check_parities", int),
    "amplify.ratio": ("amplify_ratio", float),
    "amplify.security_bits": ("amplify_security_bits", int),
    "ber.confidence_sigmas": ("ber_confidence_sigmas", float),
    "sweep.plane": ("sweep_plane", Plane),
    "sweep.grid": ("sweep_grid", _float_tuple),
    "sweep.mode": ("sweep_mode", lambda s: AttackMode(s.lower())),
    "sweep.fraction": ("sweep_fraction", float),
    "sweep.trials_per_point": ("sweep_trials_per_point", int),
    "output.dir": ("out_dir", str),
}

_ATTACK_KEYS = ("attack.mode", "attack.plane", "attack.angle", "attack.fraction")


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    source: dict = {}
    attack: dict = {}
    source_fields = set(SourceParams.field_names())
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        try:
            if key in _TOP:
                name, conv = _TOP[key]
                values[name] = conv(value)
            elif key.startswith("source."):
                name = key[len("source.") :]
                if name not in source_fields:
                    raise ConfigError(f"line {lineno}: unknown source parameter {name!r}")
                source[name] = float(value)
            elif key in _ATTACK_KEYS:
                attack[key[len("attack.") :]] = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    try:
        values["source"] = SourceParams(**source)
        if attack:
            values["attack"] = AttackSpec(
                attack.get("mode", "none"),
                PoincarePoint(attack.get("plane", "A"), float(attack.get("angle", 0.0))),
                float(attack.get("fraction", 1.0)),
            )
        return RunConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def format_config(cfg: RunConfig) -> str:
    lines = [f"seed={cfg.seed}"]
    if cfg.n_trials is not None:
        lines.append(f"n_trials={cfg.n_trials}")
    else:
        lines.append(f"duration_s={cfg.duration_s!r}")
    lines.append(f"visibility={cfg.visibility!r}")
    lines.append("detector.efficiencies=" + ",".join(repr(e) for e in cfg.detector_efficiencies))
    for name in SourceParams.field_names():
        lines.append(f"source.{name}={getattr(cfg.source, name)!r}")
    lines += [
        f"attack.mode={cfg.attack.mode.value}",
        f"attack.plane={cfg.attack.basis.plane.value}",
        f"attack.angle={cfg.attack.basis.angle!r}",
        f"attack.fraction={cfg.attack.fraction!r}",
        f"reconcile.rounds={cfg.reconcile_rounds}",
        f"reconcile.check_parities={cfg.reconcile_check_parities}",
        f"amplify.ratio={cfg.amplify_ratio!r}",
        f"ber.confidence_sigmas={cfg.ber_confidence_sigmas!r}",
    ]
    if cfg.reconcile_initial_block is not None:
        lines.append(f"reconcile.initial_block={cfg.reconcile_initial_block}")
    if cfg.amplify_security_bits is not None:
        lines.append(f"amplify.security_bits={cfg.amplify_security_bits}")
    return "\n".join(lines) + "\n"
