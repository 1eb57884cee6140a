"""Alice/Bob session logic: setting choice, classification, bits and sifting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from . import qstate
from .qstate import ALICE_ANGLES, BOB_ANGLES, JointState, Party
from .rng import session_streams
from .source import SourceParams, draw_double_pair, outcome_table, sample_outcomes


class SettingClass(str, Enum):
    KEY = "key"
    BELL_S = "S"
    BELL_S_PRIME = "S'"
    DISCARD = "discard"


CLASS_ORDER = (SettingClass.KEY, SettingClass.BELL_S, SettingClass.BELL_S_PRIME, SettingClass.DISCARD)

# Rows are Bob's setting, columns Alice's.
_TABLE = {
    1: ("S", "-", "S", "K"),
    2: ("-", "S'", "K", "S'"),
    3: ("S", "K", "S", "-"),
    4: ("K", "S'", "-", "S'"),
}
_CELL = {"K": SettingClass.KEY, "S": SettingClass.BELL_S, "S'": SettingClass.BELL_S_PRIME, "-": SettingClass.DISCARD}

# CLASS_CODES[alice_index, bob_index] -> position in CLASS_ORDER
CLASS_CODES = np.full((5, 5), -1, dtype=np.int8)
for _b, _row in _TABLE.items():
    for _a, _cell in enumerate(_row, start=1):
        CLASS_CODES[_a, _b] = CLASS_ORDER.index(_CELL[_cell])

# Bit carried by the unprimed detector for each setting; the primed one
# carries the complement. Alternating the assignment spreads detector
# efficiency differences evenly over 0s and 1s.
ALICE_DET_BIT = {1: 0, 2: 1, 3: 0, 4: 1}
BOB_DET_BIT = {1: 0, 2: 1, 3: 0, 4: 1}
_ALICE_FLIP = np.array([0, 0, 1, 0, 1], dtype=np.uint8)
_BOB_FLIP = np.array([0, 0, 1, 0, 1], dtype=np.uint8)


def _check_index(index) -> int:
    if index not in (1, 2, 3, 4):
        raise ValueError(f"setting index must be in 1..4, got {index!r}")
    return int(index)


def pick_setting(rng: np.random.Generator) -> int:
    return int(rng.integers(1, 5))


def classify(alice_index: int, bob_index: int) -> SettingClass:
    a, b = _check_index(alice_index), _check_index(bob_index)
    return CLASS_ORDER[CLASS_CODES[a, b]]


def outcome_to_bit(party, setting_index: int, outcome: int) -> int:
    """Key bit for a detector click; outcome 0 is detector 1 (2), 1 is 1' (2')."""
    idx = _check_index(setting_index)
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    table = ALICE_DET_BIT if Party(party) is Party.ALICE else BOB_DET_BIT
    return table[idx] ^ int(outcome)


@dataclass(frozen=True)
class TrialRecord:
    window: int
    alice_index: int
    bob_index: int
    alice_outcome: int
    bob_outcome: int
    setting_class: SettingClass
    alice_bit: Optional[int] = None
    bob_bit: Optional[int] = None
    double_pair: bool = False
    eve_guess: Optional[int] = None
    spurious: bool = False


@dataclass(frozen=True)
class SessionConfig:
    """Everything needed to run one simulated session.

    Exactly one of `n_windows` and `duration_s` is set. Windows are LC
    cycles; a window may yield no usable trial (no coincidence, or an
    ambiguous phase reading).
    """

    n_windows: Optional[int] = None
    duration_s: Optional[float] = None
    source: SourceParams = field(default_factory=SourceParams)
    visibility: float = 1.0
    attack: object = None
    # relative efficiencies of detectors 1, 1', 2, 2'
    detector_efficiencies: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if (self.n_windows is None) == (self.duration_s is None):
            raise ValueError("set exactly one of n_windows and duration_s")
        if self.n_windows is not None and int(self.n_windows) < 1:
            raise ValueError(f"n_windows must be positive, got {self.n_windows!r}")
        if self.duration_s is not None and not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s!r}")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must be in [0, 1], got {self.visibility!r}")
        eff = tuple(float(e) for e in self.detector_efficiencies)
        if len(eff) != 4 or min(eff) <= 0:
            raise ValueError("detector_efficiencies needs four positive values")
        object.__setattr__(self, "detector_efficiencies", eff)

    @property
    def windows(self) -> int:
        if self.n_windows is not None:
            return int(self.n_windows)
        return int(round(self.duration_s / self.source.cycle_period))

    @property
    def elapsed_s(self) -> float:
        return self.windows * self.source.cycle_period


_COLUMNS = (
    "window",
    "alice_index",
    "bob_index",
    "alice_outcome",
    "bob_outcome",
    "setting_class",
    "double_pair",
    "spurious",
    "eve_outcome",
    "eve_guess",
)


@dataclass(eq=False)
class SessionData:
    """Column-oriented record of every usable trial in a session.

    `setting_class` holds positions in CLASS_ORDER; `eve_outcome` and
    `eve_guess` use -1 for trials Eve did not intercept.
    """

    window: np.ndarray
    alice_index: np.ndarray
    bob_index: np.ndarray
    alice_outcome: np.ndarray
    bob_outcome: np.ndarray
    setting_class: np.ndarray
    double_pair: np.ndarray
    spurious: np.ndarray
    eve_outcome: np.ndarray
    eve_guess: np.ndarray
    seed: int = 0
    n_windows: int = 0
    elapsed_s: float = 0.0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.window = np.asarray(self.window, dtype=np.int64)
        for name in ("alice_index", "bob_index", "setting_class", "eve_outcome", "eve_guess"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int8))
        for name in ("alice_outcome", "bob_outcome"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.uint8))
        for name in ("double_pair", "spurious"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=bool))
        lengths = {len(getattr(self, c)) for c in _COLUMNS}
        if len(lengths) > 1:
            raise ValueError("session columns have different lengths")
        if len(self) and not np.array_equal(CLASS_CODES[self.alice_index, self.bob_index], self.setting_class):
            raise ValueError("stored setting classes disagree with the allocation table")

    def __len__(self) -> int:
        return len(self.window)

    @classmethod
    def empty(cls, **meta) -> "SessionData":
        return cls(*([] for _ in _COLUMNS), **meta)

    def subset(self, mask) -> "SessionData":
        cols = [getattr(self, c)[mask] for c in _COLUMNS]
        return SessionData(*cols, seed=self.seed, n_windows=self.n_windows, elapsed_s=self.elapsed_s, config=self.config)

    def head(self, n: int) -> "SessionData":
        return self.subset(slice(0, n))

    def of_class(self, cls: SettingClass) -> "SessionData":
        return self.subset(self.setting_class == CLASS_ORDER.index(cls))

    @property
    def alice_bits(self) -> np.ndarray:
        return self.alice_outcome ^ _ALICE_FLIP[self.alice_index]

    @property
    def bob_bits(self) -> np.ndarray:
        return self.bob_outcome ^ _BOB_FLIP[self.bob_index]

    @property
    def trials(self) -> list[TrialRecord]:
        out = []
        a_bits, b_bits = self.alice_bits, self.bob_bits
        for i in range(len(self)):
            cls = CLASS_ORDER[self.setting_class[i]]
            is_key = cls is SettingClass.KEY
            guess = int(self.eve_guess[i])
            out.append(
                TrialRecord(
                    window=int(self.window[i]),
                    alice_index=int(self.alice_index[i]),
                    bob_index=int(self.bob_index[i]),
                    alice_outcome=int(self.alice_outcome[i]),
                    bob_outcome=int(self.bob_outcome[i]),
                    setting_class=cls,
                    alice_bit=int(a_bits[i]) if is_key else None,
                    bob_bit=int(b_bits[i]) if is_key else None,
                    double_pair=bool(self.double_pair[i]),
                    eve_guess=guess if is_key and guess >= 0 else None,
                    spurious=bool(self.spurious[i]),
                )
            )
        return out

    def to_log(self) -> str:
        """Line-oriented text log, one trial per line.

        Header lines start with '#'. Each trial line is the public
        announcement (window, both setting indices, class) followed by
        the private detector outcomes and simulation flags.
        """
        lines = [
            "# ekertqkd session log v1",
            f"# seed={self.seed}",
            f"# n_windows={self.n_windows}",
            f"# elapsed_s={self.elapsed_s!r}",
        ]
        lines += [f"# config {k}={v}" for k, v in self.config.items()]
        lines.append("# " + " ".join(_COLUMNS))
        for i in range(len(self)):
            cls = CLASS_ORDER[self.setting_class[i]].value
            lines.append(
                f"{self.window[i]} {self.alice_index[i]} {self.bob_index[i]} "
                f"{self.alice_outcome[i]} {self.bob_outcome[i]} {cls} "
                f"{int(self.double_pair[i])} {int(self.spurious[i])} "
                f"{self.eve_outcome[i]} {self.eve_guess[i]}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_log(cls, text: str) -> "SessionData":
        meta = {"config": {}}
        rows = []
        by_value = {c.value: i for i, c in enumerate(CLASS_ORDER)}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("config "):
                    k, _, v = body[len("config ") :].partition("=")
                    meta["config"][k] = v
                elif body.startswith("seed="):
                    meta["seed"] = int(body[5:])
                elif body.startswith("n_windows="):
                    meta["n_windows"] = int(body[10:])
                elif body.startswith("elapsed_s="):
                    meta["elapsed_s"] = float(body[10:])
                continue
            parts = line.split()
            if len(parts) != len(_COLUMNS):
                raise ValueError(f"session log line {lineno}: expected {len(_COLUMNS)} fields, got {len(parts)}")
            try:
                parts[5] = by_value[parts[5]]
                rows.append([int(p) for p in parts])
            except (KeyError, ValueError) as exc:
                raise ValueError(f"session log line {lineno}: {exc}") from None
        if not rows:
            return cls.empty(**meta)
        cols = np.array(rows, dtype=np.int64).T
        return cls(*cols, **meta)


class Sifted(NamedTuple):
    alice_key: np.ndarray
    bob_key: np.ndarray
    bell_s: SessionData
    bell_s_prime: SessionData
    n_discarded: int
    key_trials: SessionData


def sift(data: SessionData) -> Sifted:
    """Partition trials by announced settings; keys stay in window order."""
    order = np.argsort(data.window, kind="stable")
    data = data.subset(order) if len(data) else data
    key = data.of_class(SettingClass.KEY)
    n_disc = int(np.sum(data.setting_class == CLASS_ORDER.index(SettingClass.DISCARD)))
    return Sifted(
        key.alice_bits.astype(np.uint8),
        key.bob_bits.astype(np.uint8),
        data.of_class(SettingClass.BELL_S),
        data.of_class(SettingClass.BELL_S_PRIME),
        n_disc,
        key,
    )


def _probability_tables(states, efficiencies) -> np.ndarray:
    """tables[branch, alice_index, bob_index] -> 2x2 outcome probabilities."""
    eff_a = np.array(efficiencies[:2])
    eff_b = np.array(efficiencies[2:])
    weight = np.outer(eff_a, eff_b)
    tables = np.zeros((len(states), 5, 5, 2, 2))
    for k, st in enumerate(states):
        for a in range(1, 5):
            for b in range(1, 5):
                t = outcome_table(qstate.coincidence_probs(st, ALICE_ANGLES[a], BOB_ANGLES[b])) * weight
                tables[k, a, b] = t / t.sum()
    return tables


def run_session(config: SessionConfig, attack=None, *, seed: int = 0) -> SessionData:
    """Simulate a full session window by window.

    Every draw comes from a named substream of `seed`. Eve acts on each
    real pair independently with probability `attack.fraction`; photons
    she blocks never make a coincidence, and the next pair in the window
    (if any) takes their place.
    """
    from .eavesdrop import AttackSpec, attack_branches, eve_guess_table

    attack = attack if attack is not None else config.attack
    if attack is None:
        attack = AttackSpec()
    params = config.source
    n = config.windows
    streams = session_streams(seed)

    alice_idx = streams["alice-settings"].integers(1, 5, size=n)
    bob_idx = streams["bob-settings"].integers(1, 5, size=n)

    src = streams["source"]
    ambiguous = src.random(n) < params.ambiguous_setting_prob
    n_real = src.poisson(params.mean_pairs, size=n)
    n_spur = src.poisson(params.spurious_rate * params.window, size=n)
    order_u = src.random(n)
    double = draw_double_pair(params, src, size=n)
    spur_out = src.integers(0, 2, size=(n, 2))

    clean = qstate.visibility_mix(qstate.phi_plus(), config.visibility)
    branches = attack_branches(clean, attack)
    lost_w = sum(br.weight for br in branches if br.lost)
    live = [br for br in branches if not br.lost]
    if not live or lost_w >= 1.0:
        raise ValueError("the attack blocks every photon; no coincidences are possible")
    live_w = np.array([br.weight for br in live]) / (1.0 - lost_w)

    eve = streams["eve"]
    n_real = eve.binomial(n_real, 1.0 - lost_w) if lost_w > 0 else n_real
    branch = np.minimum(np.searchsorted(np.cumsum(live_w), eve.random(n), side="right"), len(live) - 1)

    total = n_real + n_spur
    with np.errstate(invalid="ignore", divide="ignore"):
        spurious = order_u < np.where(total > 0, n_spur / np.maximum(total, 1), 0.0)
    keep = (total > 0) & ~ambiguous

    tables = _probability_tables([br.state for br in live], config.detector_efficiencies)
    a_out, b_out = sample_outcomes(tables[branch, alice_idx, bob_idx], src)
    a_out = np.where(spurious, spur_out[:, 0], a_out)
    b_out = np.where(spurious, spur_out[:, 1], b_out)

    eve_out = np.array([-1 if br.eve_outcome is None else br.eve_outcome for br in live])[branch]
    eve_out = np.where(spurious, -1, eve_out)
    guess_tab = eve_guess_table(attack)
    eve_guess = np.where(eve_out >= 0, guess_tab[bob_idx, np.maximum(eve_out, 0)], -1)
    double = double & ~spurious

    idx = np.flatnonzero(keep)
    return SessionData(
        window=idx,
        alice_index=alice_idx[idx],
        bob_index=bob_idx[idx],
        alice_outcome=a_out[idx],
        bob_outcome=b_out[idx],
        setting_class=CLASS_CODES[alice_idx[idx], bob_idx[idx]],
        double_pair=double[idx],
        spurious=spurious[idx],
        eve_outcome=eve_out[idx],
        eve_guess=eve_guess[idx],
        seed=int(seed),
        n_windows=n,
        elapsed_s=config.elapsed_s,
        config=config_snapshot(replace(config, attack=attack)),
    )


def config_snapshot(config: SessionConfig) -> dict:
    snap = {
        "n_windows": config.windows,
        "visibility": repr(config.visibility),
        "detector_efficiencies": ",".join(repr(e) for e in config.detector_efficiencies),
    }
    for name in SourceParams.field_names():
        snap[f"source.{name}"] = repr(getattr(config.source, name))
    att = config.attack
    if att is not None:
        snap["attack.mode"] = att.mode.value
        snap["attack.plane"] = att.basis.plane.value
        snap["attack.angle"] = repr(att.basis.angle)
        snap["attack.fraction"] = repr(att.fraction)
    return snap
