"""Eavesdropping strategies, interception semantics and attack sweeps.

Two intercept-resend strategies act on Bob's photon:

* ``filter``: a polarizer along chi. Photons that fail never reach Bob.
* ``dephase``: a QND-like measurement in the (chi, chi-perp) basis that
  leaves a random relative phase; Bob receives the eigenstate Eve found.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import qstate
from .postprocess import ber as key_ber
from .postprocess import estimate_bell
from .protocol import BOB_DET_BIT, SessionConfig, SessionData, run_session, sift
from .qstate import BOB_ANGLES, JointState, Plane, PoincarePoint
from .rng import substream
from .source import SourceParams


class AttackMode(str, Enum):
    NONE = "none"
    FILTER = "filter"
    DEPHASE = "dephase"


@dataclass(frozen=True)
class AttackSpec:
    mode: AttackMode = AttackMode.NONE
    basis: PoincarePoint = field(default_factory=lambda: PoincarePoint(Plane.A, 0.0))
    fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", AttackMode(str(getattr(self.mode, "value", self.mode)).lower()))
        if not isinstance(self.basis, PoincarePoint):
            object.__setattr__(self, "basis", PoincarePoint(*self.basis))
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"interception fraction must be in [0, 1], got {self.fraction!r}")

    @classmethod
    def filter(cls, plane, angle: float, fraction: float = 1.0) -> "AttackSpec":
        return cls(AttackMode.FILTER, PoincarePoint(plane, angle), fraction)

    @classmethod
    def dephase(cls, plane, angle: float, fraction: float = 1.0) -> "AttackSpec":
        return cls(AttackMode.DEPHASE, PoincarePoint(plane, angle), fraction)

    @property
    def active(self) -> bool:
        return self.mode is not AttackMode.NONE and self.fraction > 0

    @property
    def chi(self) -> qstate.PureQubit:
        return qstate.poincare_state(self.basis)


class Branch(NamedTuple):
    """One way a single pair can come out of the attack."""

    weight: float
    state: Optional[JointState]
    eve_outcome: Optional[int]  # 0: chi, 1: chi-perp
    lost: bool = False


class Interception(NamedTuple):
    post_state: Optional[JointState]
    eve_bit: Optional[int]
    lost: bool


def attack_branches(state: JointState, spec: AttackSpec) -> list[Branch]:
    """Enumerate the outcomes of `spec` on one pair with their probabilities."""
    if not spec.active:
        return [Branch(1.0, state, None)]
    f = spec.fraction
    chi = spec.chi
    out = [Branch(1.0 - f, state, None)] if f < 1.0 else []
    for outcome, basis_state in enumerate((chi, chi.perp())):
        k = np.kron(np.eye(2), basis_state.projector)
        p = float(np.trace(k @ state.rho @ k).real)
        if spec.mode is AttackMode.FILTER and outcome == 1:
            out.append(Branch(f * p, None, None, lost=True))
            continue
        if p > 1e-15:
            out.append(Branch(f * p, qstate.filter_channel(state, basis_state)[0], outcome))
    return [b for b in out if b.weight > 0]


def intercept(state: JointState, spec: AttackSpec, rng: np.random.Generator) -> Interception:
    """Apply `spec` to a single pair.

    With probability 1 - fraction the pair is untouched. Otherwise Eve
    measures Bob's photon; in dephase mode she forwards the eigenstate she
    found, in filter mode a failed projection loses the photon.
    """
    branches = attack_branches(state, spec)
    w = np.array([b.weight for b in branches])
    k = int(np.searchsorted(np.cumsum(w) / w.sum(), rng.random(), side="right"))
    br = branches[min(k, len(branches) - 1)]
    return Interception(br.state, br.eve_outcome, br.lost)


def eve_guess_table(spec: AttackSpec) -> np.ndarray:
    """table[bob_index, eve_outcome] -> Eve's guess of Bob's key bit.

    After bases are announced Eve knows Bob's setting; she maps the
    eigenstate she found onto whichever of Bob's two detectors it overlaps
    more, then applies Bob's detector-to-bit assignment.
    """
    table = np.full((5, 2), -1, dtype=np.int8)
    if spec.mode is AttackMode.NONE:
        return table
    chi = spec.chi
    for b in range(1, 5):
        plus = qstate.analyzer_state(BOB_ANGLES[b]).vector
        for outcome, e in enumerate((chi, chi.perp())):
            overlap = abs(np.vdot(plus, e.vector)) ** 2
            detector = 0 if overlap >= 0.5 - 1e-12 else 1
            table[b, outcome] = BOB_DET_BIT[b] ^ detector
    return table


class EveKnowledge(NamedTuple):
    known_fraction: float
    guessed_fraction: float
    agreement: float  # among guessed bits, fraction equal to Bob's


def eve_knowledge(data: SessionData) -> EveKnowledge:
    key = sift(data).key_trials
    n = len(key)
    if n == 0:
        return EveKnowledge(0.0, 0.0, float("nan"))
    guessed = key.eve_guess >= 0
    correct = guessed & (key.eve_guess == key.bob_bits.astype(np.int8))
    known = correct | key.double_pair
    agreement = float(correct.sum() / guessed.sum()) if guessed.any() else float("nan")
    return EveKnowledge(float(known.mean()), float(guessed.mean()), agreement)


def eve_information(data: SessionData) -> float:
    """Fraction of raw key bits Eve knows.

    A bit counts as known when her guess equals Bob's bit, or when a double
    pair was emitted in that window.
    """
    return eve_knowledge(data).known_fraction


class SweepRow(NamedTuple):
    angle: float
    S_analytic: float
    S_mc: float
    S_mc_sigma: float
    S_prime_analytic: float
    S_prime_mc: float
    S_prime_mc_sigma: float
    BER_analytic: float
    BER_mc: float
    BER_mc_sigma: float
    eve_info: float


SWEEP_COLUMNS = SweepRow._fields
DEFAULT_GRID_STEP = 15.0


def default_grid(plane) -> list[float]:
    return list(np.arange(0.0, Plane(plane).period, DEFAULT_GRID_STEP))


def sweep_point(
    spec: AttackSpec,
    trials: int,
    seed: int,
    visibility: float = 1.0,
    source: SourceParams | None = None,
) -> SweepRow:
    theory = qstate.predicted_observables(spec, visibility)
    config = SessionConfig(n_windows=trials, source=source or SourceParams(), visibility=visibility, attack=spec)
    data = run_session(config, seed=seed)
    sifted = sift(data)
    bell = estimate_bell(sifted.bell_s, sifted.bell_s_prime)
    n_key = len(sifted.alice_key)
    ber_mc = key_ber(sifted.alice_key, sifted.bob_key)
    return SweepRow(
        spec.basis.angle,
        theory.S,
        bell.S,
        bell.S_sigma,
        theory.S_prime,
        bell.S_prime,
        bell.S_prime_sigma,
        theory.ber_avg,
        ber_mc,
        float(np.sqrt(ber_mc * (1.0 - ber_mc) / n_key)),
        eve_information(data),
    )


def sweep(
    plane,
    angles: Sequence[float],
    mode,
    fraction: float = 1.0,
    trials_per_point: int = 20000,
    seed: int = 0,
    visibility: float = 1.0,
    source: SourceParams | None = None,
) -> list[SweepRow]:
    """Analytic and Monte-Carlo observables across attack angles in one plane.

    Each point runs an independent session seeded from (seed, point index).
    """
    angles = list(angles)
    if not angles:
        raise ValueError("sweep needs at least one angle")
    rows = []
    for i, angle in enumerate(angles):
        spec = AttackSpec(mode, PoincarePoint(plane, angle), fraction)
        point_seed = int(substream(seed, "sweep", i, int(round(angle * 1000))).integers(2**63 - 1))
        rows.append(sweep_point(spec, trials_per_point, point_seed, visibility, source))
    return sorted(rows, key=lambda r: r.angle)


def format_sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([f"{v:.6g}" for v in row])
    return buf.getvalue()


def parse_sweep_csv(text: str) -> list[SweepRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != SWEEP_COLUMNS:
        raise ValueError(f"unexpected sweep header {header!r}")
    return [SweepRow(*(float(v) for v in row)) for row in reader if row]


class PlaneAverage(NamedTuple):
    avg_abs_S: float
    avg_ber: float


def plane_average(
    plane,
    mode=AttackMode.DEPHASE,
    n_angles: int = 360,
    angles: Sequence[float] | None = None,
    fraction: float = 1.0,
    visibility: float = 1.0,
) -> PlaneAverage:
    """Average |S| and key BER over attack bases in `plane`.

    Uses a uniform grid of `n_angles` points over the plane's period unless
    an explicit list of `angles` (e.g. a set of measured attack points) is
    given.
    """
    if angles is None:
        if n_angles < 2:
            raise ValueError("plane_average needs at least two angles")
        angles = qstate.uniform_grid(plane, n_angles)
    angles = list(angles)
    if not angles:
        raise ValueError("plane_average needs at least one angle")
    obs = [qstate.predicted_observables(AttackSpec(mode, PoincarePoint(plane, a), fraction), visibility) for a in angles]
    return PlaneAverage(float(np.mean([abs(o.S) for o in obs])), float(np.mean([o.ber_avg for o in obs])))
