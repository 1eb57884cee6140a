"""Two-photon polarization states, analyzers and eavesdropping channels.

Every probability in the package is computed from a 4x4 density matrix in
the ordered basis (HH, HV, VH, VV). The first tensor factor is Alice's
photon, the second is Bob's. Public functions take angles in degrees.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = -1e-10

SQRT2 = np.sqrt(2.0)

ALICE_ANGLES = {1: 45.0, 2: 90.0, 3: 135.0, 4: 180.0}
BOB_ANGLES = {1: 0.0, 2: 45.0, 3: 90.0, 4: 135.0}

# (alice_index, bob_index) pairs whose phases sum to 180 degrees.
KEY_SETTINGS = ((1, 4), (2, 3), (3, 2), (4, 1))

# Each term is (sign, alice_index, bob_index).
S_TERMS = ((-1, 1, 1), (+1, 1, 3), (+1, 3, 1), (+1, 3, 3))
S_PRIME_TERMS = ((+1, 2, 2), (+1, 2, 4), (+1, 4, 2), (-1, 4, 4))

_I2 = np.eye(2, dtype=complex)


class Party(str, Enum):
    ALICE = "alice"
    BOB = "bob"


class Plane(str, Enum):
    """Great circles of the Poincare sphere used for attack bases.

    A is the plane of the protocol's own analyzers (diagonal and circular
    states), B is the linear-polarization equator, C holds H/V and the
    circular poles.
    """

    A = "A"
    B = "B"
    C = "C"

    @property
    def period(self) -> float:
        # cos(t)|H> + sin(t)|V> repeats (up to a global phase) after 180 degrees.
        return 180.0 if self is Plane.B else 360.0


@dataclass(frozen=True)
class PureQubit:
    amp_h: complex
    amp_v: complex

    def __post_init__(self):
        norm = abs(self.amp_h) ** 2 + abs(self.amp_v) ** 2
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-12:
            raise ValueError(f"qubit amplitudes not normalized: |h|^2+|v|^2 = {norm!r}")

    @classmethod
    def from_vector(cls, vec) -> "PureQubit":
        vec = np.asarray(vec, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(complex(vec[0]), complex(vec[1]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_h, self.amp_v], dtype=complex)

    @property
    def projector(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())

    def perp(self) -> "PureQubit":
        """The orthogonal polarization state."""
        return PureQubit(-np.conj(self.amp_v), np.conj(self.amp_h))

    def stokes(self) -> np.ndarray:
        """Normalized Stokes vector (S1, S2, S3): H/V, +45/-45, R/L components."""
        h, v = self.amp_h, self.amp_v
        s1 = abs(h) ** 2 - abs(v) ** 2
        s2 = 2.0 * (np.conj(h) * v).real
        s3 = 2.0 * (np.conj(h) * v).imag
        return np.array([s1, s2, s3])


H = PureQubit(1.0, 0.0)
V = PureQubit(0.0, 1.0)


@dataclass(frozen=True, eq=False)
class JointState:
    """Density matrix of a photon pair, basis order (HH, HV, VH, VV)."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"expected a 4x4 density matrix, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(rho).min() < POSITIVITY_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_pure(cls, vec) -> "JointState":
        vec = np.asarray(vec, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(np.outer(vec, vec.conj()))

    @classmethod
    def product(cls, alice: PureQubit, bob: PureQubit) -> "JointState":
        return cls.from_pure(np.kron(alice.vector, bob.vector))

    @classmethod
    def maximally_mixed(cls) -> "JointState":
        return cls(np.eye(4, dtype=complex) / 4.0)

    def allclose(self, other: "JointState", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.rho, other.rho, atol=atol, rtol=0.0))

    def bob_marginal(self) -> np.ndarray:
        r = self.rho.reshape(2, 2, 2, 2)
        return np.einsum("abac->bc", r)


@dataclass(frozen=True)
class AnalyzerPhase:
    party: Party
    index: int

    def __post_init__(self):
        if self.index not in (1, 2, 3, 4):
            raise ValueError(f"analyzer index must be 1..4, got {self.index!r}")
        object.__setattr__(self, "party", Party(self.party))

    @property
    def angle(self) -> float:
        table = ALICE_ANGLES if self.party is Party.ALICE else BOB_ANGLES
        return table[self.index]


@dataclass(frozen=True)
class PoincarePoint:
    plane: Plane
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "plane", Plane(self.plane))
        object.__setattr__(self, "angle", float(self.angle))


class CoincidenceProbs(NamedTuple):
    p_12: float
    p_12p: float
    p_1p2: float
    p_1p2p: float

    @property
    def total(self) -> float:
        return self.p_12 + self.p_12p + self.p_1p2 + self.p_1p2p

    def normalized(self) -> "CoincidenceProbs":
        t = self.total
        if t <= 0:
            raise ValueError("coincidence probabilities sum to zero")
        return CoincidenceProbs(*(p / t for p in self))


class Observables(NamedTuple):
    S: float
    S_prime: float
    ber_avg: float
    ber_per_setting: tuple


def phi_plus() -> JointState:
    """(|HH> + |VV>)/sqrt(2)."""
    return JointState.from_pure([1.0, 0.0, 0.0, 1.0])


def analyzer_state(phase: float) -> PureQubit:
    """(|H> + e^{i phase}|V>)/sqrt(2)."""
    if not np.isfinite(phase):
        raise ValueError(f"analyzer phase must be finite, got {phase!r}")
    a = np.deg2rad(phase)
    return PureQubit(1.0 / SQRT2, np.exp(1j * a) / SQRT2)


def analyzer_projectors(phase: float) -> tuple[np.ndarray, np.ndarray]:
    """Projectors for the two output ports of an analyzer set to `phase`.

    The first projector belongs to the unprimed detector (1 or 2), the
    second to the primed detector that sees the orthogonal polarization.
    """
    plus = analyzer_state(phase).projector
    return plus, _I2 - plus


def coincidence_probs(state: JointState, alpha: float, beta: float) -> CoincidenceProbs:
    a_plus, a_minus = analyzer_projectors(alpha)
    b_plus, b_minus = analyzer_projectors(beta)
    rho = state.rho

    def p(pa, pb):
        return float(np.trace(np.kron(pa, pb) @ rho).real)

    return CoincidenceProbs(p(a_plus, b_plus), p(a_plus, b_minus), p(a_minus, b_plus), p(a_minus, b_minus))


def correlation_E(probs: CoincidenceProbs) -> float:
    total = probs.total
    if total <= 0:
        raise ValueError("correlation undefined: coincidence probabilities sum to zero")
    return (probs.p_12 + probs.p_1p2p - probs.p_12p - probs.p_1p2) / total


def _bell(state: JointState, terms) -> float:
    return sum(
        sign * correlation_E(coincidence_probs(state, ALICE_ANGLES[i], BOB_ANGLES[j]))
        for sign, i, j in terms
    )


def bell_S(state: JointState) -> float:
    return _bell(state, S_TERMS)


def bell_S_prime(state: JointState) -> float:
    return _bell(state, S_PRIME_TERMS)


def key_error_probs(state: JointState) -> tuple[float, ...]:
    """Coincidence-conditioned error probability for each key setting.

    Ordered as KEY_SETTINGS. On key settings the ideal outcomes are
    anticorrelated (detector pairs 1-2' and 1'-2), so an error is a
    1-2 or 1'-2' coincidence.
    """
    out = []
    for i, j in KEY_SETTINGS:
        p = coincidence_probs(state, ALICE_ANGLES[i], BOB_ANGLES[j]).normalized()
        out.append(p.p_12 + p.p_1p2p)
    return tuple(out)


def poincare_state(point: PoincarePoint) -> PureQubit:
    t = np.deg2rad(point.angle)
    if point.plane is Plane.A:
        return PureQubit(1.0 / SQRT2, np.exp(1j * t) / SQRT2)
    if point.plane is Plane.B:
        return PureQubit(np.cos(t), np.sin(t))
    # (|45> + e^{it}|-45>)/sqrt(2) expanded in H/V
    e = np.exp(1j * t)
    return PureQubit((1 + e) / 2.0, (1 - e) / 2.0)


def _bob_op(op2: np.ndarray) -> np.ndarray:
    return np.kron(_I2, op2)


def filter_channel(state: JointState, chi: PureQubit) -> tuple[JointState, float]:
    """Pass Bob's photon through a polarizer aligned with `chi`.

    Returns the renormalized surviving state and the probability that the
    photon passed.
    """
    k = _bob_op(chi.projector)
    out = k @ state.rho @ k
    pass_prob = float(np.trace(out).real)
    if pass_prob <= 1e-15:
        raise ValueError("filter is orthogonal to the state: pass probability is zero")
    out = out / pass_prob
    return JointState(_hermitize(out)), pass_prob


def dephase_channel(state: JointState, chi: PureQubit) -> JointState:
    """Randomize the relative phase between chi and chi-perp on Bob's photon.

    This is the exact average over a uniformly random phase, i.e. the
    two-projector sandwich, and is trace preserving.
    """
    k1 = _bob_op(chi.projector)
    k2 = _bob_op(chi.perp().projector)
    rho = state.rho
    return JointState(_hermitize(k1 @ rho @ k1 + k2 @ rho @ k2))


def blend(attacked: JointState, clean: JointState, f: float, pass_prob: float = 1.0) -> JointState:
    """Mix an intercepted and an untouched ensemble.

    A fraction `f` of photons goes through the attack. For a lossy attack
    only `f * pass_prob` of them survive, so the mixture is renormalized
    over the coincidences that actually occur.
    """
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"interception fraction must be in [0, 1], got {f!r}")
    if not 0.0 <= pass_prob <= 1.0:
        raise ValueError(f"pass probability must be in [0, 1], got {pass_prob!r}")
    w_att = f * pass_prob
    w_clean = 1.0 - f
    total = w_att + w_clean
    if total <= 0:
        raise ValueError("no photons survive the blended attack")
    rho = (w_att * attacked.rho + w_clean * clean.rho) / total
    return JointState(_hermitize(rho))


def visibility_mix(state: JointState, V: float) -> JointState:
    if not 0.0 <= V <= 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {V!r}")
    return JointState(V * state.rho + (1.0 - V) * np.eye(4) / 4.0)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def attacked_state(state: JointState, attack) -> JointState:
    """Coincidence-conditioned state after `attack` acts on `state`.

    `attack` needs `mode`, `basis` and `fraction` attributes (see
    eavesdrop.AttackSpec); mode is one of "none", "filter", "dephase".
    """
    mode = getattr(attack, "mode", "none") if attack is not None else "none"
    mode = str(getattr(mode, "value", mode)).lower()
    if mode == "none":
        return state
    chi = poincare_state(attack.basis)
    if mode == "dephase":
        return blend(dephase_channel(state, chi), state, attack.fraction)
    if mode == "filter":
        filtered, pass_prob = filter_channel(state, chi)
        return blend(filtered, state, attack.fraction, pass_prob)
    raise ValueError(f"unknown attack mode {mode!r}")


def predicted_observables(attack, V: float = 1.0, state: JointState | None = None) -> Observables:
    """Closed-form S, S', and key bit error rates for an attack on phi+.

    White noise of visibility `V` is applied at the source, before the
    attack.
    """
    base = visibility_mix(phi_plus() if state is None else state, V)
    rho = attacked_state(base, attack)
    per_setting = key_error_probs(rho)
    return Observables(bell_S(rho), bell_S_prime(rho), float(np.mean(per_setting)), per_setting)


def uniform_grid(plane: Plane, n: int) -> np.ndarray:
    """`n` equally spaced attack angles over one period of `plane`."""
    return np.arange(n) * (Plane(plane).period / n)


def random_joint_state(rng: np.random.Generator, rank: int = 4) -> JointState:
    """Random density matrix (Ginibre ensemble of the given rank)."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return JointState(_hermitize(rho / np.trace(rho).real))


def random_qubit(rng: np.random.Generator) -> PureQubit:
    return PureQubit.from_vector(rng.normal(size=2) + 1j * rng.normal(size=2))

