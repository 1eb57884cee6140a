"""Bell statistics and the classical key pipeline.

The pipeline runs: Bell estimation -> BER -> bound on Eve's knowledge ->
parity-based error detection -> Toeplitz privacy amplification -> bound
on Eve's residual information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .qstate import ALICE_ANGLES, BOB_ANGLES, S_PRIME_TERMS, S_TERMS, SQRT2, JointState, coincidence_probs
from .rng import substream


class ReconciliationError(RuntimeError):
    pass


# ---------------------------------------------------------------- Bell tests


@dataclass(frozen=True)
class BellEstimate:
    S: float
    S_sigma: float
    S_prime: float
    S_prime_sigma: float
    E: dict = field(default_factory=dict)
    E_sigma: dict = field(default_factory=dict)
    # (alice_index, bob_index) -> (R_12, R_12', R_1'2, R_1'2')
    counts: dict = field(default_factory=dict)

    @property
    def n_trials(self) -> int:
        return int(sum(sum(c) for c in self.counts.values()))


def bell_counts(trials) -> dict:
    """Tally coincidence counts per (alice_index, bob_index) for a trial set."""
    cell = trials.alice_index.astype(np.int64) * 5 + trials.bob_index
    k = trials.alice_outcome.astype(np.int64) * 2 + trials.bob_outcome
    tally = np.zeros((25, 4), dtype=np.int64)
    np.add.at(tally, (cell, k), 1)
    return {(a, b): tuple(int(x) for x in tally[a * 5 + b]) for a in range(1, 5) for b in range(1, 5) if tally[a * 5 + b].any()}


def correlation_from_counts(r12, r12p, r1p2, r1p2p) -> tuple[float, float]:
    """Correlation E and its standard error, counts treated as Poisson."""
    n = r12 + r12p + r1p2 + r1p2p
    if n <= 0:
        raise ValueError("no coincidences recorded for this setting pair")
    same, diff = r12 + r1p2p, r12p + r1p2
    e = (same - diff) / n
    var = ((1.0 - e) ** 2 * same + (1.0 + e) ** 2 * diff) / n**2
    return e, math.sqrt(var)


def estimate_bell_from_counts(counts: dict) -> BellEstimate:
    E, E_sigma = {}, {}
    for terms in (S_TERMS, S_PRIME_TERMS):
        for _, a, b in terms:
            c = counts.get((a, b))
            if c is None or sum(c) == 0:
                raise ValueError(
                    f"no trials for alice phase {ALICE_ANGLES[a]:g} deg / bob phase {BOB_ANGLES[b]:g} deg "
                    f"(settings {a}, {b})"
                )
            E[(a, b)], E_sigma[(a, b)] = correlation_from_counts(*c)

    def combine(terms):
        value = sum(sign * E[(a, b)] for sign, a, b in terms)
        sigma = math.sqrt(sum(E_sigma[(a, b)] ** 2 for _, a, b in terms))
        return value, sigma

    s, s_sig = combine(S_TERMS)
    sp, sp_sig = combine(S_PRIME_TERMS)
    wanted = {(a, b) for terms in (S_TERMS, S_PRIME_TERMS) for _, a, b in terms}
    return BellEstimate(s, s_sig, sp, sp_sig, E, E_sigma, {k: tuple(v) for k, v in counts.items() if k in wanted})


def estimate_bell(bell_s_trials, bell_s_prime_trials) -> BellEstimate:
    counts = bell_counts(bell_s_trials)
    counts.update(bell_counts(bell_s_prime_trials))
    return estimate_bell_from_counts(counts)


def expected_counts(state: JointState, n_per_setting: float) -> dict:
    """Noise-free counts for every Bell setting pair (no sampling)."""
    out = {}
    for terms in (S_TERMS, S_PRIME_TERMS):
        for _, a, b in terms:
            p = coincidence_probs(state, ALICE_ANGLES[a], BOB_ANGLES[b]).normalized()
            out[(a, b)] = tuple(n_per_setting * x for x in p)
    return out


# ------------------------------------------------------------ error rates


def ber(alice_key, bob_key) -> float:
    a = np.asarray(alice_key, dtype=np.uint8)
    b = np.asarray(bob_key, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"key lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("cannot compute a bit error rate on empty keys")
    return float(np.count_nonzero(a != b) / a.size)


def conservative_ber(measured: float, n_bits: int, k_sigma: float = 3.0) -> float:
    """Measured BER raised by k binomial standard errors."""
    return min(1.0, measured + k_sigma * math.sqrt(measured * (1.0 - measured) / n_bits))


def eve_bound(ber_conservative: float, double_pair_frac: float) -> float:
    """Upper bound on Eve's share of the raw key under intercept-resend.

    Each intercepted bit costs her a 25% error chance at best, giving up to
    (4/sqrt 2)*BER of information on top of the double-pair events.
    """
    for name, v in (("ber_conservative", ber_conservative), ("double_pair_frac", double_pair_frac)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v!r}")
    return min(1.0, double_pair_frac + 4.0 / SQRT2 * ber_conservative)


# ----------------------------------------------------------- error detection


class Reconciliation(NamedTuple):
    key: np.ndarray
    bits_disclosed: int
    rounds: int
    bob_key: np.ndarray
    errors_corrected: int


def _parity(bits) -> int:
    return int(np.bitwise_xor.reduce(bits)) if len(bits) else 0


def bisect_error(alice_block, bob_block) -> tuple[int, int, list[int]]:
    """Locate one error in a block whose parities disagree.

    Returns (error position, parities disclosed, discarded positions). The
    block's own parity counts as the first disclosure; each further halving
    reveals the parity of the left half, and one bit (the last of every
    disclosed range) is marked for discarding.
    """
    a = np.asarray(alice_block, dtype=np.uint8)
    b = np.asarray(bob_block, dtype=np.uint8)
    lo, hi = 0, len(a)
    disclosed, discard = 1, [hi - 1]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        disclosed += 1
        discard.append(mid - 1)
        if _parity(a[lo:mid]) != _parity(b[lo:mid]):
            hi = mid
        else:
            lo = mid
    return lo, disclosed, discard


def default_block_schedule(ber_estimate: float, rounds: int = 4) -> list[int]:
    if not 0.0 < ber_estimate < 0.5:
        raise ValueError(f"block schedule needs a BER estimate in (0, 0.5), got {ber_estimate!r}")
    k1 = math.ceil(0.73 / ber_estimate)
    return [k1 * 2**i for i in range(rounds)]


def _block_round(a, b, k, rng):
    """Permute, compare block parities, fix one error per odd block."""
    perm = rng.permutation(len(a))
    a, b = a[perm], b[perm]
    n = len(a)
    starts = np.arange(0, n, k)
    diff = a ^ b
    odd = np.bitwise_xor.reduceat(diff, starts) if n else np.zeros(0, dtype=np.uint8)
    keep = np.ones(n, dtype=bool)
    disclosed = len(starts)
    keep[np.minimum(starts + k, n) - 1] = False
    fixed = 0
    for blk in np.flatnonzero(odd):
        s = starts[blk]
        e = min(s + k, n)
        pos, d, discard = bisect_error(a[s:e], b[s:e])
        disclosed += d - 1
        keep[s + np.asarray(discard[1:], dtype=np.int64)] = False
        b[s + pos] ^= 1
        fixed += 1
    return a[keep], b[keep], disclosed, fixed


def _subset_checks(a, b, n_checks, rng):
    """Random-subset parity checks; the first one covers the whole key."""
    n = len(a)
    keep = np.ones(n, dtype=bool)
    ok = True
    for i in range(n_checks):
        if n == 0:
            break
        if i == 0:
            idx = np.arange(n)
        else:
            idx = np.flatnonzero(rng.random(n) < 0.5)
            idx = idx[keep[idx]]
            if len(idx) == 0:
                continue
        if _parity(a[idx]) != _parity(b[idx]):
            ok = False
        keep[idx[-1]] = False
    return a[keep], b[keep], int((~keep).sum()), ok


def reconcile(
    alice_key,
    bob_key,
    block_size_schedule: Sequence[int] | None = None,
    rng: np.random.Generator | None = None,
    ber_estimate: float | None = None,
    check_parities: int = 20,
    max_rounds: int = 32,
) -> Reconciliation:
    """Iterated block-parity error detection with bisection.

    Each round shuffles both keys with a shared permutation, compares block
    parities and bisects every mismatched block down to one bit, which Bob
    flips. One bit is discarded per disclosed parity so the disclosed
    parities carry no information about what is left. After the scheduled
    rounds, verification rounds at the last block size repeat until one
    finds no mismatch and a set of random-subset parities (starting with
    the whole-key parity) all agree.
    """
    a = np.asarray(alice_key, dtype=np.uint8).copy()
    b = np.asarray(bob_key, dtype=np.uint8).copy()
    if a.shape != b.shape:
        raise ValueError(f"key lengths differ: {a.size} vs {b.size}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if block_size_schedule is None:
        if ber_estimate is None:
            raise ValueError("give either block_size_schedule or ber_estimate")
        block_size_schedule = default_block_schedule(max(ber_estimate, 1e-4))
    schedule = [int(k) for k in block_size_schedule]
    if not schedule or min(schedule) < 1:
        raise ValueError("block sizes must be positive")

    disclosed = fixed = rounds = 0
    for k in schedule:
        a, b, d, f = _block_round(a, b, k, rng)
        disclosed += d
        fixed += f
        rounds += 1
    while True:
        if rounds >= max_rounds:
            raise ReconciliationError(f"keys still disagree after {rounds} rounds; error rate is far above estimate")
        a, b, d, f = _block_round(a, b, schedule[-1], rng)
        disclosed += d
        fixed += f
        rounds += 1
        if f:
            continue
        a, b, d, ok = _subset_checks(a, b, check_parities, rng)
        disclosed += d
        if ok:
            break
    return Reconciliation(a, disclosed, rounds, b, fixed)


# -------------------------------------------------------- privacy amplification


def toeplitz_seed_bits(n_in: int, n_out: int, hash_seed) -> np.ndarray:
    """Diagonal values of an n_out x n_in Toeplitz matrix (n_in + n_out - 1 bits)."""
    length = n_in + n_out - 1
    if isinstance(hash_seed, (int, np.integer)):
        return substream(int(hash_seed), "toeplitz", n_in, n_out).integers(0, 2, size=length, dtype=np.uint8)
    bits = np.asarray(hash_seed, dtype=np.uint8)
    if bits.shape != (length,):
        raise ValueError(f"explicit Toeplitz seed needs {length} bits, got {bits.size}")
    return bits


def identity_seed(n: int) -> np.ndarray:
    """Seed bits whose n x n Toeplitz matrix is the identity."""
    s = np.zeros(2 * n - 1, dtype=np.uint8)
    s[n - 1] = 1
    return s


def toeplitz_matrix(n_in: int, n_out: int, hash_seed) -> np.ndarray:
    """Dense matrix M[i, j] = s[i - j + n_in - 1]; only for small sizes."""
    s = toeplitz_seed_bits(n_in, n_out, hash_seed)
    i = np.arange(n_out)[:, None]
    j = np.arange(n_in)[None, :]
    return s[i - j + n_in - 1]


def amplify(key, n_final: int, hash_seed) -> np.ndarray:
    """Compress `key` to `n_final` bits with a seeded Toeplitz hash over GF(2)."""
    k = np.asarray(key, dtype=np.uint8)
    n = k.size
    if not 0 <= n_final <= n:
        raise ValueError(f"cannot amplify {n} bits to {n_final}")
    if n_final == 0:
        return np.zeros(0, dtype=np.uint8)
    s = toeplitz_seed_bits(n, n_final, hash_seed)
    conv = fftconvolve(s.astype(float), k.astype(float))
    return (np.rint(conv[n - 1 : n - 1 + n_final]).astype(np.int64) & 1).astype(np.uint8)


class ResidualInfo(NamedTuple):
    s: int
    bound: float


def residual_info(n_ec: int, n_final: int, eve_bits: int) -> ResidualInfo:
    """Bound (in bits) on what Eve knows about the amplified key.

    s = n_ec - n_final - eve_bits extra bits are sacrificed; the bound is
    2^-s / ln 2. Returns an infinite bound when s < 0.
    """
    for name, v in (("n_ec", n_ec), ("n_final", n_final), ("eve_bits", eve_bits)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative, got {v!r}")
    s = int(n_ec) - int(n_final) - int(eve_bits)
    if s < 0:
        return ResidualInfo(s, math.inf)
    return ResidualInfo(s, math.ldexp(1.0, -s) / math.log(2))


# ------------------------------------------------------------- detection time


class StreamPoint(NamedTuple):
    n_trials: int  # usable trials of every class seen so far
    abs_S: float
    sigma: float


class Detection(NamedTuple):
    detected: bool
    time_s: float  # nan when not detected
    margin: float  # |S| - k sigma - threshold at detection, or at the end of the stream


def _combined(bell: BellEstimate) -> tuple[float, float]:
    # S and S' test the same hypothesis on disjoint data; pool them.
    value = 0.5 * (abs(bell.S) + abs(bell.S_prime))
    sigma = 0.5 * math.hypot(bell.S_sigma, bell.S_prime_sigma)
    return value, sigma


def bell_stream(data, checkpoints: Sequence[int] | None = None, step: int = 1) -> list[StreamPoint]:
    """Running pooled |S| estimates as trials accumulate in window order.

    Early on, a setting pair often has all its counts in one agreement
    class, and the per-pair delta-method variance collapses to zero. The
    running sigma therefore uses one pooled correlation magnitude in
    Var(E) = (1 - E^2) / n for every pair: the mean over the eight Bell
    pairs of |same - diff| / (n + 1), which stays below 1. Checkpoints
    before every pair has a trial are skipped.
    """
    from .protocol import CLASS_ORDER, SettingClass

    order = np.argsort(data.window, kind="stable")
    data = data.subset(order)
    n = len(data)
    if checkpoints is None:
        checkpoints = range(step, n + 1, step)
    s_code = CLASS_ORDER.index(SettingClass.BELL_S)
    sp_code = CLASS_ORDER.index(SettingClass.BELL_S_PRIME)
    is_bell = (data.setting_class == s_code) | (data.setting_class == sp_code)
    terms = S_TERMS + S_PRIME_TERMS
    signs = np.array([sign for sign, _, _ in terms], dtype=float)
    cells = np.array([a * 5 + b for _, a, b in terms])
    cell = data.alice_index.astype(np.int64) * 5 + data.bob_index
    outcome = data.alice_outcome.astype(np.int64) * 2 + data.bob_outcome
    slot = np.full(25, -1)
    slot[cells] = np.arange(len(cells))
    rows = np.flatnonzero(is_bell & (slot[cell] >= 0))
    onehot = np.zeros((n, len(cells), 4), dtype=np.int32)
    onehot[rows, slot[cell[rows]], outcome[rows]] = 1
    running = np.cumsum(onehot, axis=0, dtype=np.int32)
    out = []
    for c in checkpoints:
        if c < 1 or c > n:
            continue
        tally = running[c - 1]
        nn = tally.sum(axis=1)
        if (nn == 0).any():
            continue
        E = (tally[:, 0] + tally[:, 3] - tally[:, 1] - tally[:, 2]) / nn
        s = abs(np.dot(signs[:4], E[:4]))
        sp = abs(np.dot(signs[4:], E[4:]))
        e_pool = np.mean(np.abs(E * nn / (nn + 1)))
        sigma = 0.5 * math.sqrt(np.sum((1.0 - e_pool**2) / nn))
        out.append(StreamPoint(int(c), float(0.5 * (s + sp)), sigma))
    return out


def expected_bell_stream(state: JointState, n_trials: Sequence[int]) -> list[StreamPoint]:
    """Noise-free stream: exact correlations with the sigma of N trials.

    Each of the eight Bell setting pairs receives 1/16 of the usable trials.
    """
    # correlations do not depend on N and sigma scales as 1/sqrt(N)
    value, sigma_one = _combined(estimate_bell_from_counts(expected_counts(state, 1.0 / 16.0)))
    return [StreamPoint(int(n), value, sigma_one / math.sqrt(n)) for n in n_trials if n > 0]


def detection_time(
    stream: Sequence[StreamPoint],
    usable_rate: float,
    threshold: float = SQRT2,
    k_sigma: float = 2.0,
) -> Detection:
    """First time the Bell statistic exceeds `threshold` by k sigma."""
    if usable_rate <= 0:
        raise ValueError("usable_rate must be positive")
    margin = float("nan")
    for point in stream:
        margin = float(point.abs_S - k_sigma * point.sigma - threshold)
        if margin > 0:
            return Detection(True, point.n_trials / usable_rate, margin)
    return Detection(False, float("nan"), margin)


# ------------------------------------------------------------------ reporting


@dataclass(frozen=True)
class SessionReport:
    n_raw: int
    ber: float
    eve_bound: float
    n_ec: int
    n_final: int
    residual_s: int
    residual_bound: float
    bell: BellEstimate
    detection_time_s: float
    elapsed_s: float = 0.0
    bits_disclosed: int = 0
    n_trials: int = 0

    def __post_init__(self):
        if not self.n_final <= self.n_ec <= self.n_raw:
            raise ValueError("report requires n_final <= n_ec <= n_raw")
        if self.residual_bound < 0:
            raise ValueError("residual bound must be non-negative")

    @property
    def raw_rate(self) -> float:
        return self.n_raw / self.elapsed_s if self.elapsed_s else float("nan")

    @property
    def net_rate(self) -> float:
        return self.n_final / self.elapsed_s if self.elapsed_s else float("nan")

    def flat(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "bell":
                continue
            v = getattr(self, f.name)
            out[f.name] = int(v) if isinstance(v, (int, np.integer)) else float(v)
        out["S"] = self.bell.S
        out["S_sigma"] = self.bell.S_sigma
        out["S_prime"] = self.bell.S_prime
        out["S_prime_sigma"] = self.bell.S_prime_sigma
        out["raw_rate"] = self.raw_rate
        out["net_rate"] = self.net_rate
        return {k: (v if isinstance(v, int) else float(v)) for k, v in out.items()}

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.flat().items())

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(REPORT_COLUMNS)

    def to_csv_row(self) -> str:
        flat = self.flat()
        return ",".join(f"{flat[c]:.6g}" for c in REPORT_COLUMNS)


REPORT_COLUMNS = (
    "n_trials",
    "elapsed_s",
    "n_raw",
    "ber",
    "eve_bound",
    "bits_disclosed",
    "n_ec",
    "n_final",
    "residual_s",
    "residual_bound",
    "S",
    "S_sigma",
    "S_prime",
    "S_prime_sigma",
    "detection_time_s",
    "raw_rate",
    "net_rate",
)


def parse_report_text(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        k, _, v = line.partition("=")
        out[k] = float(v)
    return out
