import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ekertqkd import qstate
from ekertqkd.eavesdrop import AttackSpec
from ekertqkd.qstate import (
    SQRT2,
    CoincidenceProbs,
    JointState,
    Plane,
    PoincarePoint,
    PureQubit,
    analyzer_projectors,
    bell_S,
    bell_S_prime,
    blend,
    coincidence_probs,
    correlation_E,
    dephase_channel,
    filter_channel,
    phi_plus,
    poincare_state,
    predicted_observables,
    visibility_mix,
)

HH, HV, VH, VV = range(4)
MIXED = JointState.maximally_mixed()


def closed_form(alpha, beta):
    """Closed-form coincidence probabilities for phi+."""
    c = math.cos(math.radians(alpha + beta))
    return ((1 + c) / 4, (1 - c) / 4, (1 - c) / 4, (1 + c) / 4)


def probs_by_amplitudes(rho, alpha, beta):
    """Oracle: spectral decomposition and explicit analyzer kets."""
    w, vecs = np.linalg.eigh(rho)

    def ket(phase, port):
        e = np.exp(1j * math.radians(phase))
        return np.array([1, e]) / SQRT2 if port == 0 else np.array([1, -e]) / SQRT2

    out = []
    for pa in (0, 1):
        for pb in (0, 1):
            k = np.kron(ket(alpha, pa), ket(beta, pb))
            out.append(sum(wi * abs(np.vdot(k, vecs[:, i])) ** 2 for i, wi in enumerate(w)))
    return np.array(out)


def dephase_by_phase_average(rho, chi: PureQubit, n_phases=16):
    """Oracle: average of Bob-side unitaries P_chi + e^{i xi} P_perp over xi."""
    p1 = chi.projector
    p2 = np.eye(2) - p1
    acc = np.zeros((4, 4), dtype=complex)
    for xi in 2 * np.pi * np.arange(n_phases) / n_phases:
        u = np.kron(np.eye(2), p1 + np.exp(1j * xi) * p2)
        acc += u @ rho @ u.conj().T
    return acc / n_phases


qubits = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4).filter(lambda t: sum(x * x for x in t) > 1e-3)
states = st.lists(st.floats(-1, 1, allow_nan=False), min_size=32, max_size=32).filter(
    lambda xs: sum(x * x for x in xs) > 1e-2
)


def to_qubit(t):
    return PureQubit.from_vector([t[0] + 1j * t[1], t[2] + 1j * t[3]])


def to_state(xs):
    g = np.array(xs[:16]).reshape(4, 4) + 1j * np.array(xs[16:]).reshape(4, 4)
    rho = g @ g.conj().T
    rho = rho / np.trace(rho).real
    return JointState(0.5 * (rho + rho.conj().T))


class TestTypes:
    def test_pure_qubit_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            PureQubit(1.0, 1.0)

    def test_joint_state_rejects_bad_matrices(self):
        with pytest.raises(ValueError, match="trace"):
            JointState(np.eye(4))
        with pytest.raises(ValueError, match="Hermitian"):
            JointState(np.diag([0.25] * 4) + np.triu(np.ones((4, 4)), 1) * 0.1)
        with pytest.raises(ValueError, match="negative"):
            JointState(np.diag([0.6, 0.6, -0.1, -0.1]))

    def test_analyzer_phase_angles(self):
        alice = [qstate.AnalyzerPhase("alice", i).angle for i in range(1, 5)]
        bob = [qstate.AnalyzerPhase("bob", i).angle for i in range(1, 5)]
        assert alice == [45, 90, 135, 180]
        assert bob == [0, 45, 90, 135]
        with pytest.raises(ValueError):
            qstate.AnalyzerPhase("bob", 5)


class TestPhiPlus:
    def test_entries(self, phi):
        rho = phi.rho
        assert rho[HH, HH] == pytest.approx(0.5)
        assert rho[HH, VV] == pytest.approx(0.5)
        assert rho[HV, HV] == 0
        np.testing.assert_allclose(np.diag(rho).real, [0.5, 0, 0, 0.5], atol=1e-15)

    def test_trace_and_rank(self, phi):
        assert np.trace(phi.rho).real == pytest.approx(1.0, abs=1e-15)
        assert np.linalg.matrix_rank(phi.rho) == 1

    def test_bell_values(self, phi):
        assert bell_S(phi) == pytest.approx(-2 * SQRT2, abs=1e-12)
        assert bell_S_prime(phi) == pytest.approx(-2 * SQRT2, abs=1e-12)

    def test_mixed_bell_zero(self):
        assert bell_S(MIXED) == pytest.approx(0, abs=1e-15)
        assert bell_S_prime(MIXED) == pytest.approx(0, abs=1e-15)


class TestAnalyzers:
    def test_zero_phase_is_plus_45(self):
        plus, minus = analyzer_projectors(0)
        np.testing.assert_allclose(plus, np.full((2, 2), 0.5), atol=1e-15)

    def test_ninety_is_circular(self):
        plus, _ = analyzer_projectors(90)
        v = np.array([1, 1j]) / SQRT2
        np.testing.assert_allclose(plus, np.outer(v, v.conj()), atol=1e-15)

    @pytest.mark.parametrize("phase", [0, 17.5, 45, 90, 135, 180, 271])
    def test_orthogonal_and_complete(self, phase):
        plus, minus = analyzer_projectors(phase)
        np.testing.assert_allclose(plus @ minus, 0, atol=1e-15)
        np.testing.assert_allclose(plus + minus, np.eye(2), atol=1e-15)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            analyzer_projectors(float("nan"))


class TestCoincidenceProbs:
    def test_key_setting_anticorrelated(self, phi):
        p = coincidence_probs(phi, 45, 135)
        np.testing.assert_allclose(p, [0, 0.5, 0.5, 0], atol=1e-15)

    def test_45_0(self, phi):
        p = coincidence_probs(phi, 45, 0)
        assert p.p_12 == pytest.approx(0.42678, abs=1e-5)
        assert p.p_12p == pytest.approx(0.07322, abs=1e-5)
        np.testing.assert_allclose(p, closed_form(45, 0), atol=1e-15)

    def test_mixed_uniform(self):
        np.testing.assert_allclose(coincidence_probs(MIXED, 33, 71), [0.25] * 4, atol=1e-15)

    def test_closed_form_grid(self, phi):
        grid = np.arange(0, 360, 15)
        for a in grid:
            for b in grid:
                np.testing.assert_allclose(coincidence_probs(phi, a, b), closed_form(a, b), atol=1e-12, rtol=0)

    @settings(max_examples=50, deadline=None)
    @given(states, st.floats(0, 360), st.floats(0, 360))
    def test_matches_amplitude_oracle(self, xs, a, b):
        state = to_state(xs)
        p = coincidence_probs(state, a, b)
        np.testing.assert_allclose(p, probs_by_amplitudes(state.rho, a, b), atol=1e-12)
        assert p.total == pytest.approx(1, abs=1e-12)
        assert min(p) >= -1e-12


class TestCorrelation:
    def test_examples(self, phi):
        assert correlation_E(coincidence_probs(phi, 45, 135)) == pytest.approx(-1, abs=1e-15)
        assert correlation_E(coincidence_probs(phi, 45, 0)) == pytest.approx(0.70711, abs=1e-5)
        assert correlation_E(CoincidenceProbs(0.25, 0.25, 0.25, 0.25)) == 0

    def test_cos_law(self, phi):
        for a in range(0, 360, 30):
            for b in range(0, 360, 30):
                assert correlation_E(coincidence_probs(phi, a, b)) == pytest.approx(
                    math.cos(math.radians(a + b)), abs=1e-12
                )

    def test_zero_denominator(self):
        with pytest.raises(ValueError):
            correlation_E(CoincidenceProbs(0, 0, 0, 0))


class TestPoincare:
    def test_plane_b_zero_is_h(self):
        assert np.allclose(poincare_state(PoincarePoint("B", 0)).vector, [1, 0])

    def test_plane_a_zero_is_plus_45(self):
        assert np.allclose(poincare_state(PoincarePoint("A", 0)).vector, np.array([1, 1]) / SQRT2)

    def test_plane_c_ninety_is_circular(self):
        psi = poincare_state(PoincarePoint("C", 90)).vector
        rho = np.outer(psi, psi.conj())
        pauli = [np.array([[1, 0], [0, -1]]), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]])]
        stokes = [np.trace(rho @ s).real for s in pauli]
        np.testing.assert_allclose(np.abs(stokes), [0, 0, 1], atol=1e-12)
        d, a = np.array([1, 1]) / SQRT2, np.array([1, -1]) / SQRT2
        expected = (d + 1j * a) / SQRT2
        assert abs(np.vdot(expected, psi)) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("plane", list(Plane))
    def test_planes_are_great_circles(self, plane):
        # the three planes are orthogonal: each misses one Stokes axis
        missing = {"A": 0, "B": 2, "C": 1}[plane.value]
        for t in range(0, 360, 20):
            s = poincare_state(PoincarePoint(plane, t)).stokes()
            assert s[missing] == pytest.approx(0, abs=1e-12)
            assert np.linalg.norm(s) == pytest.approx(1, abs=1e-12)


class TestFilter:
    def test_phi_h(self, phi):
        out, p = filter_channel(phi, qstate.H)
        expected = np.zeros((4, 4))
        expected[HH, HH] = 1
        np.testing.assert_allclose(out.rho, expected, atol=1e-15)
        assert p == pytest.approx(0.5)

    def test_pole_filter_kills_correlations(self, phi):
        out, _ = filter_channel(phi, qstate.H)
        for a in (45, 90, 135, 180):
            for b in (0, 45, 90, 135):
                p = coincidence_probs(out, a, b)
                np.testing.assert_allclose(p, [0.25] * 4, atol=1e-15)
                assert correlation_E(p) == pytest.approx(0, abs=1e-15)

    def test_orthogonal_filter_raises(self):
        with pytest.raises(ValueError, match="orthogonal"):
            filter_channel(JointState.product(qstate.H, qstate.H), qstate.V)


class TestDephase:
    def test_in_plane_values(self, phi):
        out = dephase_channel(phi, poincare_state(PoincarePoint("A", 0)))
        assert bell_S(out) == pytest.approx(-SQRT2, abs=1e-12)
        assert np.mean(qstate.key_error_probs(out)) == pytest.approx(0.25, abs=1e-12)

    def test_fixes_own_eigenbasis(self):
        chi = poincare_state(PoincarePoint("C", 40))
        a = PureQubit.from_vector([0.3, 0.7 + 0.2j])
        diag = JointState(
            0.6 * JointState.product(a, chi).rho + 0.4 * JointState.product(a.perp(), chi.perp()).rho
        )
        assert dephase_channel(diag, chi).allclose(diag)

    @settings(max_examples=60, deadline=None)
    @given(states, qubits)
    def test_matches_phase_average_oracle(self, xs, q):
        state, chi = to_state(xs), to_qubit(q)
        np.testing.assert_allclose(dephase_channel(state, chi).rho, dephase_by_phase_average(state.rho, chi), atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(states, qubits, st.floats(0, 360), st.floats(0, 360))
    def test_filter_dephase_identity(self, xs, q, a, b):
        state, chi = to_state(xs), to_qubit(q)
        lhs = np.array(coincidence_probs(dephase_channel(state, chi), a, b))
        rhs = np.zeros(4)
        for basis in (chi, chi.perp()):
            try:
                out, p = filter_channel(state, basis)
            except ValueError:
                continue
            rhs += p * np.array(coincidence_probs(out, a, b))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_in_plane_flatness(self, phi):
        for ang in np.arange(0, 360, 5):
            out = dephase_channel(phi, poincare_state(PoincarePoint("A", ang)))
            assert bell_S(out) == pytest.approx(-SQRT2, abs=1e-12)
            assert np.mean(qstate.key_error_probs(out)) == pytest.approx(0.25, abs=1e-12)

    def test_orthogonal_plane_scaling(self, phi):
        for ang in np.arange(0, 180, 5):
            out = dephase_channel(phi, poincare_state(PoincarePoint("B", ang)))
            assert bell_S(out) == pytest.approx(-SQRT2 * math.sin(math.radians(2 * ang)) ** 2, abs=1e-12)
        for ang in np.arange(0, 360, 5):
            out = dephase_channel(phi, poincare_state(PoincarePoint("C", ang)))
            assert bell_S(out) == pytest.approx(-SQRT2 * math.sin(math.radians(ang)) ** 2, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(states, qubits)
    def test_channels_preserve_invariants(self, xs, q):
        state, chi = to_state(xs), to_qubit(q)
        out = dephase_channel(state, chi)  # constructor re-validates
        assert np.trace(out.rho).real == pytest.approx(1, abs=1e-12)
        assert np.linalg.eigvalsh(out.rho).min() > -1e-10


class TestBlendAndVisibility:
    def test_blend_endpoints(self, phi):
        att = dephase_channel(phi, qstate.H)
        assert blend(att, phi, 0).allclose(phi)
        assert blend(att, phi, 1).allclose(att)

    def test_threshold_fraction(self, phi):
        att = dephase_channel(phi, poincare_state(PoincarePoint("A", 0)))
        f = 2 - SQRT2
        assert f == pytest.approx(0.58579, abs=1e-5)
        assert bell_S(blend(att, phi, f)) == pytest.approx(-2, abs=1e-12)
        assert (1 - f) * 2 * SQRT2 + f * SQRT2 == pytest.approx(2, abs=1e-12)

    @pytest.mark.parametrize("f", [0.0, 0.2, 0.5, 0.9, 1.0])
    def test_blend_affine(self, phi, f):
        att = dephase_channel(phi, poincare_state(PoincarePoint("B", 30)))
        mixed = blend(att, phi, f)
        assert bell_S(mixed) == pytest.approx(f * bell_S(att) + (1 - f) * bell_S(phi), abs=1e-12)
        assert bell_S_prime(mixed) == pytest.approx(f * bell_S_prime(att) + (1 - f) * bell_S_prime(phi), abs=1e-12)

    def test_lossy_blend_weights(self, phi):
        filt, p = filter_channel(phi, qstate.H)
        out = blend(filt, phi, 0.5, p)
        # weights 0.25 and 0.5, renormalized to 1/3 and 2/3
        np.testing.assert_allclose(out.rho, (filt.rho + 2 * phi.rho) / 3, atol=1e-15)

    def test_blend_range(self, phi):
        with pytest.raises(ValueError):
            blend(phi, phi, 1.2)

    def test_visibility(self, phi):
        assert visibility_mix(phi, 1).allclose(phi)
        zero = visibility_mix(phi, 0)
        assert zero.allclose(MIXED)
        assert np.mean(qstate.key_error_probs(zero)) == pytest.approx(0.5)
        v = 0.9388
        mixed = visibility_mix(phi, v)
        assert np.mean(qstate.key_error_probs(mixed)) == pytest.approx((1 - v) / 2, abs=1e-12)
        assert (1 - v) / 2 == pytest.approx(0.0306, abs=1e-4)
        assert bell_S(mixed) == pytest.approx(-2.655, abs=1e-3)
        assert -2.665 - 3 * 0.019 <= bell_S(mixed) <= -2.665 + 3 * 0.019
        with pytest.raises(ValueError):
            visibility_mix(phi, -0.1)


class TestPredictedObservables:
    def test_no_attack(self):
        obs = predicted_observables(AttackSpec(), 1.0)
        assert obs.S == pytest.approx(-2 * SQRT2, abs=1e-12)
        assert obs.S_prime == pytest.approx(-2 * SQRT2, abs=1e-12)
        assert obs.ber_avg == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("angle", [0, 33, 90, 200])
    def test_in_plane_dephase(self, angle):
        obs = predicted_observables(AttackSpec.dephase("A", angle), 1.0)
        assert obs.S == pytest.approx(-SQRT2, abs=1e-12)
        assert obs.ber_avg == pytest.approx(0.25, abs=1e-12)

    def test_filter_at_h(self):
        obs = predicted_observables(AttackSpec.filter("B", 0), 1.0)
        assert obs.S == pytest.approx(0, abs=1e-12)
        assert obs.ber_avg == pytest.approx(0.5, abs=1e-12)

    def test_per_setting_order(self):
        # dephasing at +45 linear (plane A, 0) leaves the beta=0 key setting exact
        obs = predicted_observables(AttackSpec.dephase("A", 0), 1.0)
        np.testing.assert_allclose(
            obs.ber_per_setting, [(1 - math.cos(math.radians(b)) ** 2) / 2 for b in (135, 90, 45, 0)], atol=1e-12
        )


def test_tsirelson_bound():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(10_000):
        s = qstate.random_joint_state(rng, rank=1 + i % 4)
        worst = max(worst, abs(bell_S(s)), abs(bell_S_prime(s)))
    assert worst <= 2 * SQRT2 + 1e-9
