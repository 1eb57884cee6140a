"""Simulation and analysis of the entangled-photon (Ekert) QKD protocol."""

from .eavesdrop import AttackMode, AttackSpec, eve_information, intercept, plane_average, sweep
from .postprocess import (
    BellEstimate,
    SessionReport,
    amplify,
    ber,
    detection_time,
    estimate_bell,
    eve_bound,
    reconcile,
    residual_info,
)
from .protocol import SessionConfig, SessionData, SettingClass, classify, outcome_to_bit, run_session, sift
from .qstate import (
    JointState,
    Plane,
    PoincarePoint,
    PureQubit,
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
from .source import SourceParams, simulate_window, throughput, window_statistics

__version__ = "0.1.0"
