"""
Correlations of an entangled polarization pair
===============================================

Coincidence probabilities, correlations and the two Bell parameters for the
phi+ state, and how white noise (finite visibility) shrinks them.
"""

import numpy as np

from ekertqkd import qstate

phi = qstate.phi_plus()

# %%
# Each party has four analyzer phases. A coincidence probability depends
# only on the sum of the two phases.
print("alice phases:", [qstate.ALICE_ANGLES[i] for i in range(1, 5)])
print("bob phases:  ", [qstate.BOB_ANGLES[i] for i in range(1, 5)])

for beta in (0, 45, 90, 135):
    p = qstate.coincidence_probs(phi, 45, beta)
    print(f"alpha=45 beta={beta:3d}  p={np.round(p, 5)}  E={qstate.correlation_E(p):+.5f}")

# %%
# Both Bell combinations sit at the quantum maximum.
print("S  =", qstate.bell_S(phi))
print("S' =", qstate.bell_S_prime(phi))

# %%
# Mixing in noise scales every correlation by V. At the visibility seen in
# the lab the key error rate is (1 - V) / 2.
for v in (1.0, 0.9388, 0.7071, 0.5):
    state = qstate.visibility_mix(phi, v)
    ber = np.mean(qstate.key_error_probs(state))
    print(f"V={v:.4f}  S={qstate.bell_S(state):+.4f}  key BER={ber:.4f}")
