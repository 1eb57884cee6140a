"""
From raw key to secret key
==========================

Error detection with block parities and bisection, then Toeplitz hashing,
then the bound on what Eve is left with. Ends with how quickly an observer
of the Bell statistic would notice a violation.
"""

import math

import numpy as np

from ekertqkd import SessionConfig, amplify, eve_bound, reconcile, residual_info, run_session, sift
from ekertqkd.postprocess import bell_stream, ber, conservative_ber, detection_time, expected_bell_stream
from ekertqkd.qstate import phi_plus, visibility_mix
from ekertqkd.rng import substream
from ekertqkd.source import SourceParams, throughput

data = run_session(SessionConfig(duration_s=2400, visibility=0.9388), seed=1)
s = sift(data)
n_raw = len(s.alice_key)
measured = ber(s.alice_key, s.bob_key)

# %%
# Eve's share: double pairs plus what her errors allow, with a 3 sigma margin
# on the measured error rate.
bound = eve_bound(conservative_ber(measured, n_raw), 0.007)
eve_bits = math.ceil(bound * n_raw)
print(f"{n_raw} raw bits at BER {measured:.4f}; Eve may know {bound:.3f} of them ({eve_bits} bits)")

# %%
rec = reconcile(s.alice_key, s.bob_key, ber_estimate=measured, rng=substream(1, "reconcile"))
print(f"after error detection: {len(rec.key)} bits, {rec.bits_disclosed} parities, {rec.rounds} rounds")
print("keys identical:", np.array_equal(rec.key, rec.bob_key))

n_final = math.floor(0.7 * len(rec.key))
final = amplify(rec.key, n_final, hash_seed=2024)
r = residual_info(len(rec.key), n_final, eve_bits)
print(f"final key {n_final} bits, sacrificed margin s = {r.s}, residual bound {r.bound:.3g} bits")
print(f"net rate {n_final / data.elapsed_s:.2f} bits/s")

# %%
# Detection time: the first moment the pooled |S| clears sqrt 2 by 2 sigma.
rate = throughput(SourceParams()).usable_rate
state = visibility_mix(phi_plus(), 0.9388)
ideal = detection_time(expected_bell_stream(state, range(1, 2000)), rate)
print(f"noise-free stream: {ideal.time_s:.2f} s")
print(f"this session:      {detection_time(bell_stream(data.head(4000)), rate).time_s:.2f} s")
