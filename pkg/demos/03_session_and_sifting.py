"""
A simulated session and its sifted key
======================================

Runs forty minutes of collection at the lab visibility, sorts the trials by
announced setting pair, and estimates both Bell parameters.
"""

import numpy as np

from ekertqkd import SessionConfig, classify, estimate_bell, run_session, sift
from ekertqkd.postprocess import ber

# %%
# The sixteen setting pairs split evenly into key, S, S' and discarded trials.
for b in range(1, 5):
    print(f"bob {b}:", " ".join(f"{classify(a, b).value:>7}" for a in range(1, 5)))

# %%
data = run_session(SessionConfig(duration_s=2400, visibility=0.9388), seed=1)
s = sift(data)
print(f"{len(data)} usable trials in {data.elapsed_s:.0f} s")
print(f"key bits {len(s.alice_key)}  S trials {len(s.bell_s)}  S' trials {len(s.bell_s_prime)}  discarded {s.n_discarded}")
print(f"raw key rate {len(s.alice_key) / data.elapsed_s:.2f} bits/s")
print(f"bit error rate {ber(s.alice_key, s.bob_key):.4f}, ones fraction {s.alice_key.mean():.4f}")

bell = estimate_bell(s.bell_s, s.bell_s_prime)
print(f"S  = {bell.S:.3f} +- {bell.S_sigma:.3f}  ({(abs(bell.S) - 2) / bell.S_sigma:.0f} sigma above 2)")
print(f"S' = {bell.S_prime:.3f} +- {bell.S_prime_sigma:.3f}")

# %%
# The log keeps the public announcements and private outcomes, one trial per
# line, and reloads losslessly.
text = data.head(5).to_log()
print("\n".join(line for line in text.splitlines() if not line.startswith("# config")))
