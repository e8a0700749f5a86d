"""Amplitude-noise robustness of the H1-accelerated scheme.

Each noise channel is switched on alone.  The control schedule is replayed from
the noiseless run, so only the noise term differs between rows.
"""

from rydberg_lyapunov.experiments import simulate

base = {"model.kind": "effective", "mu1": 0.3, "t_f": 700.0}
ref = simulate(base).fidelity[-1]
print(f"noiseless F(700) = {ref:.4f}")
for channel in ("eta1", "eta2", "eta3"):
    for eta in (0.01, 0.1):
        f = simulate({**base, channel: eta}).fidelity[-1]
        print(f"{channel} = {eta:<5} F(700) = {f:.4f}  dF = {f - ref:+.2e}")
