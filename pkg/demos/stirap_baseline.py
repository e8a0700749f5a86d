"""STIRAP reference scheme: pulses and singlet fidelity, written to CSV."""

from pathlib import Path

from rydberg_lyapunov.experiments import run_scenario

out = run_scenario("fig3", out_dir=Path("out"), resolution="full")
tr = out.trajectories["trajectory"]
for t in (50, 100, 150, 200):
    print(f"F({t}/g) = {tr.fidelity_at(t):.4f}")
print("files:", *map(str, out.files), sep="\n  ")
