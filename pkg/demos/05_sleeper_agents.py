"""
Sleeper agents: reputation offers no shelter for turncoats
==========================================================

Three behavior profiles share one stream of uniform draws per seed: a
benign seller (defect probability 0.001), an always-malicious one (0.0015
or 0.002), and a sleeper that behaves benignly for the first half million
transactions before switching to the malicious level. Because the draws are
shared, the sleeper's trajectory is exactly the benign one until the
switch, which isolates the effect of turning malicious.

The punchline: within a few hundred thousand post-switch transactions the
sleeper converges to the same normalized score as the always-malicious
seller. Reputation banked while behaving has no lasting protective value.
"""

from pathlib import Path

from chipchain import run_attack

switch = 500_000
curves = run_attack(
    benign_p=0.001,
    malicious_ps=[0.0015, 0.002],
    switch_at=switch,
    n_txn=1_000_000,
    seed=7,
    out_dir=Path("out/attack"),
)

print(f"{'behavior':<18} {'norm@switch':>12} {'final norm':>12}")
for label in sorted(curves):
    series = curves[label]
    at_switch = float(series.normalized[series.txn_index <= switch][-1])
    print(f"{label:<18} {at_switch:>12.4f} {series.final_normalized():>12.4f}")

for p in (0.0015, 0.002):
    sleeper = curves[f"sleeper-{p:g}"].final_normalized()
    always = curves[f"malicious-{p:g}"].final_normalized()
    print(f"\nlevel {p}: |sleeper - always-malicious| = {abs(sleeper - always):.5f}")

print("\nwrote one CSV per behavior under out/attack/ (txn_index, behavior, r, normalized)")
