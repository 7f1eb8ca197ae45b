"""
Basic reputation curves: decrease rate vs defect probability
============================================================

One manufacturer sells one unit-price part per transaction, each verified
immediately. Absolute reputation climbs by 1 per clean sale and is divided
by (1 + m) per defect; the normalized score starts at 1.0 and can only
fall. The sweep shows how the decrease rate m and the defect probability p
shape the curve over a million transactions.
"""

from pathlib import Path

from chipchain import run_basic

OUT = Path("out/basic")

curves = run_basic(
    m_values=[0.001, 0.01],
    defect_probs=[1e-5, 1e-4, 1e-3, 1e-2],
    n_txn=1_000_000,
    seed=7,
    out_dir=OUT,
)

print(f"{'m':>8} {'p':>8} {'final r':>14} {'final normalized':>18}")
for (m, p), series in sorted(curves.items()):
    print(f"{m:>8g} {p:>8g} {series.r[-1]:>14.1f} {series.final_normalized():>18.4f}")

print(f"\nwrote {len(curves)} CSVs under {OUT}/ (txn_index, r, normalized)")
print("Reading the table: for a fixed m, a higher defect probability always")
print("lands at a lower final normalized score; a 10x larger m shifts every")
print("curve down by roughly one decade of defect probability.")
