"""
Penalty propagation across a trust boundary
===========================================

A chiplet fabricated on an untrusted chain crosses into a trusted chain,
is built into an IC, and the IC later fails at the system integrator.
This script shows how the penalty rate propagates along the joined
provenance path: every seller up to and including the buyer who let the
part cross the boundary is penalized at the full rate, and only the
trusted-internal tail enjoys geometric discounting.
"""

from chipchain import (
    Entity,
    Ledger,
    Money,
    ObserverView,
    ReputationEngine,
    ReputationParams,
    Role,
    hash_device_id,
)

ledger = Ledger()
ledger.add_chain("offshore")   # untrusted from the observer's standpoint
ledger.add_chain("onshore")    # the observer's own chain

for eid, role, chain in [
    ("cm", Role.CHIPLET_MANUFACTURER, "offshore"),
    ("cd-off", Role.CHIPLET_DISTRIBUTOR, "offshore"),
    ("cd-on", Role.CHIPLET_DISTRIBUTOR, "onshore"),
    ("icm", Role.IC_MANUFACTURER, "onshore"),
    ("icd", Role.IC_DISTRIBUTOR, "onshore"),
    ("si", Role.SYSTEM_INTEGRATOR, "onshore"),
    ("authority", Role.TRUSTED_AUTHORITY, "onshore"),
]:
    ledger.add_entity(Entity(eid, role, chain))

view = ObserverView("onshore", frozenset({"onshore"}))
params = ReputationParams(decrease_rate=1.0, trusted_discount=2.0)
engine = ledger.attach(ReputationEngine(view, params))

# Move one chiplet down the chain; the offshore-to-onshore hop is recorded
# through a meta-entity that stands for the cross-chain channel.
ledger.register_chiplet_type("cm", "die")
chiplet = hash_device_id("die-001")
ledger.register_devices("cm", "die", [chiplet])
for src, dst, amt in [("cm", "cd-off", 100), ("cd-off", "cd-on", 110), ("cd-on", "icm", 121)]:
    ledger.transfer_chiplets(src, "die", 1, [chiplet], [Money(float(amt))], dst)
    ledger.confirm_transfer(dst, "die", 1, [chiplet])

ledger.register_ic_type("icm", "package")
ic = hash_device_id("pkg-001")
ledger.register_devices("icm", "package", [ic])
ledger.consume_chiplets("icm", [chiplet], ic)
for src, dst, amt in [("icm", "icd", 400), ("icd", "si", 440)]:
    ledger.transfer_ics(src, "package", 1, [ic], [Money(float(amt))], dst)
    ledger.confirm_transfer(dst, "package", 1, [ic])

print("joined provenance of the chiplet:")
for seller, buyer, amount in ledger.provenance(chiplet, joined=True):
    print(f"  {seller:>10} -> {buyer:<10} {amount:8.2f}")

# The integrator reports a failure; the authority traces the defect back to
# the consumed chiplet, so the joined path is penalized.
report_id = ledger.report("si", [ic], 1)
outcome = ledger.adjudicate("authority", report_id, [ic], defect_origins={ic: chiplet})

print("\npenalty trace (entity, rate, divisor):")
for entity, rate, divisor in outcome.traces[0].entries:
    print(f"  {entity:>10}  rate={rate:<6g} divisor={divisor:g}")

print("\nNote: cm, cd-off, the meta-entity, and cd-on all carry the full rate.")
print("cd-on bought across the boundary, so it is treated as offshore here;")
print("only icm and icd, buying trusted-internal, see discounted rates.")

print("\nchain-channel reputation:", engine.chain_reputation("X^offshore_onshore"))
