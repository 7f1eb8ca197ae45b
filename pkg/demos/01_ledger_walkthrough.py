"""
Ledger walkthrough: types, devices, two-phase transfer, verification
====================================================================

A minimal tour of the provenance ledger: a chiplet maker registers a part
type and a device, ships it through a distributor with the two-phase
transfer handshake, and anyone can verify device ids read-only.
"""

from chipchain import Entity, Ledger, Money, Role, hash_device_id

ledger = Ledger()

# One consortium chain with a maker, a distributor, and an IC manufacturer.
ledger.add_chain("acme-consortium")
ledger.add_entity(Entity("fab-1", Role.CHIPLET_MANUFACTURER, "acme-consortium"))
ledger.add_entity(Entity("dist-1", Role.CHIPLET_DISTRIBUTOR, "acme-consortium"))
ledger.add_entity(Entity("assembler-1", Role.IC_MANUFACTURER, "acme-consortium"))

# Only the manufacturer may register its own part types and devices.
ledger.register_chiplet_type("fab-1", "hbm-phy-v1")
device = hash_device_id("wafer-7/die-42")  # raw ids never hit the ledger
ledger.register_devices("fab-1", "hbm-phy-v1", [device])
print("registered:", device[:16], "owner:", ledger.part(device).owner)

# Phase one: the seller initiates. Ownership does NOT move yet.
ledger.transfer_chiplets("fab-1", "hbm-phy-v1", 1, [device], [Money(120.0)], "dist-1")
print("after transfer  :", ledger.part(device).owner, ledger.part(device).status.value)

# Phase two: the named destination confirms receipt. Now ownership moves.
ledger.confirm_transfer("dist-1", "hbm-phy-v1", 1, [device])
print("after confirm   :", ledger.part(device).owner, ledger.part(device).status.value)

# Read-only verification: a known id reports its owner, an unknown id raises
# a suspicious-device flag without writing anything to the ledger.
print("verify known    :", ledger.verify("assembler-1", device))
print("verify unknown  :", ledger.verify("assembler-1", hash_device_id("counterfeit")))
print("suspicious flags:", ledger.suspicious_events)
print("log length      :", ledger.log_length(), "(verification appended nothing)")

# The provenance path lists every confirmed sale in acquisition order.
ledger.transfer_chiplets("dist-1", "hbm-phy-v1", 1, [device], [Money(132.0)], "assembler-1")
ledger.confirm_transfer("assembler-1", "hbm-phy-v1", 1, [device])
print("provenance      :", ledger.provenance(device))
