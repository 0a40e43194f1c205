# %% [markdown]
# # A bus channel on a toy ledger
#
# Each bus owns a masked message channel. A publication is a bundle of three
# ledger transactions (one data, two signature) that also names the address
# of the next message, so a reader who holds an address can walk forward but
# never back.

# %%
import random

from tanglesim import mam
from tanglesim.tangle import new_tangle

tangle = new_tangle()
rng = random.Random(7)
key = mam.ChannelKey.from_seed(b"route-42/key")
channel = mam.create_channel(b"bus0042 owner secret", key)

# %% [markdown]
# Publish five position reports. Every transaction picks two tips uniformly at
# random, which is all the ledger model does.

# %%
addresses = []
for i in range(5):
    text = f"bus0042 lat=-22.90{i} lon=-43.20{i}".encode()
    bundle, channel = mam.prepare_bundle(channel, text, publish_time=float(i))
    addresses.append(bundle.address)
    for payload in mam.bundle_tx_payloads(bundle):
        tangle.attach(payload, *tangle.select_tips(rng), float(i))

print(f"{len(tangle)} transactions, {len(tangle.tip_set)} tips")

# %% [markdown]
# A subscriber handed the third address sees messages 2, 3 and 4 only.

# %%
for msg in mam.follow_channel(tangle, addresses[2], key, channel.verify_key):
    print(msg.index, msg.plaintext.decode())

# %% [markdown]
# Rotating the key revokes readers holding the old one for everything
# published afterwards.

# %%
old_key = channel.key
channel = channel.rotate_key(b"2024-06")
bundle, channel = mam.prepare_bundle(channel, b"after rotation")
try:
    mam.decode_bundle(bundle, old_key)
except mam.DecodeError as exc:
    print("old key:", exc)
print("new key:", mam.decode_bundle(bundle, channel.key).plaintext)

# %% [markdown]
# Milestones confirm everything they reference. The first one approves
# genesis; later ones are pinned to their predecessor.

# %%
m = tangle.issue_milestone(60.0, rng)
confirmed = tangle.confirmed_set()
print(f"milestone {m} confirms {len(confirmed)} of {len(tangle)} transactions")
