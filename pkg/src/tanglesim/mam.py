"""Masked authenticated messaging over the Tangle.

A channel is a forward-linked chain of bundles. Each bundle is three ledger
transactions: one carrying the masked message, two carrying the owner's
authentication tag and the link to the next address. Addresses are one-way
derivations, so a subscriber handed address ``k`` can walk forward but never
back.

Masking is ChaCha20-Poly1305 keyed by the channel key. Owner authentication is
an HMAC-SHA256 tag under a key derived from the owner secret; verifying it needs
that derived ``verify_key``.
"""

import hashlib
import hmac
import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

SIG_FORMAT_VERSION = 1
TX_MAGIC = b"M"
ADDRESS_LEN = 32
KEY_LEN = 32
_ENVELOPE = struct.Struct(">Qd")
_TX_HEADER = struct.Struct(">c32s8sB")


class MamError(Exception):
    pass


class MalformedBundle(MamError):
    """The bundle does not have the 1 data + 2 signature transaction layout."""


class DecodeError(MamError):
    """Unmasking failed: wrong channel key or tampered payload."""


class AuthenticationError(MamError):
    """The owner tag does not verify under the supplied verify key."""


def _h(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


@dataclass(frozen=True)
class ChannelKey:
    value: bytes

    def __post_init__(self):
        if len(self.value) != KEY_LEN:
            raise ValueError(f"channel key must be {KEY_LEN} bytes")

    @classmethod
    def from_seed(cls, seed: bytes) -> "ChannelKey":
        return cls(_h(b"mam/key", seed))

    def rotate(self, salt: bytes = b"") -> "ChannelKey":
        return ChannelKey(_h(b"mam/rotate", self.value, salt))


@dataclass(frozen=True)
class MamBundle:
    address: bytes
    data_tx_payload: bytes
    signature_tx_payloads: tuple
    next_address: bytes

    @property
    def payloads(self) -> list:
        return [self.data_tx_payload, *self.signature_tx_payloads]


@dataclass(frozen=True)
class MamMessage:
    plaintext: bytes
    index: int
    publish_time: float
    address: bytes = b""


@dataclass(frozen=True)
class MamChannel:
    owner_secret: bytes
    current_address: bytes
    key: ChannelKey
    message_index: int = 0

    @property
    def verify_key(self) -> bytes:
        return owner_auth_key(self.owner_secret)

    @property
    def start_address(self) -> bytes:
        return root_address(self.owner_secret)

    def rotate_key(self, salt: bytes = b"") -> "MamChannel":
        return replace(self, key=self.key.rotate(salt + self.message_index.to_bytes(8, "big")))


def owner_auth_key(owner_secret: bytes) -> bytes:
    return _h(b"mam/auth", owner_secret)


def root_address(owner_secret: bytes) -> bytes:
    return _h(b"mam/root", _h(owner_secret))


def next_address(address: bytes, masked: bytes) -> bytes:
    return _h(b"mam/next", address, _h(masked))


def create_channel(owner_secret: bytes, key: ChannelKey) -> MamChannel:
    if not owner_secret:
        raise ValueError("owner secret must be non-empty")
    return MamChannel(bytes(owner_secret), root_address(owner_secret), key, 0)


_aead_cache: dict = {}


def _aead(key: ChannelKey) -> ChaCha20Poly1305:
    aead = _aead_cache.get(key.value)
    if aead is None:
        if len(_aead_cache) > 4096:
            _aead_cache.clear()
        aead = _aead_cache[key.value] = ChaCha20Poly1305(key.value)
    return aead


def _tag(auth_key: bytes, address: bytes, nxt: bytes, masked: bytes) -> bytes:
    return hmac.new(auth_key, address + nxt + masked, hashlib.sha256).digest()


def prepare_bundle(channel: MamChannel, plaintext: bytes, publish_time: float = 0.0):
    """Mask ``plaintext`` for the channel's current address.

    Returns the bundle and the advanced channel state.
    """
    address = channel.current_address
    envelope = _ENVELOPE.pack(channel.message_index, float(publish_time)) + bytes(plaintext)
    masked = _aead(channel.key).encrypt(address[:12], envelope, address)
    nxt = next_address(address, masked)
    tag = _tag(owner_auth_key(channel.owner_secret), address, nxt, masked)
    head = bytes((SIG_FORMAT_VERSION,))
    sig = (head + b"\x01" + nxt + tag[:16], head + b"\x02" + tag[16:])
    bundle = MamBundle(address, masked, sig, nxt)
    return bundle, replace(channel, current_address=nxt, message_index=channel.message_index + 1)


def parse_bundle(payloads: Sequence[bytes], address: bytes) -> MamBundle:
    """Rebuild a bundle from its three raw transaction bodies."""
    if len(payloads) != 3:
        raise MalformedBundle(f"expected 3 transactions, got {len(payloads)}")
    data, s1, s2 = payloads
    if len(s1) != 2 + ADDRESS_LEN + 16 or len(s2) != 2 + 16:
        raise MalformedBundle("signature transactions have the wrong length")
    if s1[0] != SIG_FORMAT_VERSION or s2[0] != SIG_FORMAT_VERSION or s1[1] != 1 or s2[1] != 2:
        raise MalformedBundle("unknown signature layout")
    return MamBundle(address, data, (s1, s2), s1[2 : 2 + ADDRESS_LEN])


def _split_signature(bundle: MamBundle):
    sigs = bundle.signature_tx_payloads
    if len(sigs) != 2:
        raise MalformedBundle(f"expected 3 transactions, got {1 + len(sigs)}")
    parse_bundle([bundle.data_tx_payload, *sigs], bundle.address)
    s1, s2 = sigs
    return s1[2 : 2 + ADDRESS_LEN], s1[2 + ADDRESS_LEN :] + s2[2:]


def verify_bundle(bundle: MamBundle, verify_key: bytes) -> bool:
    nxt, tag = _split_signature(bundle)
    if nxt != bundle.next_address or nxt != next_address(bundle.address, bundle.data_tx_payload):
        return False
    expected = _tag(verify_key, bundle.address, nxt, bundle.data_tx_payload)
    return hmac.compare_digest(tag, expected)


def decode_bundle(bundle: MamBundle, key: ChannelKey, verify_key: Optional[bytes] = None) -> MamMessage:
    """Unmask a bundle; with ``verify_key`` the owner tag is checked too."""
    _split_signature(bundle)
    if verify_key is not None and not verify_bundle(bundle, verify_key):
        raise AuthenticationError("owner tag mismatch")
    try:
        envelope = _aead(key).decrypt(bundle.address[:12], bundle.data_tx_payload, bundle.address)
    except InvalidTag:
        raise DecodeError("cannot unmask bundle with this key") from None
    index, t = _ENVELOPE.unpack_from(envelope)
    return MamMessage(envelope[_ENVELOPE.size :], index, t, bundle.address)


# Ledger encoding: each of the 3 transactions is tagged with the bundle address,
# a short bundle digest and its position so bundles can be regrouped on read.


def bundle_tx_payloads(bundle: MamBundle) -> list:
    digest = _h(*bundle.payloads)[:8]
    return [
        _TX_HEADER.pack(TX_MAGIC, bundle.address, digest, pos) + body
        for pos, body in enumerate(bundle.payloads)
    ]


def bundles_in_ledger(tangle) -> dict:
    """Group MAM transactions in ``tangle`` into bundles, keyed by address.

    Values are lists of bundles in ledger order (several owners can target
    one address; incomplete bundles are skipped).
    """
    parts: dict = {}
    order = []
    for tx in tangle.transactions.values():
        p = tx.payload
        if len(p) < _TX_HEADER.size or p[:1] != TX_MAGIC:
            continue
        _, address, digest, pos = _TX_HEADER.unpack_from(p)
        k = (address, digest)
        if k not in parts:
            parts[k] = {}
            order.append(k)
        parts[k][pos] = p[_TX_HEADER.size :]
    out: dict = {}
    for address, digest in order:
        got = parts[(address, digest)]
        if sorted(got) != [0, 1, 2]:
            continue
        try:
            bundle = parse_bundle([got[0], got[1], got[2]], address)
        except MalformedBundle:
            continue
        out.setdefault(address, []).append(bundle)
    return out


def follow_channel(ledger, start_address: bytes, key: ChannelKey, verify_key=None) -> list:
    """Messages from ``start_address`` onward, following next-address links."""
    index = bundles_in_ledger(ledger)
    messages = []
    address = start_address
    seen = set()
    while address in index and address not in seen:
        seen.add(address)
        msg = None
        for bundle in index[address]:
            try:
                msg = decode_bundle(bundle, key, verify_key)
            except MamError:
                continue
            address = bundle.next_address
            break
        if msg is None:
            break
        messages.append(msg)
    return messages
