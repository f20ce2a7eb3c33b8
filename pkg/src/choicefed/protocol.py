"""Wire protocol: message schema, canonical framing, contract terms and
the encrypted peer-to-peer channel.

Frames are a 4-byte big-endian length prefix followed by canonical UTF-8
JSON with the keys {v, type, sender, nonce, payload} in that fixed order.
Canonical here means: encoding the same message twice yields identical
bytes, so frames are stable for auditing.

A SecureChannel performs an ephemeral X25519 key agreement at handshake
and then AES-GCM-encrypts every frame body.  Per-direction counters double
as both the message nonce (checked strictly consecutive at the receiver)
and the AEAD nonce, so replayed or reordered frames are rejected.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from time import perf_counter
from typing import Callable, Optional, Protocol as TProtocol

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey, X25519PublicKey)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import (ChannelAuthError, FramingError, FrameTooLargeError,
                     HandshakeFailureError, ProtocolError)

PROTOCOL_VERSION = 1
MAX_PAYLOAD_BYTES = 1 << 20      # stand-in for the ledger block-size limit
_LEN_BYTES = 4


class MsgType(str, enum.Enum):
    DOMAIN_ANNOUNCE = "DomainAnnounce"
    DOMAIN_JOIN = "DomainJoin"
    CONNECTION_REQUEST = "ConnectionRequest"
    CONNECTION_ACCEPT = "ConnectionAccept"
    SURVEY_PUBLISH = "SurveyPublish"
    BETA_PROPOSAL = "BetaProposal"
    EVALUATION = "Evaluation"
    MODEL_FINAL = "ModelFinal"


@dataclass(frozen=True)
class ContractTerms:
    """Smart-contract terms exchanged before a channel is opened."""

    temporality_s: float          # max participation window
    idle_only: bool = False       # gates scheduling only, never compatibility
    public_share: bool = True     # node permits publishing its artifacts

    def __post_init__(self):
        if self.temporality_s <= 0:
            raise ValueError("temporality must be positive")

    def to_payload(self) -> dict:
        return {"temporality_s": self.temporality_s,
                "idle_only": self.idle_only,
                "public_share": self.public_share}

    @classmethod
    def from_payload(cls, p: dict) -> "ContractTerms":
        return cls(p["temporality_s"], p["idle_only"], p["public_share"])


def terms_compatible(chief: ContractTerms, worker: ContractTerms,
                     run_estimate_s: float) -> bool:
    """True iff the worker can serve for the estimated run duration and,
    when the chief intends to publish, the worker permits it."""
    if run_estimate_s > worker.temporality_s:
        return False
    if chief.public_share and not worker.public_share:
        return False
    return True


@dataclass(frozen=True)
class Message:
    msg_type: MsgType
    sender: str
    nonce: int
    payload: dict
    version: int = PROTOCOL_VERSION


def encode_body(msg: Message) -> bytes:
    """Canonical JSON body, fixed key order, no whitespace."""
    obj = {"v": msg.version, "type": msg.msg_type.value, "sender": msg.sender,
           "nonce": msg.nonce, "payload": msg.payload}
    body = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_PAYLOAD_BYTES:
        raise FrameTooLargeError(f"payload is {len(body)} bytes")
    return body


def decode_body(body: bytes) -> Message:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"undecodable message body: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != {"v", "type", "sender",
                                                "nonce", "payload"}:
        raise ProtocolError("message body has wrong key set")
    if obj["v"] != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {obj['v']!r}")
    try:
        msg_type = MsgType(obj["type"])
    except ValueError as exc:
        raise ProtocolError(f"unknown message type {obj['type']!r}") from exc
    return Message(msg_type, obj["sender"], obj["nonce"], obj["payload"])


def encode(msg: Message) -> bytes:
    """Length-prefixed frame for one message."""
    body = encode_body(msg)
    return len(body).to_bytes(_LEN_BYTES, "big") + body


def decode(frame: bytes) -> Message:
    if len(frame) < _LEN_BYTES:
        raise FramingError("frame shorter than length prefix")
    declared = int.from_bytes(frame[:_LEN_BYTES], "big")
    if declared != len(frame) - _LEN_BYTES:
        raise FramingError(
            f"length prefix {declared} disagrees with body of "
            f"{len(frame) - _LEN_BYTES} bytes")
    return decode_body(frame[_LEN_BYTES:])


class Endpoint(TProtocol):
    """Transport abstraction: delivers whole frames, in order."""

    def send_frame(self, frame: bytes) -> None: ...
    def recv_frame(self) -> bytes: ...
    def close(self) -> None: ...


class SecureChannel:
    """Duplex message channel over an endpoint.

    Each direction may be driven by a different execution context, but a
    single direction must not be written concurrently.  The optional
    `tap` callable sees the plaintext body of every message sent; it
    exists so tests can prove what does (and does not) transit a channel.
    """

    def __init__(self, endpoint: Endpoint, local_id: str, peer_id: str,
                 key: Optional[bytes], initiator: bool,
                 tap: Optional[Callable[[bytes], None]] = None):
        self._endpoint = endpoint
        self.local_id = local_id
        self.peer_id = peer_id
        self._key = key
        self._aead = AESGCM(key) if key is not None else None
        self._send_dir = b"\x01" if initiator else b"\x02"
        self._recv_dir = b"\x02" if initiator else b"\x01"
        self._send_seq = 0
        self._recv_seq = 0
        self.tap = tap
        self.bytes_sent = 0
        self.bytes_received = 0
        self.max_frame_sent: dict[str, int] = {}
        # when set, receives the transport-arrival-to-deserialized latency
        # of every inbound message
        self.get_latency_sink: Optional[Callable[[float], None]] = None

    @property
    def encrypted(self) -> bool:
        return self._aead is not None

    def _nonce(self, direction: bytes, seq: int) -> bytes:
        return direction + seq.to_bytes(11, "big")

    def send(self, msg_type: MsgType, payload: dict) -> None:
        self._send_seq += 1
        msg = Message(msg_type, self.local_id, self._send_seq, payload)
        body = encode_body(msg)
        if self.tap is not None:
            self.tap(body)
        if self._aead is not None:
            wire = self._aead.encrypt(self._nonce(self._send_dir, self._send_seq),
                                      body, None)
        else:
            wire = body
        frame = len(wire).to_bytes(_LEN_BYTES, "big") + wire
        self._endpoint.send_frame(frame)
        self.bytes_sent += len(frame)
        prev = self.max_frame_sent.get(msg_type.value, 0)
        if len(frame) > prev:
            self.max_frame_sent[msg_type.value] = len(frame)

    def recv(self) -> Message:
        frame = self._endpoint.recv_frame()
        t0 = perf_counter()
        self.bytes_received += len(frame)
        if len(frame) < _LEN_BYTES:
            raise FramingError("frame shorter than length prefix")
        declared = int.from_bytes(frame[:_LEN_BYTES], "big")
        wire = frame[_LEN_BYTES:]
        if declared != len(wire):
            raise FramingError("length prefix disagrees with frame body")
        seq = self._recv_seq + 1
        if self._aead is not None:
            try:
                body = self._aead.decrypt(self._nonce(self._recv_dir, seq),
                                          wire, None)
            except InvalidTag as exc:
                raise ChannelAuthError(
                    "frame failed authentication; dropped") from exc
        else:
            body = wire
        msg = decode_body(body)
        if msg.nonce != seq:
            raise ProtocolError(
                f"nonce {msg.nonce} out of order, expected {seq}")
        if msg.sender != self.peer_id:
            raise ProtocolError(
                f"sender {msg.sender!r} is not the channel peer {self.peer_id!r}")
        self._recv_seq = seq
        if self.get_latency_sink is not None:
            self.get_latency_sink(perf_counter() - t0)
        return msg

    def close(self) -> None:
        self._endpoint.close()


def handshake(endpoint: Endpoint, local_id: str, initiator: bool,
              insecure: bool = False,
              tap: Optional[Callable[[bytes], None]] = None) -> SecureChannel:
    """Ephemeral key agreement over a connected endpoint.

    Both ends exchange a hello frame carrying their node id and a fresh
    X25519 public key; the shared secret is stretched into an AES-256-GCM
    session key.  With `insecure` set, the key exchange is skipped and
    frames travel in plaintext (debugging only).
    """
    priv = None if insecure else X25519PrivateKey.generate()
    hello = {"hs": 1, "node": local_id,
             "pub": None if insecure else priv.public_key().public_bytes_raw().hex()}
    body = json.dumps(hello, separators=(",", ":")).encode("utf-8")
    frame = len(body).to_bytes(_LEN_BYTES, "big") + body

    if initiator:
        endpoint.send_frame(frame)
        peer_frame = endpoint.recv_frame()
    else:
        peer_frame = endpoint.recv_frame()
        endpoint.send_frame(frame)

    try:
        peer = json.loads(peer_frame[_LEN_BYTES:].decode("utf-8"))
        peer_id = peer["node"]
        peer_pub_hex = peer["pub"]
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise HandshakeFailureError(f"malformed hello: {exc}") from exc

    if insecure:
        if peer_pub_hex is not None:
            raise HandshakeFailureError("peer expects an encrypted channel")
        return SecureChannel(endpoint, local_id, peer_id, None, initiator, tap=tap)

    if peer_pub_hex is None:
        raise HandshakeFailureError("peer offered no key material")
    try:
        peer_pub = X25519PublicKey.from_public_bytes(bytes.fromhex(peer_pub_hex))
    except ValueError as exc:
        raise HandshakeFailureError(f"bad peer public key: {exc}") from exc

    shared = priv.exchange(peer_pub)
    key = HKDF(algorithm=hashes.SHA256(), length=32, salt=None,
               info=b"choicefed channel v1").derive(shared)
    return SecureChannel(endpoint, local_id, peer_id, key, initiator, tap=tap)
