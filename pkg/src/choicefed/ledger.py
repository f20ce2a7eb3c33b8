"""Tamper-evident append-only transaction log plus a stub identity registry.

The ledger is one canonical-JSON entry per line after a header line that
names the digest algorithm.  Every entry embeds the hash of its
predecessor, so any in-place edit breaks the chain from that point on.
Truncation of the tail is the known blind spot of a bare hash chain and
is documented as such.

Only transaction *metadata* is recorded: sender, receiver, type,
timestamp and a random transaction id.  No payload value (parameters,
likelihood evaluations, observations) is ever written here, and tx ids
are random rather than payload digests precisely so low-entropy payloads
cannot be recovered by enumeration.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import json
import secrets
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import MalformedEntryError, StorageFailureError, UnknownIssuerError

HASH_ALG = "sha256"
GENESIS_HASH = "0" * 64
_HEADER = {"ledger": "choicefed", "version": 1, "hash_alg": HASH_ALG}
_ENTRY_KEYS = ("index", "timestamp", "sender", "receiver", "tx_type",
               "tx_id", "prev_hash", "entry_hash")


class TxType(str, enum.Enum):
    DOMAIN_ANNOUNCE = "DomainAnnounce"
    CHANNEL_OPEN = "ChannelOpen"
    SURVEY_PUBLISH = "SurveyPublish"
    BETA_SENT = "BetaSent"
    EVALUATION_SENT = "EvaluationSent"
    MODEL_PUBLISH = "ModelPublish"


# data-plane transactions eligible for sampling; lifecycle is always recorded
_DATA_TYPES = {TxType.BETA_SENT, TxType.EVALUATION_SENT}


@dataclass(frozen=True)
class LedgerEntry:
    index: int
    timestamp: int            # UTC milliseconds
    sender: str
    receiver: str
    tx_type: TxType
    tx_id: str                # 128-bit random, hex
    prev_hash: str
    entry_hash: str

    def to_json(self) -> str:
        obj = {"index": self.index, "timestamp": self.timestamp,
               "sender": self.sender, "receiver": self.receiver,
               "tx_type": self.tx_type.value, "tx_id": self.tx_id,
               "prev_hash": self.prev_hash, "entry_hash": self.entry_hash}
        return json.dumps(obj, separators=(",", ":"))


def _entry_hash(index: int, timestamp: int, sender: str, receiver: str,
                tx_type: str, tx_id: str, prev_hash: str) -> str:
    obj = {"index": index, "timestamp": timestamp, "sender": sender,
           "receiver": receiver, "tx_type": tx_type, "tx_id": tx_id,
           "prev_hash": prev_hash}
    blob = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class Ledger:
    """Single-writer append-only ledger file.

    `sample` records every Nth data transaction (BetaSent/EvaluationSent);
    lifecycle transactions are always recorded.  Default 1 = record all.
    """

    def __init__(self, path: str | Path, sample: int = 1):
        if sample < 1:
            raise ValueError("sample must be >= 1")
        self.path = Path(path)
        self.sample = sample
        self._last_hash = GENESIS_HASH
        self._next_index = 0
        self._data_tx_seen = 0
        try:
            self._fh = open(self.path, "a", encoding="utf-8")
            if self._fh.tell() == 0:
                self._fh.write(json.dumps(_HEADER, separators=(",", ":")) + "\n")
                self._fh.flush()
            else:
                # resume an existing chain
                header, entries = read_ledger(self.path)
                if entries:
                    self._last_hash = entries[-1].entry_hash
                    self._next_index = entries[-1].index + 1
        except OSError as exc:
            raise StorageFailureError(f"cannot open ledger: {exc}") from exc

    def append(self, sender: str, receiver: str,
               tx_type: TxType) -> Optional[LedgerEntry]:
        """Record one transaction; returns None when sampled out."""
        if tx_type in _DATA_TYPES:
            self._data_tx_seen += 1
            if (self._data_tx_seen - 1) % self.sample != 0:
                return None
        index = self._next_index
        timestamp = int(time.time() * 1000)
        tx_id = secrets.token_hex(16)
        prev = self._last_hash
        digest = _entry_hash(index, timestamp, sender, receiver,
                             tx_type.value, tx_id, prev)
        entry = LedgerEntry(index, timestamp, sender, receiver, tx_type,
                            tx_id, prev, digest)
        try:
            self._fh.write(entry.to_json() + "\n")
            self._fh.flush()
        except OSError as exc:
            raise StorageFailureError(f"ledger write failed: {exc}") from exc
        self._last_hash = digest
        self._next_index = index + 1
        return entry

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_ledger(path: str | Path) -> tuple[dict, list[LedgerEntry]]:
    """Parse header + entries; raises MalformedEntryError on bad lines.

    Lines are split strictly on newline and every entry must round-trip
    to its canonical encoding, so even whitespace-only byte flips (which
    a lenient JSON parser would absorb) are rejected.
    """
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedEntryError("empty ledger file")
    if lines[0] != json.dumps(_HEADER, separators=(",", ":")):
        raise MalformedEntryError("unrecognized ledger header")
    header = json.loads(lines[0])
    entries = []
    for i, line in enumerate(lines[1:], start=1):
        try:
            obj = json.loads(line)
            if set(obj) != set(_ENTRY_KEYS):
                raise ValueError("wrong key set")
            entry = LedgerEntry(
                obj["index"], obj["timestamp"], obj["sender"], obj["receiver"],
                TxType(obj["tx_type"]), obj["tx_id"], obj["prev_hash"],
                obj["entry_hash"])
            if entry.to_json() != line:
                raise ValueError("non-canonical entry encoding")
            entries.append(entry)
        except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
            raise MalformedEntryError(f"bad entry at line {i}: {exc}") from exc
    return header, entries


def verify_chain(path: str | Path) -> tuple[bool, Optional[int]]:
    """Check every hash link; returns (valid, first_bad_index)."""
    _, entries = read_ledger(path)
    prev = GENESIS_HASH
    for pos, e in enumerate(entries):
        expected = _entry_hash(e.index, e.timestamp, e.sender, e.receiver,
                               e.tx_type.value, e.tx_id, e.prev_hash)
        if e.prev_hash != prev or e.entry_hash != expected:
            return False, pos
        prev = e.entry_hash
    return True, None


def counts_by_type(path: str | Path) -> dict[str, int]:
    _, entries = read_ledger(path)
    out: dict[str, int] = {}
    for e in entries:
        out[e.tx_type.value] = out.get(e.tx_type.value, 0) + 1
    return out


def parties(path: str | Path) -> set[str]:
    _, entries = read_ledger(path)
    ids: set[str] = set()
    for e in entries:
        ids.add(e.sender)
        ids.add(e.receiver)
    return ids


# --- identity claims (stub registry standing in for external issuers) ---

@dataclass(frozen=True)
class IdentityClaim:
    node_id: str
    attribute: str
    issuer_id: str
    token: str


class IdentityRegistry:
    """Local attestation issuer: HMAC over (node, attribute) with a
    per-issuer secret.  Verification is a strict recomputation, so a
    token presented by any other node fails."""

    def __init__(self):
        self._issuers: dict[str, bytes] = {}

    def register_issuer(self, issuer_id: str) -> None:
        if issuer_id not in self._issuers:
            self._issuers[issuer_id] = secrets.token_bytes(32)

    def issue(self, issuer_id: str, node_id: str, attribute: str) -> IdentityClaim:
        secret = self._issuers.get(issuer_id)
        if secret is None:
            raise UnknownIssuerError(issuer_id)
        token = hmac.new(secret, f"{node_id}|{attribute}".encode(),
                         hashlib.sha256).hexdigest()
        return IdentityClaim(node_id, attribute, issuer_id, token)

    def verify_claim(self, claim: IdentityClaim) -> bool:
        secret = self._issuers.get(claim.issuer_id)
        if secret is None:
            raise UnknownIssuerError(claim.issuer_id)
        expected = hmac.new(secret, f"{claim.node_id}|{claim.attribute}".encode(),
                            hashlib.sha256).hexdigest()
        return hmac.compare_digest(expected, claim.token)
