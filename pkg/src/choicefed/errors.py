"""Exception hierarchy shared across the package."""


class ChoicefedError(Exception):
    """Base class for all package errors."""


# --- model ---

class EmptyDatasetError(ChoicefedError):
    """An operation requiring observations was given none."""


class SingularInformationError(ChoicefedError):
    """The observed information matrix is not invertible."""


# --- protocol / channel ---

class FrameTooLargeError(ChoicefedError):
    """Encoded payload exceeds the maximum frame size."""


class FramingError(ChoicefedError):
    """A byte frame is malformed (bad length prefix, truncated body)."""


class ProtocolError(ChoicefedError):
    """A message violates the protocol contract (bad version, nonce gap)."""


class HandshakeFailureError(ChoicefedError):
    """Key exchange could not be completed."""


class TermsRejectedError(ChoicefedError):
    """Smart-contract terms of the two parties contradict each other."""


class ChannelClosedError(ChoicefedError):
    """The peer endpoint is gone."""


class ChannelAuthError(ChoicefedError):
    """Frame failed authentication; it was dropped, not delivered."""


# --- ledger ---

class StorageFailureError(ChoicefedError):
    """The ledger file could not be written."""


class MalformedEntryError(ChoicefedError):
    """A ledger line could not be parsed."""


class UnknownIssuerError(ChoicefedError):
    """Identity claim names an issuer the registry has never seen."""


# --- runtime ---

class WorkerTimeoutError(ChoicefedError):
    """A worker did not reply within the round deadline."""

    def __init__(self, round_no: int, worker_id: str):
        super().__init__(f"worker {worker_id!r} timed out at round {round_no}")
        self.round_no = round_no
        self.worker_id = worker_id


class RoundMismatchError(ChoicefedError):
    """An evaluation reply is tagged with the wrong round number."""


class EvaluatorFailure(ChoicefedError):
    """The likelihood evaluator raised; carries the round it happened at."""

    def __init__(self, round_no: int, cause: BaseException | None = None):
        super().__init__(f"evaluator failed at round {round_no}: {cause}")
        self.round_no = round_no


# --- data / config ---

class SizeMismatchError(ChoicefedError):
    """Partition sizes do not sum to the dataset length."""


class ConfigError(ChoicefedError):
    """Bad experiment configuration."""
