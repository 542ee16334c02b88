"""Exception hierarchy shared by the Brick modules.

Every protocol failure carries a short tag in ``reason`` (``"wrong-phase"``,
``"bad-signature"``...) so callers and tests can branch on it without parsing
messages.
"""

from typing import Optional


class BrickError(Exception):
    """Base class for every error raised by the package."""

    def __init__(self, reason: str, detail: Optional[str] = None):
        self.reason = reason
        self.detail = detail
        message = reason if not detail else f"{reason}: {detail}"
        super().__init__(message)


class EncodingError(BrickError, ValueError):
    """Malformed canonical bytes or out-of-range field."""


class ChannelError(BrickError):
    """Invalid channel state, commitment or announcement construction."""


class ContractError(BrickError):
    """Rejected contract call; the enclosing transaction fails without effect."""


class WardenRejection(BrickError):
    """A warden refused an announcement."""

    def __init__(self, reason: str, detail: Optional[str] = None, stored_seq: int = 0):
        super().__init__(reason, detail)
        self.stored_seq = stored_seq


class PartyError(BrickError):
    """A party-side operation could not proceed."""


class ConfigError(BrickError):
    """Scenario configuration is inconsistent."""


class ReconciliationError(BrickError):
    """Coins do not add up at the end of a run; always a bug."""
