"""Exception hierarchy shared by all hub modules.

Every error that crosses a module boundary derives from HubError and
carries a stable machine-readable ``code`` used by the HTTP layer and CLI.
"""

from __future__ import annotations


class HubError(Exception):
    """Base class; ``code`` is stable across releases, message is not."""

    code = "internal"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


class ValidationError(HubError):
    code = "validation"
    http_status = 400


class MalformedFrame(ValidationError):
    code = "malformed_frame"


class UnknownMetric(ValidationError):
    code = "unknown_metric"


class UnitMismatch(ValidationError):
    code = "unit_mismatch"


class ValueOutOfRange(ValidationError):
    code = "value_out_of_range"


class EmptyMetricSet(ValidationError):
    code = "empty_metric_set"


class UnknownDevice(HubError):
    code = "unknown_device"
    http_status = 404


class UnknownSeries(HubError):
    code = "unknown_series"
    http_status = 404


class OutOfOrderTooOld(ValidationError):
    code = "out_of_order_too_old"


class CorruptBlock(HubError):
    code = "corrupt_block"


class PermissionDenied(HubError):
    code = "permission_denied"
    http_status = 403


class EmptySelector(ValidationError):
    code = "empty_selector"


class MalformedPolicy(ValidationError):
    code = "malformed_policy"


class MalformedRange(ValidationError):
    code = "malformed_range"


class ResolutionUnavailable(ValidationError):
    code = "resolution_unavailable"
    http_status = 400


class UnknownPrincipal(HubError):
    code = "unknown_principal"
    http_status = 404


class BadCredentials(HubError):
    code = "bad_credentials"
    http_status = 401


class LockedOut(HubError):
    code = "locked_out"
    http_status = 401


class SelfApproval(HubError):
    code = "self_approval"
    http_status = 409


class Expired(HubError):
    code = "expired"
    http_status = 409


class NotPending(HubError):
    code = "not_pending"
    http_status = 409


class NotApproved(HubError):
    code = "not_approved"
    http_status = 409


class DuplicatePending(HubError):
    code = "duplicate_pending"
    http_status = 409


class GrantInactive(HubError):
    code = "grant_inactive"
    http_status = 409


class UnknownResource(HubError):
    code = "unknown_resource"
    http_status = 404


class ChecksumMismatch(HubError):
    code = "checksum_mismatch"
    http_status = 400


class UnsupportedVersion(HubError):
    code = "unsupported_version"
    http_status = 400


class ChainBroken(HubError):
    code = "chain_broken"

    def __init__(self, seq: int):
        super().__init__(f"audit chain broken at seq {seq}")
        self.seq = seq


class MalformedProfile(ValidationError):
    code = "malformed_profile"


class ConnectionLost(HubError):
    code = "connection_lost"

    def __init__(self, message: str = "", last_sent_ts: int | None = None):
        super().__init__(message or "connection lost")
        self.last_sent_ts = last_sent_ts
