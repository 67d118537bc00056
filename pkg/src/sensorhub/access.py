"""Role-based access control, dual-control approvals, and share grants.

The role -> permission matrix is fixed and deny-by-default: anything not
explicitly granted is refused, including unknown actions and roles. The
four sensitive operations (full purge, re-initialization, ownership
transfer, external share-grant creation) can only run through an approval
request confirmed by a second qualified person.
"""

from __future__ import annotations

import hashlib

import secrets
import threading
from dataclasses import dataclass, field

from .errors import (
    BadCredentials,
    DuplicatePending,
    Expired,
    GrantInactive,
    LockedOut,
    NotApproved,
    NotPending,
    PermissionDenied,
    SelfApproval,
    UnknownPrincipal,
    UnknownResource,
    ValidationError,
)

ROLES = ("owner", "resident", "guest", "system")

ACTIONS = (
    "data.read_raw",
    "data.read_agg",
    "data.delete",
    "device.pair",
    "retention.write",
    "annotation.write",
    "grant.manage",
    "lifecycle.execute",
    "audit.read",
    "approval.approve",
)

# deny-by-default matrix; the ingest path authenticates as `system` and
# holds no management permission at all
ROLE_PERMISSIONS: dict[str, frozenset[str]] = {
    "owner": frozenset(ACTIONS),
    "resident": frozenset(
        {
            "data.read_raw",
            "data.read_agg",
            "data.delete",
            "annotation.write",
            "device.pair",
            "audit.read",
            "approval.approve",
        }
    ),
    "guest": frozenset({"data.read_agg", "annotation.write"}),
    "system": frozenset(),
}

SENSITIVE_OPS = ("full_purge", "reinitialize", "ownership_transfer", "share_grant_create")

# permission a principal must already hold to request / execute the op
OP_BASE_PERMISSION = {
    "full_purge": "data.delete",
    "reinitialize": "lifecycle.execute",
    "ownership_transfer": "lifecycle.execute",
    "share_grant_create": "grant.manage",
}

APPROVAL_TTL_MS = 72 * 3600 * 1000
COOLING_OFF_MS = 48 * 3600 * 1000
SESSION_TTL_MS = 24 * 3600 * 1000
MIN_GRANT_RESOLUTION_MS = 3600 * 1000

LOCKOUT_THRESHOLD = 5
LOCKOUT_MS = 60 * 1000

_PBKDF2_ITERATIONS = 20_000


def hash_secret(secret: str, salt: bytes) -> str:
    return hashlib.pbkdf2_hmac("sha256", secret.encode(), salt, _PBKDF2_ITERATIONS).hex()


@dataclass
class Principal:
    id: str
    display_name: str
    role: str
    secret_hash: str
    salt: str
    legacy_contact: bool = False


@dataclass
class ApprovalRequest:
    id: str
    op: str
    payload: dict
    requested_by: str
    created_at: int
    expires_at: int
    approvals: list[str] = field(default_factory=list)
    state: str = "pending"  # pending | approved | executed | rejected | expired

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "op": self.op,
            "payload": self.payload,
            "requested_by": self.requested_by,
            "created_at": self.created_at,
            "expires_at": self.expires_at,
            "approvals": self.approvals,
            "state": self.state,
        }


@dataclass
class ShareGrant:
    id: str
    grantee: str
    purpose: str
    selector: list[str] | None     # None = all series
    t_from: int
    t_to: int
    max_resolution_ms: int
    expires_at: int
    created_by: str
    created_at: int
    revoked: bool = False

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "grantee": self.grantee,
            "purpose": self.purpose,
            "selector": self.selector,
            "t_from": self.t_from,
            "t_to": self.t_to,
            "max_resolution_ms": self.max_resolution_ms,
            "expires_at": self.expires_at,
            "created_by": self.created_by,
            "created_at": self.created_at,
            "revoked": self.revoked,
        }


@dataclass
class Session:
    token: str
    principal_id: str
    expires_at: int


def check_role(role: str, action: str) -> bool:
    """Pure matrix lookup; unknown role or action denies."""
    return action in ROLE_PERMISSIONS.get(role, frozenset())


class AccessControl:
    """Control-plane state: principals, approvals, grants, sessions.

    Mutations are serialized under one lock; checks read committed state.
    ``audit`` is the hub's append function, ``clock`` returns epoch ms.
    """

    def __init__(self, docstore, audit, clock, cooling_off_enabled: bool = False):
        self._docs = docstore
        self._audit = audit
        self._clock = clock
        self._lock = threading.RLock()
        self.cooling_off_enabled = cooling_off_enabled
        self._principals: dict[str, Principal] = {
            p["id"]: Principal(**p) for p in self._docs.load("principals", [])
        }
        self._requests: dict[str, ApprovalRequest] = {
            r["id"]: ApprovalRequest(**r) for r in self._docs.load("approvals", [])
        }
        self._grants: dict[str, ShareGrant] = {
            g["id"]: ShareGrant(**g) for g in self._docs.load("grants", [])
        }
        self._executors: dict[str, object] = {}
        self._sessions: dict[str, Session] = {}
        self._login_failures: dict[str, list[int]] = {}
        self._lockout_until: dict[str, int] = {}

    # ------------------------------------------------------------------
    # principals

    def bootstrap_needed(self) -> bool:
        return not any(p.role != "system" for p in self._principals.values())

    def add_principal(
        self,
        display_name: str,
        role: str,
        secret: str,
        legacy_contact: bool = False,
    ) -> Principal:
        if role not in ROLES:
            raise ValidationError(f"unknown role {role!r}")
        if role == "system":
            raise ValidationError("system is the ingest path's role, not an account")
        with self._lock:
            if any(p.display_name == display_name for p in self._principals.values()):
                raise ValidationError(f"principal name {display_name!r} already taken")
            if self.bootstrap_needed() and role != "owner":
                raise ValidationError("the first household member must be an owner")
            salt = secrets.token_bytes(16)
            principal = Principal(
                id=secrets.token_hex(8),
                display_name=display_name,
                role=role,
                secret_hash=hash_secret(secret, salt),
                salt=salt.hex(),
                legacy_contact=legacy_contact,
            )
            self._principals[principal.id] = principal
            self._persist_principals()
            return principal

    def get_principal(self, principal_id: str) -> Principal:
        p = self._principals.get(principal_id)
        if p is None:
            raise UnknownPrincipal(f"no principal {principal_id!r}")
        return p

    def find_by_name(self, display_name: str) -> Principal | None:
        for p in self._principals.values():
            if p.display_name == display_name:
                return p
        return None

    def list_principals(self) -> list[Principal]:
        return sorted(self._principals.values(), key=lambda p: p.id)

    def _other_owner_exists(self, principal_id: str) -> bool:
        return any(
            p.role == "owner" and p.id != principal_id for p in self._principals.values()
        )

    def set_role(self, principal_id: str, role: str) -> None:
        if role not in ROLES:
            raise ValidationError(f"unknown role {role!r}")
        with self._lock:
            principal = self.get_principal(principal_id)
            if (
                principal.role == "owner"
                and role != "owner"
                and not self._other_owner_exists(principal_id)
            ):
                raise ValidationError("the household always keeps at least one owner")
            principal.role = role
            self._persist_principals()

    def remove_principal(self, principal_id: str) -> None:
        with self._lock:
            principal = self.get_principal(principal_id)
            if principal.role == "owner" and not self._other_owner_exists(principal_id):
                raise ValidationError("the household always keeps at least one owner")
            del self._principals[principal_id]
            self._persist_principals()

    # ------------------------------------------------------------------
    # permission checks

    def check(self, principal_id: str, action: str) -> bool:
        """Deny-by-default matrix decision; deny is a value, not an error."""
        p = self._principals.get(principal_id)
        if p is None:
            return False
        return check_role(p.role, action)

    def require(self, principal_id: str, action: str) -> Principal:
        if not self.check(principal_id, action):
            raise PermissionDenied(f"{action} denied")
        return self.get_principal(principal_id)

    # ------------------------------------------------------------------
    # sessions and login

    def login(self, display_name: str, secret: str) -> Session:
        now = self._clock()
        with self._lock:
            locked_until = self._lockout_until.get(display_name, 0)
            if now < locked_until:
                raise LockedOut(f"locked out for {(locked_until - now) // 1000}s")
            principal = self.find_by_name(display_name)
            ok = principal is not None and principal.secret_hash == hash_secret(
                secret, bytes.fromhex(principal.salt)
            )
            if not ok:
                failures = self._login_failures.setdefault(display_name, [])
                failures.append(now)
                if len(failures) >= LOCKOUT_THRESHOLD:
                    self._lockout_until[display_name] = now + LOCKOUT_MS
                    self._login_failures[display_name] = []
                    self._audit(
                        "system", "auth_lockout", {"name": display_name, "until": now + LOCKOUT_MS}
                    )
                raise BadCredentials("unknown name or wrong secret")
            self._login_failures.pop(display_name, None)
            session = Session(secrets.token_hex(16), principal.id, now + SESSION_TTL_MS)
            self._sessions[session.token] = session
            return session

    def resolve_session(self, token: str) -> Principal | None:
        with self._lock:
            session = self._sessions.get(token)
            if session is None or self._clock() >= session.expires_at:
                return None
            return self._principals.get(session.principal_id)

    def invalidate_sessions(self) -> None:
        with self._lock:
            self._sessions = {}

    # ------------------------------------------------------------------
    # four-eyes approval workflow

    def register_executor(self, op: str, fn) -> None:
        self._executors[op] = fn

    def request_sensitive(self, op: str, payload: dict, principal_id: str) -> ApprovalRequest:
        if op not in SENSITIVE_OPS:
            raise ValidationError(f"unknown sensitive op {op!r}")
        self.require(principal_id, OP_BASE_PERMISSION[op])
        if op == "share_grant_create":
            self._validate_grant_payload(payload)
        now = self._clock()
        with self._lock:
            self._expire_stale(now)
            for r in self._requests.values():
                if r.state == "pending" and r.op == op and r.payload == payload:
                    raise DuplicatePending(f"request {r.id} already pending for this op")
            request = ApprovalRequest(
                id=secrets.token_hex(8),
                op=op,
                payload=payload,
                requested_by=principal_id,
                created_at=now,
                expires_at=now + APPROVAL_TTL_MS,
            )
            self._requests[request.id] = request
            self._persist_requests()
        self._audit(principal_id, "approval_request", {"request": request.id, "op": op})
        return request

    def get_request(self, request_id: str) -> ApprovalRequest:
        r = self._requests.get(request_id)
        if r is None:
            raise UnknownResource(f"no approval request {request_id!r}")
        return r

    def list_requests(self) -> list[ApprovalRequest]:
        with self._lock:
            self._expire_stale(self._clock())
            return sorted(self._requests.values(), key=lambda r: r.created_at)

    def approve(self, request_id: str, principal_id: str) -> ApprovalRequest:
        now = self._clock()
        with self._lock:
            request = self.get_request(request_id)
            self.require(principal_id, "approval.approve")  # matrix check first
            if request.state == "pending" and now >= request.expires_at:
                request.state = "expired"
                self._persist_requests()
                raise Expired(f"request {request_id} expired")
            if request.state != "pending":
                raise NotPending(f"request is {request.state}")
            if principal_id == request.requested_by:
                raise SelfApproval("requester cannot approve their own request")
            if principal_id not in request.approvals:
                request.approvals.append(principal_id)
            if any(a != request.requested_by for a in request.approvals):
                request.state = "approved"
            self._persist_requests()
        self._audit(principal_id, "approval_approve", {"request": request_id, "state": request.state})
        return request

    def reject(self, request_id: str, principal_id: str) -> ApprovalRequest:
        # every role that can create requests also holds approval.approve,
        # so requiring it never blocks a requester cancelling their own
        with self._lock:
            request = self.get_request(request_id)
            self.require(principal_id, "approval.approve")
            if request.state != "pending":
                raise NotPending(f"request is {request.state}")
            request.state = "rejected"
            self._persist_requests()
        self._audit(principal_id, "approval_reject", {"request": request_id})
        return request

    def execute(self, request_id: str, principal_id: str):
        now = self._clock()
        with self._lock:
            request = self.get_request(request_id)
            self.require(principal_id, OP_BASE_PERMISSION[request.op])
            if request.state == "pending" and self._cooling_off_elapsed(request, now):
                request.state = "approved"  # single-occupant fallback
                self._persist_requests()
            if request.state != "approved":
                raise NotApproved(f"request is {request.state}, not approved")
            executor = self._executors.get(request.op)
            if executor is None:
                raise ValidationError(f"no executor wired for {request.op!r}")
            request.state = "executed"
            self._persist_requests()
        # logged before dispatch: a re-initialization executor resets the
        # audit chain, and the four-eyes completion belongs to the old one
        self._audit(principal_id, "approval_execute", {"request": request_id, "op": request.op})
        try:
            result = executor(request.payload, request)
        except Exception:
            with self._lock:
                request.state = "approved"  # roll back so the op can be retried
                self._persist_requests()
            raise
        return result

    def ready_to_execute(self, request_id: str) -> bool:
        """True when execute() would proceed (approved, or cooling-off met)."""
        with self._lock:
            request = self.get_request(request_id)
            return request.state == "approved" or (
                request.state == "pending" and self._cooling_off_elapsed(request, self._clock())
            )

    def _cooling_off_elapsed(self, request: ApprovalRequest, now: int) -> bool:
        if not self.cooling_off_enabled:
            return False
        humans = [p for p in self._principals.values() if p.role != "system"]
        return len(humans) == 1 and now >= request.created_at + COOLING_OFF_MS

    def _expire_stale(self, now: int) -> None:
        dirty = False
        for r in self._requests.values():
            if r.state == "pending" and now >= r.expires_at:
                r.state = "expired"
                dirty = True
        if dirty:
            self._persist_requests()

    # ------------------------------------------------------------------
    # share grants (created only through the four-eyes workflow)

    @staticmethod
    def _validate_grant_payload(payload: dict) -> None:
        if not (payload.get("purpose") or "").strip():
            raise ValidationError("share grant purpose must be non-empty")
        if int(payload.get("max_resolution_ms", 0)) < MIN_GRANT_RESOLUTION_MS:
            raise ValidationError("share grant resolution must be at least one hour")
        selector = payload.get("selector")
        if selector is not None and not selector:
            raise ValidationError("share grant selector must name at least one series")
        if int(payload.get("t_from", 0)) >= int(payload.get("t_to", 0)):
            raise ValidationError("share grant time range is empty")

    def create_grant_from_payload(self, payload: dict, created_by: str) -> ShareGrant:
        self._validate_grant_payload(payload)
        purpose = payload["purpose"].strip()
        max_res = int(payload["max_resolution_ms"])
        selector = payload.get("selector")
        t_from, t_to = int(payload["t_from"]), int(payload["t_to"])
        now = self._clock()
        grant = ShareGrant(
            id=secrets.token_hex(8),
            grantee=payload.get("grantee", "external party"),
            purpose=purpose,
            selector=sorted(selector) if selector is not None else None,
            t_from=t_from,
            t_to=t_to,
            max_resolution_ms=max_res,
            expires_at=int(payload.get("expires_at", now + 30 * 24 * 3600 * 1000)),
            created_by=created_by,
            created_at=now,
        )
        with self._lock:
            self._grants[grant.id] = grant
            self._persist_grants()
        self._audit(created_by, "grant_create", {"grant": grant.id, "purpose": purpose})
        return grant

    def get_grant(self, grant_id: str) -> ShareGrant:
        g = self._grants.get(grant_id)
        if g is None:
            raise UnknownResource(f"no share grant {grant_id!r}")
        return g

    def active_grant(self, grant_id: str) -> ShareGrant:
        grant = self.get_grant(grant_id)
        if grant.revoked:
            raise GrantInactive("grant was revoked")
        if self._clock() >= grant.expires_at:
            raise GrantInactive("grant expired")
        return grant

    def list_grants(self) -> list[ShareGrant]:
        return sorted(self._grants.values(), key=lambda g: g.created_at)

    def revoke_grant(self, grant_id: str, principal_id: str) -> ShareGrant:
        self.require(principal_id, "grant.manage")
        with self._lock:
            grant = self.get_grant(grant_id)
            grant.revoked = True
            self._persist_grants()
        self._audit(principal_id, "grant_revoke", {"grant": grant_id})
        return grant

    # ------------------------------------------------------------------
    # persistence

    def wipe(self) -> None:
        with self._lock:
            self._principals = {}
            self._requests = {}
            self._grants = {}
            self._sessions = {}
            self._login_failures = {}
            self._lockout_until = {}
            self._persist_principals()
            self._persist_requests()
            self._persist_grants()

    def _persist_principals(self) -> None:
        self._docs.save("principals", [vars(p) for p in self._principals.values()])

    def _persist_requests(self) -> None:
        self._docs.save("approvals", [r.to_doc() for r in self._requests.values()])

    def _persist_grants(self) -> None:
        self._docs.save("grants", [g.to_doc() for g in self._grants.values()])

    def export_acl(self) -> list[dict]:
        return [vars(p) for p in self.list_principals()]

    def restore_acl(self, docs: list[dict]) -> None:
        with self._lock:
            self._principals = {d["id"]: Principal(**d) for d in docs}
            self._persist_principals()
