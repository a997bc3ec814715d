"""Phone-verified registration and session issuance.

Accounts are non-anonymous: a citizen exists only after proving control
of an E.164 phone number via a one-time code sent through the SMS
provider. Codes never appear in any API response; the provider channel is
the only way out. Operator accounts are provisioned administratively and
log in through the same challenge flow.
"""

from __future__ import annotations

import secrets
import threading
import uuid
from dataclasses import dataclass

from .clock import Clock
from .config import ServiceConfig
from .errors import (
    AttemptsExhausted,
    ChallengeExpired,
    CodeMismatch,
    Conflict,
    InvalidPhone,
    NotFound,
    RateLimited,
    Unauthenticated,
)
from .model import Role, UserAccount, from_canon, is_e164, to_canon
from .providers import ProviderSet
from .store import MemoryStore


@dataclass(frozen=True)
class Principal:
    user_id: str
    role: Role


class IdentityService:
    def __init__(self, store: MemoryStore, clock: Clock, providers: ProviderSet,
                 config: ServiceConfig):
        self.store = store
        self.clock = clock
        self.providers = providers
        self.config = config
        # Verification attempts for one challenge must decrement atomically.
        self._verify_lock = threading.Lock()

    # -- registration ---------------------------------------------------

    def begin_registration(self, phone: str) -> str:
        if not is_e164(phone):
            raise InvalidPhone(f"not an E.164 number: {phone!r}")
        now = self.clock.now()
        recent = self.store.list("challenge", where={"phone": phone},
                                 created_from=now - 3600.0)
        if len(recent) >= self.config.otp_challenges_per_hour:
            raise RateLimited(
                f"at most {self.config.otp_challenges_per_hour} verification codes per hour")
        code = "".join(secrets.choice("0123456789")
                       for _ in range(self.config.otp_code_digits))
        challenge_id = uuid.uuid4().hex
        self.store.put("challenge", challenge_id, {
            "kind": "challenge", "id": challenge_id, "phone": phone, "code": code,
            "issued_at": now, "expires_at": now + self.config.otp_ttl_s,
            "attempts_left": self.config.otp_max_attempts, "used": False,
            "created_at": now,
        }, expected_version=0)
        self.providers.sms.send(phone, f"Your e112 verification code is {code}")
        return challenge_id

    def complete_registration(self, challenge_id: str, code: str, display_name: str,
                              push_token: str | None = None) -> dict:
        with self._verify_lock:
            try:
                challenge, version = self.store.get("challenge", challenge_id)
            except NotFound:
                raise NotFound("unknown challenge") from None
            now = self.clock.now()
            if challenge["used"] or challenge["attempts_left"] <= 0:
                raise AttemptsExhausted("verification code no longer usable")
            if now >= challenge["expires_at"]:
                raise ChallengeExpired("verification code expired")
            if code != challenge["code"]:
                challenge["attempts_left"] -= 1
                self.store.put("challenge", challenge_id, challenge, version)
                raise CodeMismatch("wrong verification code")
            challenge["used"] = True
            self.store.put("challenge", challenge_id, challenge, version)

        user = self._upsert_verified_user(challenge["phone"], display_name, push_token)
        return self._issue_session(user)

    def _upsert_verified_user(self, phone: str, display_name: str,
                              push_token: str | None) -> UserAccount:
        # Idempotent per phone: re-registration re-verifies the same account.
        while True:
            existing = self.store.list("user", where={"phone": phone})
            if existing:
                doc, version = existing[0]
                user = from_canon(doc)
                updated = UserAccount(
                    id=user.id, phone=user.phone, verified=True,
                    display_name=display_name or user.display_name, role=user.role,
                    created_at=user.created_at,
                    push_token=push_token or user.push_token,
                    last_location=user.last_location,
                )
                try:
                    self.store.put("user", user.id, to_canon(updated), version)
                except Conflict:
                    continue
            else:
                updated = UserAccount(
                    id=uuid.uuid4().hex, phone=phone, verified=True,
                    display_name=display_name, role=Role.citizen,
                    created_at=self.clock.now(), push_token=push_token,
                )
                try:
                    self.store.put("user", updated.id, to_canon(updated), 0)
                except Conflict:
                    continue
            if updated.push_token and hasattr(self.providers.push, "register"):
                self.providers.push.register(updated.push_token)
            return updated

    def _issue_session(self, user: UserAccount) -> dict:
        now = self.clock.now()
        ttl = (self.config.session_ttl_operator_s if user.role == Role.operator
               else self.config.session_ttl_citizen_s)
        token = secrets.token_urlsafe(32)  # 256 bits
        self.store.put("session", token, {
            "kind": "session", "id": token, "user_id": user.id,
            "role": user.role.value, "issued_at": now, "expires_at": now + ttl,
            "created_at": now,
        }, expected_version=0)
        return {"token": token, "user_id": user.id, "role": user.role.value,
                "expires_at": now + ttl}

    # -- authentication ---------------------------------------------------

    def authenticate(self, token: str | None) -> Principal:
        if not token:
            raise Unauthenticated("missing bearer token")
        try:
            session, _ = self.store.get("session", token)
        except NotFound:
            raise Unauthenticated("unknown session token") from None
        if self.clock.now() >= session["expires_at"]:
            raise Unauthenticated("session expired")
        return Principal(user_id=session["user_id"], role=Role(session["role"]))

    def get_user(self, user_id: str) -> UserAccount:
        doc, _ = self.store.get("user", user_id)
        return from_canon(doc)

    # -- administrative provisioning --------------------------------------

    def provision_operator(self, phone: str, display_name: str) -> UserAccount:
        """Create (or promote) an operator account; login still goes via SMS."""
        if not is_e164(phone):
            raise InvalidPhone(f"not an E.164 number: {phone!r}")
        existing = self.store.list("user", where={"phone": phone})
        if existing:
            doc, version = existing[0]
            user = from_canon(doc)
            promoted = UserAccount(
                id=user.id, phone=user.phone, verified=user.verified,
                display_name=display_name or user.display_name, role=Role.operator,
                created_at=user.created_at, push_token=user.push_token,
                last_location=user.last_location,
            )
            self.store.put("user", user.id, to_canon(promoted), version)
            return promoted
        account = UserAccount(
            id=uuid.uuid4().hex, phone=phone, verified=True,
            display_name=display_name, role=Role.operator,
            created_at=self.clock.now(),
        )
        self.store.put("user", account.id, to_canon(account), 0)
        return account
