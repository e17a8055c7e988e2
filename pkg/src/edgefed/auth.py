"""Token authentication against a static user file.

Users live in a YAML document with PBKDF2-salted password hashes (schema in
docs/CONFIG.md; `edgefed hash-password` generates entries). Failed attempts
are throttled with a fixed per-attempt delay on the service clock.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import threading
from dataclasses import dataclass

import yaml

from .errors import ForbiddenError, UnauthorizedError, ValidationError

ROLE_USER = "user"
ROLE_ADMIN = "admin"

PBKDF2_ITERATIONS = 60000


def hash_password(password: str, salt_hex: str | None = None,
                  iterations: int = PBKDF2_ITERATIONS) -> dict:
    salt = bytes.fromhex(salt_hex) if salt_hex else secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return {"salt": salt.hex(), "hash": digest.hex(), "iterations": iterations}


def verify_password(password: str, entry: dict) -> bool:
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"),
        bytes.fromhex(entry["salt"]), int(entry["iterations"]),
    )
    return hmac.compare_digest(digest.hex(), entry["hash"])


@dataclass(frozen=True)
class ApiToken:
    token: str
    user_id: str
    role: str
    expires_at: float

    def to_dict(self) -> dict:
        return {
            "token": self.token,
            "user_id": self.user_id,
            "role": self.role,
            "expires_at": self.expires_at,
        }


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    role: str
    locked: bool
    password: dict


def load_users(source) -> dict[str, UserRecord]:
    if isinstance(source, dict):
        data = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    users = {}
    for doc in data.get("users", []):
        user_id = str(doc["user_id"])
        if user_id in users:
            raise ValidationError(f"duplicate user {user_id!r}")
        role = doc.get("role", ROLE_USER)
        if role not in (ROLE_USER, ROLE_ADMIN):
            raise ValidationError(f"unknown role {role!r} for {user_id!r}")
        users[user_id] = UserRecord(
            user_id=user_id,
            role=role,
            locked=bool(doc.get("locked", False)),
            password=dict(doc["password"]),
        )
    return users


class Authenticator:
    def __init__(self, users: dict[str, UserRecord], clock,
                 ttl_s: float = 8 * 3600.0, throttle_delay_s: float = 1.0):
        self.users = users
        self.clock = clock
        self.ttl_s = ttl_s
        self.throttle_delay_s = throttle_delay_s
        self._tokens: dict[str, ApiToken] = {}
        self._lock = threading.Lock()

    def authenticate(self, user_id: str, password: str) -> ApiToken:
        user = self.users.get(user_id)
        if user is None or not verify_password(password, user.password):
            # Fixed per-attempt delay; sleeps on the service clock so the
            # fake timeline measures it in simulated seconds.
            self.clock.sleep(self.throttle_delay_s)
            raise UnauthorizedError("bad credentials")
        if user.locked:
            raise ForbiddenError(f"user {user_id!r} is locked")
        token = ApiToken(
            token=secrets.token_hex(16),
            user_id=user_id,
            role=user.role,
            expires_at=self.clock.now() + self.ttl_s,
        )
        with self._lock:
            self._tokens[token.token] = token
        return token

    def validate(self, token_str: str | None) -> ApiToken:
        if not token_str:
            raise UnauthorizedError("missing token")
        with self._lock:
            token = self._tokens.get(token_str)
        if token is None:
            raise UnauthorizedError("unknown token")
        if self.clock.now() >= token.expires_at:
            with self._lock:
                self._tokens.pop(token_str, None)
            raise UnauthorizedError("token expired")
        return token

    def revoke(self, token_str: str) -> None:
        with self._lock:
            self._tokens.pop(token_str, None)
