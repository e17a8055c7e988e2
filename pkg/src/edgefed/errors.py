"""Service-wide exception types.

Each error carries a stable machine-readable ``code`` (also used by the HTTP
gateway to pick status codes) and an optional detail mapping.
"""

from __future__ import annotations


class ServiceError(Exception):
    code = "internal"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), **self.details}


class NotFoundError(ServiceError):
    code = "not-found"


class ConflictError(ServiceError):
    code = "conflict"


class InvalidWindowError(ServiceError):
    code = "invalid-window"


class ValidationError(ServiceError):
    code = "invalid"


class ForbiddenError(ServiceError):
    code = "forbidden"


class UnauthorizedError(ServiceError):
    code = "unauthorized"


class PortsExhaustedError(ServiceError):
    code = "port-exhausted"


class ReclaimError(ServiceError):
    code = "reclaim-failed"


class StoreUnavailableError(ServiceError):
    """Retryable: the index store could not be reached."""

    code = "store-unavailable"


class PortInUseError(ServiceError):
    code = "port-in-use"


class NodeDrainingError(ServiceError):
    code = "node-draining"


class NotReadyError(ServiceError):
    code = "pod-not-ready"


class TunnelExpiredError(ServiceError):
    code = "tunnel-expired"


class CapacityError(ServiceError):
    """Provisioning could not complete for lack of node capacity."""

    code = "no-capacity"
