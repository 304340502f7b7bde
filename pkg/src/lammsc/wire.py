"""Shared HTTP client plumbing for the remote MMA / LKB / embedding services.

All services speak JSON over POST and carry the protocol version in the
``X-Protocol-Version`` header. Failures map to a three-way taxonomy:
transport (unreachable/timeout), protocol (malformed message), and remote
(the service reported an error).
"""

from __future__ import annotations

from dataclasses import dataclass

import requests

from .errors import ProtocolError, RemoteServiceError, TransportError

PROTOCOL_VERSION = "lam-msc/1"
VERSION_HEADER = "X-Protocol-Version"


@dataclass
class Endpoint:
    """Base address plus per-call timeout and retry budget."""

    base_url: str
    timeout_ms: int = 5000
    retries: int = 1

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError(f"timeout_ms must be positive, got {self.timeout_ms}")
        if self.retries < 0:
            raise ValueError(f"retries must be non-negative, got {self.retries}")


def post_json(ep: Endpoint, path: str, body: dict) -> dict:
    """POST a JSON body; returns the parsed 200 response or raises typed errors."""
    url = ep.base_url.rstrip("/") + path
    last_exc: Exception | None = None
    for _ in range(ep.retries + 1):
        try:
            resp = requests.post(url, json=body, timeout=ep.timeout_ms / 1000.0,
                                 headers={VERSION_HEADER: PROTOCOL_VERSION})
        except requests.RequestException as exc:
            last_exc = exc
            continue
        if resp.status_code != 200:
            detail = ""
            try:
                payload = resp.json()
                if isinstance(payload, dict):
                    detail = str(payload.get("message") or payload.get("error") or "")
            except ValueError:
                detail = resp.text[:200]
            raise RemoteServiceError(f"{url}: status {resp.status_code}: {detail}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{url}: response is not JSON") from exc
        if not isinstance(payload, dict):
            raise ProtocolError(f"{url}: expected a JSON object response")
        return payload
    raise TransportError(f"{url}: unreachable after {ep.retries + 1} attempts "
                         f"({last_exc})")


def require_field(payload: dict, key: str, url_hint: str):
    if key not in payload:
        raise ProtocolError(f"{url_hint}: response is missing the {key!r} field")
    return payload[key]
