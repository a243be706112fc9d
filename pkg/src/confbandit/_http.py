"""Small HTTP JSON client shared by the live environment and remote embedder."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import requests

from .errors import EnvironmentCallError, FormatError

DEFAULT_TIMEOUT_S = 60.0
DEFAULT_BACKOFF_S = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    api_key: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S
    retries: int = 3
    backoff_s: tuple[float, ...] = field(default=DEFAULT_BACKOFF_S)


def post_json(endpoint: EndpointConfig, payload: dict) -> dict:
    """POST a JSON body; transport failures and 5xx retry with backoff."""
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"
    last_error: Exception | None = None
    for attempt in range(endpoint.retries):
        try:
            resp = requests.post(
                endpoint.url, json=payload, headers=headers, timeout=endpoint.timeout_s
            )
        except requests.RequestException as exc:
            last_error = exc
        else:
            if resp.status_code == 200:
                try:
                    doc = resp.json()
                except ValueError as exc:
                    raise FormatError(f"{endpoint.url} returned non-JSON body") from exc
                if not isinstance(doc, dict):
                    raise FormatError(f"{endpoint.url} returned non-object JSON")
                return doc
            if resp.status_code < 500:
                # Client errors will not heal on retry.
                raise EnvironmentCallError(
                    f"{endpoint.url} returned {resp.status_code}: {resp.text[:200]}"
                )
            last_error = EnvironmentCallError(f"{endpoint.url} returned {resp.status_code}")
        if attempt + 1 < endpoint.retries:
            idx = min(attempt, len(endpoint.backoff_s) - 1)
            time.sleep(endpoint.backoff_s[idx])
    raise EnvironmentCallError(
        f"POST {endpoint.url} failed after {endpoint.retries} attempts: {last_error}"
    )
