"""HTTP plumbing shared by the reasoner and remote-critic clients."""

from __future__ import annotations

import time

import httpx


class TransportError(RuntimeError):
    """The remote endpoint was unreachable or returned a non-success status."""


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict,
    *,
    retries: int = 0,
    backoff: float = 0.05,
    headers: dict | None = None,
) -> dict:
    """POST a JSON payload and return the decoded JSON response.

    Retries transport failures and non-2xx statuses `retries` times with a
    short linear backoff, then raises TransportError.
    """
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            response = client.post(url, json=payload, headers=headers)
            if response.status_code >= 400:
                raise TransportError(f"{url} returned HTTP {response.status_code}")
            return response.json()
        except (httpx.HTTPError, TransportError, ValueError) as exc:
            last_error = exc
            if attempt < retries:
                time.sleep(backoff * (attempt + 1))
    raise TransportError(f"request to {url} failed after {retries + 1} attempts: {last_error}")


def get_json(client: httpx.Client, url: str) -> dict:
    try:
        response = client.get(url)
        if response.status_code >= 400:
            raise TransportError(f"{url} returned HTTP {response.status_code}")
        return response.json()
    except httpx.HTTPError as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc
