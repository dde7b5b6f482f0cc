"""Shared HTTP plumbing for remote backends.

All remote services speak the same envelope: a JSON object POSTed to a
fixed URL, a JSON object back on HTTP 200. Failures (connection errors,
non-200 statuses, unparseable bodies) are retried with exponential backoff
and reported as RemoteFailureError once the retry budget is spent. A
semaphore bounds concurrent in-flight requests per client.
"""

from __future__ import annotations

import threading
import time

import requests

from .errors import RemoteFailureError

DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 3  # retries after the first attempt, so 4 attempts total


class RemoteClient:
    def __init__(
        self,
        url: str,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = 0.25,
        max_inflight: int = 4,
        session: requests.Session | None = None,
    ):
        if retries < 0:
            raise ValueError("retries must be >= 0")
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.Semaphore(max_inflight)
        self._session = session or requests.Session()

    def post(self, payload: dict) -> dict:
        """POST payload as JSON, returning the decoded response object."""
        last_error = "no attempt made"
        with self._slots:
            for attempt in range(self.retries + 1):
                if attempt > 0 and self.backoff > 0:
                    time.sleep(self.backoff * (2 ** (attempt - 1)))
                try:
                    response = self._session.post(self.url, json=payload, timeout=self.timeout)
                except requests.RequestException as exc:
                    last_error = f"request failed: {exc}"
                    continue
                if response.status_code != 200:
                    last_error = f"HTTP {response.status_code}"
                    continue
                try:
                    body = response.json()
                except ValueError as exc:
                    last_error = f"bad JSON body: {exc}"
                    continue
                if not isinstance(body, dict):
                    last_error = "response body is not an object"
                    continue
                return body
        raise RemoteFailureError(
            f"{self.url}: giving up after {self.retries + 1} attempts ({last_error})"
        )
