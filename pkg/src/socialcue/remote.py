# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Talk to a remote multimodal model over HTTP and cache its answers.

The wire format is deliberately generic:
request  {"model": ..., "text": ..., "media": [{"kind": ..., "reference": ...}]}
response {"text": ...}
An adapter in front of a concrete vendor API translates from and to it.

Classes: RemoteClient, ResponseCache
"""

import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Any, Dict, Optional

import requests

from .prompts import Prompt
from .util import atomic_write_text

RETRY_STATUS = {429, 500, 502, 503, 504}


class TransportError(Exception):
    """The endpoint did not answer successfully after all retries."""


class RemoteClient:
    """POST prompts to a model endpoint, with retries and a concurrency limit."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout_s: float = 60.0,
        max_retries: int = 3,
        max_concurrent: int = 4,
        api_key_env: Optional[str] = None,
        backoff_s: float = 1.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.api_key_env = api_key_env
        self.session = requests.Session()
        self._slots = threading.BoundedSemaphore(max_concurrent)

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.getenv(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
            else:
                logging.warning("Environment variable %s is not set", self.api_key_env)
        return headers

    def request_body(self, prompt: Prompt) -> Dict[str, Any]:
        return {
            "model": self.model,
            "text": prompt.text,
            "media": [item.to_dict() for item in prompt.media],
        }

    def complete(self, prompt: Prompt) -> str:
        """Send the prompt and return the text of the answer.

        Failed attempts are retried with exponential backoff. A 4xx other
        than 429 fails at once.
        """
        body = self.request_body(prompt)
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_s * 2 ** (attempt - 1)
                logging.debug("Retry %i in %.1f s after: %s", attempt, delay, last_error)
                time.sleep(delay)
            try:
                with self._slots:
                    response = self.session.post(
                        self.endpoint,
                        json=body,
                        headers=self._headers(),
                        timeout=self.timeout_s,
                    )
                if response.status_code in RETRY_STATUS:
                    last_error = TransportError(f"HTTP {response.status_code}")
                    continue
                if 400 <= response.status_code < 500:
                    raise TransportError(
                        f"{self.endpoint} rejected the request: HTTP {response.status_code}"
                    )
                response.raise_for_status()
                text = response.json()["text"]
                if not isinstance(text, str):
                    raise TransportError("Response field text is not a string")
                return text
            except (requests.RequestException, ValueError, KeyError) as error:
                last_error = error
        raise TransportError(
            f"{self.endpoint} failed after {self.max_retries + 1} attempts: {last_error}"
        )


class ResponseCache:
    """One JSON file per cache key holding the raw answer and its request.

    Writes are atomic, so concurrent readers never see partial files.
    """

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[str]:
        path = self.path(key)
        try:
            with open(path, encoding="utf-8") as cache_file:
                entry = json.load(cache_file)
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            logging.warning("Ignoring corrupt cache entry %s", path)
            return None
        logging.debug("Cache hit %s", key)
        return entry["response"]

    def put(self, key: str, response: str, request: Dict[str, Any]):
        entry = {"key": key, "request": request, "response": response}
        atomic_write_text(self.path(key), json.dumps(entry, sort_keys=True, indent=1))
