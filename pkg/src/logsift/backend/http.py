"""OpenAI-style chat-completions backend over HTTP.

Requests pin temperature to 0 when the model supports it, retry transient
failures (connection errors, 429, 5xx) with exponential backoff, and feed
the response usage numbers into monotone token counters.  The API key is
read from an environment variable; it never appears in configuration
files or logs.
"""

from __future__ import annotations

import logging
import os

import requests

from ..config import HttpBackendConfig
from .base import BackendError, LlmBackend, PromptBundle, TokenCounter
from .prompts import render_prompt

logger = logging.getLogger(__name__)

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class HttpBackend(LlmBackend):
    def __init__(self, config: HttpBackendConfig, sleep=None):
        import time

        self.config = config
        self.tokens = TokenCounter()
        self._sleep = sleep if sleep is not None else time.sleep

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env:
            key = os.environ.get(self.config.auth_env)
            if not key:
                raise BackendError(
                    f"environment variable {self.config.auth_env} is not set; "
                    "the API key is only ever read from the environment"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, bundle: PromptBundle) -> dict:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": render_prompt(bundle)}],
        }
        if self.config.supports_temperature:
            payload["temperature"] = 0
        return payload

    def complete(self, bundle: PromptBundle) -> str:
        headers = self._headers()
        payload = self._payload(bundle)
        attempts = self.config.max_retries + 1
        last_error = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.config.backoff_base_s * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                logger.warning("backend attempt %d failed: %s", attempt + 1, last_error)
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = f"HTTP {response.status_code}"
                logger.warning("backend attempt %d failed: %s", attempt + 1, last_error)
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"backend rejected the request: HTTP {response.status_code}"
                )
            return self._parse(response)
        raise BackendError(
            f"backend unreachable after {attempts} attempt(s): {last_error}"
        )

    def _parse(self, response) -> str:
        try:
            body = response.json()
        except ValueError as exc:
            raise BackendError(f"malformed response body: {exc}")
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("malformed response body: missing choices[0].message")
        if not isinstance(content, str):
            raise BackendError("malformed response body: content is not text")
        usage = body.get("usage") or {}
        try:
            self.tokens.add(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            )
        except (TypeError, ValueError):
            logger.warning("response usage block malformed; token counters unchanged")
        return content
