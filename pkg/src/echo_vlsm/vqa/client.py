"""VQA client boundary: (image bytes + question string) -> answer string.

Three interchangeable implementations: a deterministic stub for tests, an
HTTP adapter, and a subprocess adapter.  All are thread-safe for concurrent
``ask`` calls up to the resolver's in-flight limit.
"""

from __future__ import annotations

import base64
import io
import json
import subprocess
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from ..errors import ConfigError, VqaError

SHAPE_QUESTION_TEMPLATE = "What is the shape of the {structure} in the green box?"


def shape_question(structure: str) -> str:
    return SHAPE_QUESTION_TEMPLATE.format(structure=structure)


@dataclass
class VqaClientSpec:
    """Configuration of the external VQA inference process."""

    kind: str = "stub"
    endpoint: str | None = None
    command: list[str] | None = None
    timeout: float = 30.0
    retries: int = 2
    stub_answers: dict[str, str] = field(default_factory=dict)
    stub_default: str = "oval"

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError(f"VQA timeout must be positive, got {self.timeout}")
        if self.retries < 0:
            raise ConfigError(f"VQA retry count must be >= 0, got {self.retries}")
        if self.kind not in ("stub", "http", "subprocess"):
            raise ConfigError(f"unknown VQA client kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError("http VQA client requires an endpoint")
        if self.kind == "subprocess" and not self.command:
            raise ConfigError("subprocess VQA client requires a command")

    @classmethod
    def from_dict(cls, obj: dict) -> "VqaClientSpec":
        known = {k: obj[k] for k in (
            "kind", "endpoint", "command", "timeout", "retries",
            "stub_answers", "stub_default",
        ) if k in obj}
        unknown = set(obj) - set(known)
        if unknown:
            raise ConfigError(f"unknown VQA client options: {sorted(unknown)}")
        return cls(**known)


class StubVqaClient:
    """Deterministic client: answers keyed by question substring, with a default."""

    def __init__(self, answers: dict[str, str] | None = None, default: str = "oval"):
        self.answers = dict(answers or {})
        self.default = default
        self.call_count = 0
        self.call_log: list[str] = []
        self._lock = threading.Lock()

    def ask(self, image_bytes: bytes, question: str) -> str:
        with self._lock:
            self.call_count += 1
            self.call_log.append(question)
        for key, answer in sorted(self.answers.items()):
            if key in question:
                return answer
        return self.default


class HttpVqaClient:
    """POSTs {"question", "image_b64"} as JSON and expects {"answer"} back."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def ask(self, image_bytes: bytes, question: str) -> str:
        payload = json.dumps({
            "question": question,
            "image_b64": base64.b64encode(image_bytes).decode("ascii"),
        }).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError, ValueError) as exc:
            raise VqaError(f"VQA endpoint {self.endpoint}: {exc}") from exc
        if "answer" not in body:
            raise VqaError(f"VQA endpoint {self.endpoint}: response missing 'answer'")
        return str(body["answer"])


class SubprocessVqaClient:
    """Runs a command per query, passing the JSON payload on stdin."""

    def __init__(self, command: list[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout

    def ask(self, image_bytes: bytes, question: str) -> str:
        payload = json.dumps({
            "question": question,
            "image_b64": base64.b64encode(image_bytes).decode("ascii"),
        })
        try:
            proc = subprocess.run(
                self.command,
                input=payload.encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
                check=True,
            )
            body = json.loads(proc.stdout.decode("utf-8"))
        except (subprocess.SubprocessError, OSError, json.JSONDecodeError, ValueError) as exc:
            raise VqaError(f"VQA command {self.command!r}: {exc}") from exc
        if "answer" not in body:
            raise VqaError(f"VQA command {self.command!r}: response missing 'answer'")
        return str(body["answer"])


def build_client(spec: VqaClientSpec):
    if spec.kind == "stub":
        return StubVqaClient(spec.stub_answers, spec.stub_default)
    if spec.kind == "http":
        return HttpVqaClient(spec.endpoint, spec.timeout)
    return SubprocessVqaClient(spec.command, spec.timeout)


def encode_image_png(image: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(image).save(buffer, format="PNG")
    return buffer.getvalue()


def query_shape(
    client,
    boxed_image: np.ndarray,
    structure: str,
    *,
    sample_key: str = "<unknown>",
    retries: int = 2,
    retry_delay: float = 0.1,
) -> str:
    """Ask the client for the structure's shape, retrying transient failures."""
    question = shape_question(structure)
    image_bytes = encode_image_png(boxed_image)
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            return client.ask(image_bytes, question)
        except VqaError as exc:
            last_error = exc
            if attempt < retries:
                time.sleep(retry_delay * (attempt + 1))
    raise VqaError(
        f"VQA query failed for sample {sample_key}, structure {structure!r} "
        f"after {retries + 1} attempts: {last_error}"
    ) from last_error


def query_shapes(client, items: list[tuple[np.ndarray, str]], **kwargs) -> list[str]:
    """Query a batch sequentially; answers come back in input order."""
    return [
        query_shape(client, image, structure, **kwargs) for image, structure in items
    ]
