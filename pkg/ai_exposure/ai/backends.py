import hashlib
import json
import re
import time
from abc import ABC, abstractmethod
from typing import Dict, List, Optional

import requests
from loguru import logger

from ai_exposure.ai.prompts import STAGE1_TEMPLATE_ID, STAGE2_TEMPLATE_ID, prompt_input
from ai_exposure.config import API_KEY_ENV, RunConfig
from ai_exposure.domain.annotation import GenerationRequest, GenerationResponse
from ai_exposure.domain.exposure import NO_SKILLS_GROUP
from ai_exposure.exceptions import BackendError, BackendUnavailable, ConfigurationError

MIN_TASKS = 3
MAX_TASKS = 10
MAX_GROUP_SKILLS = 5

_SENTENCE = re.compile(r"(?<=[.!?])\s+|\n+")


class GenerationBackend(ABC):
    """A text-generation service that answers one rendered prompt at a time."""

    name: str = "backend"

    @abstractmethod
    def generate(self, request: GenerationRequest) -> GenerationResponse:
        """Send one request and return the raw response text."""
        pass

    @abstractmethod
    def is_configured(self) -> bool:
        pass


class HttpChatBackend(GenerationBackend):
    """Chat-completions style endpoint reached with a single POST per request."""

    name = "http"

    def __init__(self, endpoint: str, api_key: Optional[str], timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def is_configured(self) -> bool:
        return bool(self.endpoint)

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        payload = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        started = time.perf_counter()
        try:
            response = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as e:
            logger.warning(f"Request to {self.endpoint} failed: {str(e)}")
            raise BackendUnavailable(f"Backend unreachable: {str(e)}")
        latency = time.perf_counter() - started

        if response.status_code == 429 or response.status_code >= 500:
            raise BackendUnavailable(f"Backend returned HTTP {response.status_code}")
        if response.status_code >= 400:
            raise BackendError(f"Backend rejected request with HTTP {response.status_code}: {response.text[:200]}")

        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"Backend response has no text choice: {str(e)}")
        usage = body.get("usage") or {}
        return GenerationResponse(
            raw_text=text or "",
            prompt_tokens=int(usage.get("prompt_tokens", 0) or 0),
            completion_tokens=int(usage.get("completion_tokens", 0) or 0),
            latency_s=latency,
        )


def stable_hash(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()
    return int(digest, 16)


def mock_label(posting_id: str, task_text: str) -> str:
    """Fixed 50/30/20 split of E0/E1/E2 over hash buckets."""
    bucket = stable_hash(posting_id, task_text) % 100
    if bucket < 50:
        return "E0"
    if bucket < 80:
        return "E1"
    return "E2"


def split_sentences(body: str) -> List[str]:
    return [s.strip() for s in _SENTENCE.split(body or "") if s and s.strip()]


def _chunk(skills: List[str], prefix: str) -> List[Dict]:
    return [
        {"group_id": f"{prefix}{i // MAX_GROUP_SKILLS + 1}", "group_skills": skills[i : i + MAX_GROUP_SKILLS]}
        for i in range(0, len(skills), MAX_GROUP_SKILLS)
    ]


class MockBackend(GenerationBackend):
    """Deterministic offline backend.

    Stage 1 turns BODY sentences into tasks (padded or truncated to 3..10) and
    assigns skill groups round-robin, specialized groups first. Stage 2 labels
    each task from a hash of posting id and task text.
    """

    name = "mock"

    def is_configured(self) -> bool:
        return True

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        data = prompt_input(request.prompt)
        if request.prompt_template_id == STAGE1_TEMPLATE_ID:
            document = self._stage1(data)
        elif request.prompt_template_id == STAGE2_TEMPLATE_ID:
            document = self._stage2(data)
        else:
            raise BackendError(f"Mock backend has no template {request.prompt_template_id!r}")
        return GenerationResponse(raw_text=json.dumps(document, ensure_ascii=False))

    def _stage1(self, data: Dict) -> Dict:
        groups = _chunk(list(data.get("SPECIALIZED_SKILLS_NAME") or []), "S")
        groups += _chunk(list(data.get("COMMON_SKILLS_NAME") or []), "C")
        if not groups:
            groups = [{"group_id": NO_SKILLS_GROUP, "group_skills": []}]

        sentences = split_sentences(data.get("BODY", "")) or [f"Carry out the duties of {data.get('TITLE_NAME') or 'this role'}"]
        texts = sentences[:MAX_TASKS]
        base = list(texts)
        while len(texts) < MIN_TASKS:
            k = len(texts)
            texts.append(f"{base[k % len(base)]} (part {k + 1})")

        tasks = [
            {"task_id": f"t{i + 1}", "task": text, "skill_group_id": groups[i % len(groups)]["group_id"]}
            for i, text in enumerate(texts)
        ]
        return {
            "posting_id": data.get("ID", ""),
            "posting_title": data.get("TITLE_NAME", ""),
            "skills_groups": groups,
            "tasks": tasks,
        }

    def _stage2(self, data: Dict) -> Dict:
        posting_id = data.get("posting_id", "")
        return {
            "posting_id": posting_id,
            "task_exposures": [
                {"task_id": t["task_id"], "exposure_label": mock_label(posting_id, t["task"])}
                for t in data.get("tasks", [])
            ],
        }


def get_backend(config: RunConfig) -> GenerationBackend:
    """Build the backend named in the run configuration."""
    if config.backend == "mock":
        return MockBackend()
    if not config.endpoint:
        raise ConfigurationError("backend 'http' requires an endpoint")
    if not config.api_key:
        logger.warning(f"{API_KEY_ENV} is not set; sending requests without credentials")
    return HttpChatBackend(config.endpoint, config.api_key, timeout=config.request_timeout)
