"""Prompt construction and rationale generation backends.

Prompt building is pure string work. Generation goes through a pluggable
backend: a deterministic stub (default) or an HTTP completion endpoint.
"""

from __future__ import annotations

import json
import os
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from .encoders import stable_hash
from .errors import BackendError, RenderError, TransportError, ValidationError
from .heads import CATEGORY_NAMES, Category

LABEL_POSITIVE = "misogynous"
LABEL_NEGATIVE = "non-misogynous"

ALLOWED_SHOT_COUNTS = (0, 2, 5)


def label_token(label: bool) -> str:
    return LABEL_POSITIVE if label else LABEL_NEGATIVE


@dataclass
class PromptTemplate:
    name: str
    body: str

    def render(self, **bindings) -> str:
        class _Strict(dict):
            def __missing__(self, key):
                raise RenderError(key)
        try:
            return string.Formatter().vformat(self.body, (), _Strict(bindings))
        except RenderError:
            raise
        except (KeyError, IndexError) as exc:
            raise RenderError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "PromptTemplate":
        path = Path(path)
        return cls(name=path.stem, body=path.read_text(encoding="utf-8"))


def _builtin_template(name: str) -> PromptTemplate:
    body = resources.files("memescan").joinpath(
        f"templates/{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate(name=name, body=body)


def default_detection_template() -> PromptTemplate:
    return _builtin_template("detection")


def default_reasoning_template() -> PromptTemplate:
    return _builtin_template("reasoning")


@dataclass
class FewShotExample:
    meme_text: str
    label: bool
    category: Category
    rationale: str

    def __post_init__(self):
        if not self.rationale.strip():
            raise ValidationError("few-shot rationale must be non-empty")


def load_fewshot_pool(path=None) -> list[FewShotExample]:
    """Fixed, versioned pool of few-shot examples; shot selection takes the
    first k in file order."""
    if path is None:
        text = resources.files("memescan").joinpath(
            "data/fewshot.jsonl").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    pool = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        pool.append(FewShotExample(
            meme_text=obj["meme_text"], label=obj["label"],
            category=Category.from_name(obj["category"]),
            rationale=obj["rationale"]))
    return pool


def render_shots(shots: list[FewShotExample]) -> str:
    blocks = []
    for i, s in enumerate(shots, start=1):
        blocks.append(
            f"Example {i}:\n"
            f"Meme: {s.meme_text}\n"
            f"Label: {label_token(s.label)}\n"
            f"Category: {s.category.display_name}\n"
            f"Rationale: {s.rationale}\n")
    return "\n".join(blocks)


def build_detection_prompt(meme_text: str, shots: list[FewShotExample],
                           tpl: PromptTemplate) -> str:
    """Task description plus the meme text, optionally preceded by worked
    examples. Only 0, 2 or 5 shots are supported."""
    if len(shots) not in ALLOWED_SHOT_COUNTS:
        raise ValidationError(
            f"unsupported shot count {len(shots)}; use one of "
            f"{ALLOWED_SHOT_COUNTS}")
    instructions = (
        "Decide whether the meme below is misogynous and assign one "
        "category out of: " + ", ".join(CATEGORY_NAMES) + ".")
    return tpl.render(
        instructions=instructions,
        shots=render_shots(shots),
        context_summary=meme_text,
    )


def build_reasoning_prompt(summary: str, label: bool, category: Category,
                           tpl: PromptTemplate) -> str:
    """Reasoning prompt: context summary, detection label, category, and the
    instruction to explain the decision in terms of that category."""
    if not summary.strip():
        raise ValidationError("empty context summary")
    instructions = (
        "Generate a detailed explanation for the detected misogyny, "
        "specifically relating it to the identified category.")
    return tpl.render(
        context_summary=summary,
        label=label_token(label),
        category=category.display_name,
        instructions=instructions,
    )


# -- completion backends -----------------------------------------------------

_STUB_SKELETONS = [
    ("The meme is judged {label} and is placed in the {category} domain; "
     "its text and imagery lean on {category}-related gender expectations."),
    ("Classified as {label}: within the {category} context the meme "
     "reinforces a stereotyped view of women's roles."),
    ("This content reads as {label} in the {category} setting, because the "
     "pairing of caption and image invokes a {category} stereotype."),
]


@dataclass
class CompletionBackend:
    """kind 'stub' is deterministic given the prompt; kind 'http' posts to a
    completions endpoint."""

    kind: str = "stub"
    base_url: str = ""
    model: str = "memescan-stub"
    max_tokens: int = 256
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in ("stub", "http"):
            raise ValidationError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ValidationError("http backend needs a base_url")


def _stub_generate(prompt: str) -> str:
    # an explicit "Category: X" line wins; any category mention is a fallback
    category = None
    for line in reversed(prompt.splitlines()):
        if line.startswith("Category: "):
            candidate = line[len("Category: "):].strip()
            if candidate in CATEGORY_NAMES:
                category = candidate
                break
    if category is None:
        category = next((name for name in CATEGORY_NAMES if name in prompt),
                        Category.OTHER.display_name)
    label = None
    for line in reversed(prompt.splitlines()):
        if line.startswith("Label: "):
            candidate = line[len("Label: "):].strip()
            if candidate in (LABEL_POSITIVE, LABEL_NEGATIVE):
                label = candidate
                break
    if label is None:
        label = LABEL_NEGATIVE if LABEL_NEGATIVE in prompt else LABEL_POSITIVE
    skeleton = _STUB_SKELETONS[stable_hash(prompt) % len(_STUB_SKELETONS)]
    return skeleton.format(label=label, category=category)


def _http_generate(prompt: str, backend: CompletionBackend) -> str:
    headers = {}
    api_key = os.environ.get("MM_API_KEY")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        resp = requests.post(
            backend.base_url.rstrip("/") + "/v1/completions",
            json={"model": backend.model, "prompt": prompt,
                  "max_tokens": backend.max_tokens},
            headers=headers, timeout=backend.timeout)
    except requests.RequestException as exc:
        raise TransportError(f"completion request failed: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise TransportError(
            f"completion endpoint returned {resp.status_code}",
            status=resp.status_code)
    body = resp.json()
    text = None
    if isinstance(body, dict):
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            text = choices[0].get("text")
        if text is None:
            text = body.get("text") or body.get("completion")
    if not text:
        raise BackendError("empty completion from backend")
    return text


def generate(prompt: str, backend: CompletionBackend) -> str:
    """One rationale for one prompt."""
    if not prompt.strip():
        raise ValidationError("empty prompt")
    if backend.kind == "stub":
        return _stub_generate(prompt)
    return _http_generate(prompt, backend)


def generate_batch(prompts: list[str], backend: CompletionBackend,
                   workers: int = 4):
    """Bounded-parallel generation preserving input order.

    Returns a list of (rationale, error_message) pairs; failures never abort
    the batch.
    """
    def one(prompt):
        try:
            return generate(prompt, backend), None
        except (TransportError, BackendError, ValidationError) as exc:
            return None, str(exc)

    if workers <= 1 or len(prompts) <= 1:
        return [one(p) for p in prompts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, prompts))
