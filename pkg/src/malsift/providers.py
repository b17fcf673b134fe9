"""LLM provider abstraction: HTTP adapter, deterministic mock, replay.

Every pipeline stage that needs a language model goes through
``LlmProvider.complete(task_kind, prompt)``.  The HTTP adapter speaks a
one-endpoint JSON protocol; the mock provider implements each task with
fixed rules so the whole pipeline runs deterministically offline; the
replay provider serves scripted responses keyed by task kind and prompt
hash for tests that pin exact transcripts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from pathlib import Path
from typing import Protocol

import requests

__all__ = [
    "HttpProvider",
    "LlmProvider",
    "MockProvider",
    "ProviderError",
    "ReplayProvider",
    "behavior_template",
    "categorize_snippet_text",
    "replay_key",
]

logger = logging.getLogger(__name__)

SCHEMA_IDS = {
    "relevance": "relevance/v1",
    "extraction": "extraction/v1",
    "extraction_check": "extraction_check/v1",
    "summarize": "summarize/v1",
    "classify": "classify/v1",
    "embed": "embed/v1",
}


class ProviderError(RuntimeError):
    """Provider failure; ``retriable`` marks transient conditions."""

    def __init__(self, message: str, *, retriable: bool = False) -> None:
        super().__init__(message)
        self.retriable = retriable


class LlmProvider(Protocol):
    def complete(self, task_kind: str, prompt: str) -> str: ...


class HttpProvider:
    """POSTs {task_kind, prompt, schema_id} and returns the "text" field.

    The bearer token is read from the environment variable named by
    ``token_env`` at call time, never stored.  HTTP 5xx and transport
    errors are retriable; 4xx and malformed bodies are not.
    """

    def __init__(
        self,
        url: str,
        model: str = "",
        token_env: str = "MALSIFT_API_TOKEN",
        timeout: float = 60.0,
    ) -> None:
        self.url = url
        self.model = model
        self.token_env = token_env
        self.timeout = timeout

    def complete(self, task_kind: str, prompt: str) -> str:
        payload = {
            "task_kind": task_kind,
            "prompt": prompt,
            "schema_id": SCHEMA_IDS.get(task_kind, task_kind),
        }
        if self.model:
            payload["model"] = self.model
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ProviderError(f"provider request failed: {exc}", retriable=True) from exc
        if response.status_code >= 500:
            raise ProviderError(f"provider returned {response.status_code}", retriable=True)
        if response.status_code != 200:
            raise ProviderError(f"provider returned {response.status_code}", retriable=False)
        try:
            body = response.json()
        except ValueError as exc:
            raise ProviderError("provider response is not JSON", retriable=False) from exc
        text = body.get("text")
        if not isinstance(text, str):
            raise ProviderError('provider response lacks a "text" string', retriable=False)
        return text


def replay_key(task_kind: str, prompt: str) -> str:
    digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]
    return f"{task_kind}:{digest}"


class ReplayProvider:
    """Serves scripted responses from a JSON file.

    The file maps ``replay_key(task_kind, prompt)`` to response text.
    Unknown keys fail hard so a drifted prompt cannot silently pass.
    """

    def __init__(self, path: Path) -> None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict) or not isinstance(data.get("responses"), dict):
            raise ValueError(f"{path}: expected an object with a 'responses' map")
        self._responses: dict[str, str] = dict(data["responses"])

    def complete(self, task_kind: str, prompt: str) -> str:
        key = replay_key(task_kind, prompt)
        if key not in self._responses:
            raise ProviderError(f"no scripted response for {key}", retriable=False)
        return self._responses[key]


# ---------------------------------------------------------------------------
# Deterministic mock rules
# ---------------------------------------------------------------------------

RELEVANCE_KEYWORDS = ("exfiltrat", "backdoor", "execut", "payload")

_DOC_RE = re.compile(r"\[DOCUMENT[^\]]*\]\n(.*)\n\[END DOCUMENT\]", re.DOTALL)
_FENCE_RE = re.compile(r"```\n(.*?)\n```", re.DOTALL)
_SNIPPET_RE = re.compile(r"\[SNIPPET\]\n(.*)\n\[END SNIPPET\]", re.DOTALL)
_BEHAVIOR_RE = re.compile(r"\[BEHAVIOR\]\n(.*)\n\[END BEHAVIOR\]", re.DOTALL)
_CATEGORIES_LINE_RE = re.compile(r"^categories: (.*)$", re.MULTILINE)
_CONSTRUCTS_LINE_RE = re.compile(r"^constructs: (.*)$", re.MULTILINE)
_SIM_TOTAL_RE = re.compile(r"sim_total=([0-9.eE+-]+)")
_ENTRY_HEAD_RE = re.compile(r"^### entry (\S+) ", re.MULTILINE)

FUNCTION_CONSTRUCTOR_RE = re.compile(r"\bnew\s+Function\b|\bFunction\s*\(")

_CATEGORY_PATTERNS = {
    "network": re.compile(
        r"\b(https?|socket|requests|urllib|fetch|axios|dns|net|ftplib|urlopen|urlretrieve)\b"
    ),
    "process": re.compile(
        r"\b(subprocess|exec|execSync|execFile|eval|spawn|spawnSync|system|popen|child_process|Function)\b"
    ),
    "file": re.compile(
        r"\b(open|fs|readFileSync|readFile|writeFileSync|writeFile|shutil|unlink|pathlib|tempfile)\b"
    ),
    "encryption": re.compile(
        r"\b(base64|b64decode|b64encode|atob|btoa|crypto|hashlib|binascii|codecs|Buffer)\b"
    ),
    "system_info": re.compile(
        r"\b(environ|getenv|platform|hostname|userInfo|homedir|getpass|uname)\b"
    ),
}

_BEHAVIOR_SENTENCES = {
    "encryption": "It encodes or decodes data buffers.",
    "file": "It reads or writes files on the local system.",
    "network": "It communicates with a remote network endpoint.",
    "process": "It executes commands or dynamically supplied code.",
    "system_info": "It gathers host and environment details.",
}

_CONSTRUCT_SENTENCES = {
    "function_constructor": "It executes extracted text through the Function constructor.",
}

_VIOLATION_BY_CATEGORY = {
    "encryption": ("functional_boundary", "encodes or decodes buffers to conceal content"),
    "file": ("permission_abuse", "touches files outside the package's own tree"),
    "network": ("data_flow", "moves data to or from a remote host without functional need"),
    "process": (
        "execution_context",
        "executes commands or dynamic code during automated package phases",
    ),
    "system_info": ("data_flow", "collects host details useful for targeting"),
}

_IP_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")
_URL_RE = re.compile(r"https?://([\w.-]+)")
_FILE_RE = re.compile(r"\b[\w@/.-]*[\w-]\.(?:py|js)\b")

MOCK_THRESHOLD = 0.75


def categorize_snippet_text(snippet: str) -> tuple[str, ...]:
    """Keyword-based category guess over raw snippet text, sorted."""
    return tuple(
        sorted(cat for cat, pattern in _CATEGORY_PATTERNS.items() if pattern.search(snippet))
    )


def behavior_template(categories: tuple[str, ...], constructs: tuple[str, ...] = ()) -> str:
    """Fixed-template behavior text for a category and construct set.

    Pure function of the sorted inputs; identifiers never appear, so
    renaming code cannot change the output.
    """
    parts = [_BEHAVIOR_SENTENCES[c] for c in sorted(set(categories))]
    parts.extend(_CONSTRUCT_SENTENCES[c] for c in sorted(set(constructs)))
    if not parts:
        return "It performs no catalogued sensitive operations."
    return " ".join(parts)


def _guess_language(snippet: str) -> str:
    if re.search(r"\brequire\(|\bconst |\blet |=>|\bfunction ", snippet):
        return "javascript"
    if re.search(r"^\s*(import |from |def )", snippet, re.MULTILINE):
        return "python"
    return "other"


def _guess_trigger(doc_text: str) -> str:
    lowered = doc_text.lower()
    if re.search(r"postinstall|preinstall|setup\.py|during install|on install", lowered):
        return "install"
    if re.search(r"on import|when imported|at import time", lowered):
        return "import"
    if re.search(r"at runtime|when called|when invoked", lowered):
        return "runtime"
    return "unknown"


def _extract_indicators(doc_text: str) -> list[str]:
    found = set(_IP_RE.findall(doc_text))
    found.update(_URL_RE.findall(doc_text))
    return sorted(found)


def _mock_extraction(doc_text: str) -> str:
    trigger = _guess_trigger(doc_text)
    file_match = _FILE_RE.search(doc_text)
    if file_match:
        file_location = file_match.group(0)
    else:
        file_location = "package-script" if trigger != "unknown" else ""
    indicators = _extract_indicators(doc_text)

    entries = []
    seen: set[str] = set()
    for match in _FENCE_RE.finditer(doc_text):
        snippet = match.group(1)
        if snippet in seen:
            continue
        seen.add(snippet)
        categories = categorize_snippet_text(snippet)
        constructs = (
            ("function_constructor",) if FUNCTION_CONSTRUCTOR_RE.search(snippet) else ()
        )
        behavior = behavior_template(categories, constructs)
        if categories:
            readable = " and ".join(categories)
            why = f"Combines {readable} operations beyond any plausible package purpose."
            violations = [
                {"violation_type": _VIOLATION_BY_CATEGORY[c][0], "statement": _VIOLATION_BY_CATEGORY[c][1]}
                for c in categories
            ]
            boundary = (
                f"A legitimate package would not need {readable} access in this combination."
            )
        else:
            why = "Shows behavior that exceeds the package's declared purpose."
            violations = [
                {
                    "violation_type": "functional_boundary",
                    "statement": "behavior exceeds the package's declared purpose",
                }
            ]
            boundary = "A legitimate package keeps to its declared purpose."
        if constructs:
            boundary += " Legitimate media handling never routes decoded bytes into the Function constructor."
        if trigger == "install":
            strategy = "contextual_boundary"
        elif "process" in categories:
            strategy = "functional_violation"
        elif "network" in categories:
            strategy = "functional_violation"
        elif "system_info" in categories:
            strategy = "privilege_abuse"
        else:
            strategy = "temporal_anomaly"
        entries.append(
            {
                "snippet": snippet,
                "language": _guess_language(snippet),
                "context": {
                    "trigger": trigger,
                    "file_location": file_location,
                    "permissions": "user",
                },
                "behavior": behavior,
                "reasoning": {
                    "why_suspicious": why,
                    "violated_expectations": violations,
                    "boundary_distinction": boundary,
                    "strategy": strategy,
                },
                "indicators": indicators,
            }
        )
    return json.dumps({"entries": entries})


def _mock_classify(prompt: str) -> str:
    categories_match = _CATEGORIES_LINE_RE.search(prompt)
    categories = set()
    if categories_match and categories_match.group(1).strip() != "none":
        categories = {c.strip() for c in categories_match.group(1).split(",") if c.strip()}
    sims = [float(s) for s in _SIM_TOTAL_RE.findall(prompt)]
    entry_ids = _ENTRY_HEAD_RE.findall(prompt)
    if not entry_ids:
        return json.dumps(
            {"label": "benign", "explanation": "no supporting knowledge", "matched_entry_ids": []}
        )
    top_sim = max(sims) if sims else 0.0
    if top_sim >= MOCK_THRESHOLD and {"network", "process"} <= categories:
        return json.dumps(
            {
                "label": "malicious",
                "explanation": (
                    f"Network retrieval feeding execution matches known pattern "
                    f"{entry_ids[0]} (sim_total={top_sim:.6f})."
                ),
                "matched_entry_ids": [entry_ids[0]],
            }
        )
    return json.dumps(
        {
            "label": "benign",
            "explanation": (
                f"Top similarity {top_sim:.6f} with categories "
                f"{', '.join(sorted(categories)) or 'none'} does not meet the malicious-pattern rule."
            ),
            "matched_entry_ids": [],
        }
    )


class MockProvider:
    """Deterministic rules for every task kind; no network, no state.

    relevance: relevant iff the document has a code fence and at least
    one of the keywords {exfiltrat, backdoor, execut, payload}.
    extraction: one entry per distinct fenced snippet, built from
    keyword categories and the fixed behavior template.
    extraction_check: affirms iff snippet and behavior are non-empty.
    summarize: the behavior template over the prompt's category and
    construct lines.
    classify: malicious iff top sim_total >= 0.75 and the slice
    categories include both network and process.
    """

    def complete(self, task_kind: str, prompt: str) -> str:
        if task_kind == "relevance":
            doc = _DOC_RE.search(prompt)
            text = doc.group(1) if doc else prompt
            lowered = text.lower()
            has_fence = "```" in text
            has_keyword = any(k in lowered for k in RELEVANCE_KEYWORDS)
            return "relevant" if has_fence and has_keyword else "irrelevant"
        if task_kind == "extraction":
            doc = _DOC_RE.search(prompt)
            if not doc:
                raise ProviderError("extraction prompt lacks a document section")
            return _mock_extraction(doc.group(1))
        if task_kind == "extraction_check":
            snippet = _SNIPPET_RE.search(prompt)
            behavior = _BEHAVIOR_RE.search(prompt)
            ok = bool(
                snippet
                and behavior
                and snippet.group(1).strip()
                and behavior.group(1).strip()
            )
            return "yes" if ok else "no"
        if task_kind == "summarize":
            categories_match = _CATEGORIES_LINE_RE.search(prompt)
            constructs_match = _CONSTRUCTS_LINE_RE.search(prompt)
            categories: tuple[str, ...] = ()
            constructs: tuple[str, ...] = ()
            if categories_match and categories_match.group(1).strip() != "none":
                categories = tuple(
                    c.strip() for c in categories_match.group(1).split(",") if c.strip()
                )
            if constructs_match and constructs_match.group(1).strip() != "none":
                constructs = tuple(
                    c.strip() for c in constructs_match.group(1).split(",") if c.strip()
                )
            return behavior_template(categories, constructs)
        if task_kind == "classify":
            return _mock_classify(prompt)
        raise ProviderError(f"mock provider does not handle task {task_kind!r}")
