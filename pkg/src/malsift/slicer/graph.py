"""Program-graph model shared by the language frontends.

One node per top-level statement of a source line (multi-line
statements collapse to their first line; a one-line compound like
``if c: g()`` yields one node per contained statement).  Edges:

* data: definition node -> use node, labeled with the variable name;
* control: enclosing condition/loop/exception handler -> statement;
* call: call-site statement -> callee frame, with a confidence mark.

Frames are function bodies plus one module frame per file.  Entry
frames are module tops, install hooks, and exported functions.
"""

from __future__ import annotations

import io
import json
import logging
import re
import tarfile
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "CallRef",
    "Frame",
    "PackageSource",
    "ProgramGraph",
    "SourceFile",
    "StatementNode",
    "load_package_source",
]

logger = logging.getLogger(__name__)

NODE_KINDS = frozenset(
    {
        "import",
        "assign",
        "call",
        "expr",
        "condition",
        "loop",
        "try",
        "handler",
        "def",
        "return",
        "export",
        "statement",
        "opaque",
    }
)

MAX_FILE_BYTES = 2_000_000
MAX_FILES = 2000

# Lines longer than this mark a file as minified rather than parseable.
MINIFIED_LINE_LENGTH = 2000


@dataclass(frozen=True)
class CallRef:
    """One call expression inside a statement, after name resolution."""

    raw: str
    kind: str  # internal | external | dynamic | unresolved
    target: str  # frame id for internal, dotted api name for external
    confidence: str = "high"  # low for same-name fallback edges


@dataclass
class StatementNode:
    node_id: int
    file: str
    line: int
    kind: str
    source: str
    frame_id: str
    reads: tuple[str, ...] = ()
    writes: tuple[str, ...] = ()
    calls: tuple[CallRef, ...] = ()
    dynamic: bool = False


@dataclass
class Frame:
    frame_id: str
    file: str
    name: str
    def_node: int | None
    params: tuple[str, ...] = ()
    is_module: bool = False
    exported: bool = False
    install_hook: bool = False

    @property
    def is_entry(self) -> bool:
        return self.is_module or self.exported or self.install_hook


class ProgramGraph:
    """Nodes, frames, and the three edge relations for one package."""

    def __init__(self, package_id: str) -> None:
        self.package_id = package_id
        self.nodes: list[StatementNode] = []
        self.frames: dict[str, Frame] = {}
        self.data_edges: set[tuple[int, int, str]] = set()
        self.control_edges: set[tuple[int, int]] = set()
        self.call_edges: set[tuple[int, str, str]] = set()
        self._data_preds: dict[int, set[tuple[int, str]]] = {}
        self._control_preds: dict[int, set[int]] = {}
        self._callers: dict[str, set[int]] = {}

    def add_node(self, node: StatementNode) -> int:
        assert node.node_id == len(self.nodes)
        self.nodes.append(node)
        return node.node_id

    def add_frame(self, frame: Frame) -> None:
        self.frames[frame.frame_id] = frame

    def add_data_edge(self, def_node: int, use_node: int, var: str) -> None:
        # A definition never feeds itself.
        if def_node == use_node:
            return
        self._check(def_node)
        self._check(use_node)
        self.data_edges.add((def_node, use_node, var))
        self._data_preds.setdefault(use_node, set()).add((def_node, var))

    def add_control_edge(self, controller: int, controlled: int) -> None:
        if controller == controlled:
            return
        self._check(controller)
        self._check(controlled)
        self.control_edges.add((controller, controlled))
        self._control_preds.setdefault(controlled, set()).add(controller)

    def add_call_edge(self, call_node: int, frame_id: str, confidence: str = "high") -> None:
        self._check(call_node)
        if frame_id not in self.frames:
            raise ValueError(f"call edge to unknown frame {frame_id!r}")
        self.call_edges.add((call_node, frame_id, confidence))
        self._callers.setdefault(frame_id, set()).add(call_node)

    def _check(self, node_id: int) -> None:
        if not 0 <= node_id < len(self.nodes):
            raise ValueError(f"unknown node {node_id}")

    def data_predecessors(self, node_id: int) -> set[int]:
        return {d for d, _ in self._data_preds.get(node_id, ())}

    def control_predecessors(self, node_id: int) -> set[int]:
        return set(self._control_preds.get(node_id, ()))

    def callers_of(self, frame_id: str) -> list[int]:
        return sorted(self._callers.get(frame_id, ()))

    def frame_of(self, node_id: int) -> Frame:
        return self.frames[self.nodes[node_id].frame_id]


@dataclass(frozen=True)
class SourceFile:
    path: str  # package-relative, forward slashes
    text: str
    language: str  # python | javascript
    opaque: bool = False  # undecodable or minified; gets a single opaque node


@dataclass(frozen=True)
class PackageSource:
    package_id: str
    root: str
    files: tuple[SourceFile, ...]
    install_hook_files: frozenset[str] = field(default_factory=frozenset)


_LANGUAGE_BY_SUFFIX = {
    ".py": "python",
    ".js": "javascript",
    ".mjs": "javascript",
    ".cjs": "javascript",
}

_SETUP_NAME_RE = re.compile(r"name\s*=\s*['\"]([\w.-]+)['\"]")
_SCRIPT_FILE_RE = re.compile(r"[\w./-]+\.(?:js|mjs|cjs)\b")


def _decode(raw: bytes) -> tuple[str, bool]:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        return "", True
    if any(len(line) > MINIFIED_LINE_LENGTH for line in text.splitlines()):
        return text, True
    return text, False


def _collect_dir(root: Path) -> dict[str, bytes]:
    raw: dict[str, bytes] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if any(part.startswith(".") for part in Path(rel).parts):
            continue
        raw[rel] = path.read_bytes()
    return raw


def _collect_tar(path: Path) -> dict[str, bytes]:
    raw: dict[str, bytes] = {}
    with tarfile.open(path, "r:*") as archive:
        for member in archive.getmembers():
            if not member.isfile():
                continue
            name = member.name
            if name.startswith("/") or ".." in Path(name).parts:
                logger.warning("%s: skipping unsafe member %r", path, name)
                continue
            handle = archive.extractfile(member)
            if handle is None:
                continue
            raw[Path(name).as_posix()] = handle.read(MAX_FILE_BYTES + 1)
    return raw


def _collect_zip(path: Path) -> dict[str, bytes]:
    raw: dict[str, bytes] = {}
    with zipfile.ZipFile(path) as archive:
        for info in archive.infolist():
            if info.is_dir():
                continue
            name = info.filename
            if name.startswith("/") or ".." in Path(name).parts:
                logger.warning("%s: skipping unsafe member %r", path, name)
                continue
            with archive.open(info) as handle:
                raw[Path(name).as_posix()] = handle.read(MAX_FILE_BYTES + 1)
    return raw


def _strip_common_prefix(raw: dict[str, bytes]) -> dict[str, bytes]:
    tops = {Path(name).parts[0] for name in raw}
    if len(tops) != 1:
        return raw
    top = tops.pop()
    if not all(len(Path(name).parts) > 1 for name in raw):
        return raw
    return {Path(*Path(name).parts[1:]).as_posix(): blob for name, blob in raw.items()}


def load_package_source(path: str | Path) -> PackageSource:
    """Read a package from a directory or a tar/zip archive.

    Collects Python and JavaScript sources (size-capped), discovers
    install hooks (setup.py, package.json lifecycle scripts), and
    derives the package id from package metadata when available.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"package path does not exist: {path}")
    if path.is_dir():
        raw = _collect_dir(path)
    elif path.suffixes and path.suffix in (".zip", ".whl"):
        raw = _strip_common_prefix(_collect_zip(path))
    elif tarfile.is_tarfile(path):
        raw = _strip_common_prefix(_collect_tar(path))
    else:
        raise ValueError(f"unsupported package format: {path}")

    package_id = path.name
    for suffix in (".tar.gz", ".tgz", ".tar", ".zip", ".whl"):
        if package_id.endswith(suffix):
            package_id = package_id[: -len(suffix)]
            break

    install_hooks: set[str] = set()
    if "setup.py" in raw:
        install_hooks.add("setup.py")
        match = _SETUP_NAME_RE.search(raw["setup.py"].decode("utf-8", "replace"))
        if match:
            package_id = match.group(1)
    if "package.json" in raw:
        try:
            meta = json.loads(raw["package.json"].decode("utf-8"))
            name = meta.get("name")
            version = meta.get("version")
            if isinstance(name, str) and name:
                package_id = f"{name}@{version}" if isinstance(version, str) else name
            scripts = meta.get("scripts", {})
            for key in ("preinstall", "install", "postinstall"):
                value = scripts.get(key)
                if isinstance(value, str):
                    for ref in _SCRIPT_FILE_RE.findall(value):
                        install_hooks.add(Path(ref).as_posix().lstrip("./"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            logger.warning("%s: unreadable package.json", path)

    files: list[SourceFile] = []
    for rel in sorted(raw):
        language = _LANGUAGE_BY_SUFFIX.get(Path(rel).suffix)
        if language is None:
            continue
        if len(files) >= MAX_FILES:
            logger.warning("%s: file cap reached, ignoring %s", path, rel)
            break
        blob = raw[rel]
        if len(blob) > MAX_FILE_BYTES:
            logger.warning("%s: %s exceeds size cap, marked opaque", path, rel)
            files.append(SourceFile(path=rel, text="", language=language, opaque=True))
            continue
        text, opaque = _decode(blob)
        files.append(SourceFile(path=rel, text=text, language=language, opaque=opaque))
    return PackageSource(
        package_id=package_id,
        root=str(path),
        files=tuple(files),
        install_hook_files=frozenset(h for h in install_hooks),
    )
