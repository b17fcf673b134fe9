"""Sensitive-call location and backward slicing over a program graph."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

from ..model import CodeSlice, SensitiveApiCatalogue, SliceStatement
from .graph import ProgramGraph

__all__ = [
    "SensitiveSite",
    "SLICE_MODES",
    "DEFAULT_MAX_STATEMENTS",
    "locate_sensitive_calls",
    "entry_call_path",
    "backward_slice",
]

logger = logging.getLogger(__name__)

SLICE_MODES = ("data", "control", "both")
DEFAULT_MAX_STATEMENTS = 400


@dataclass(frozen=True)
class SensitiveSite:
    """One statement that invokes a catalogued sensitive API."""

    node_id: int
    file: str
    line: int
    api_name: str
    category: str


def locate_sensitive_calls(
    graph: ProgramGraph, catalogue: SensitiveApiCatalogue
) -> list[SensitiveSite]:
    languages: dict[str, str] = getattr(graph, "file_language", {})
    found: dict[tuple[int, str], SensitiveSite] = {}
    for node in graph.nodes:
        language = languages.get(node.file, "python")
        for ref in node.calls:
            if ref.kind != "external":
                continue
            entry = catalogue.match(language, ref.target)
            if entry is None:
                continue
            key = (node.node_id, ref.target)
            if key not in found:
                found[key] = SensitiveSite(
                    node_id=node.node_id,
                    file=node.file,
                    line=node.line,
                    api_name=ref.target,
                    category=entry.category,
                )
    return sorted(found.values(), key=lambda s: (s.file, s.line, s.node_id, s.api_name))


def entry_call_path(graph: ProgramGraph, site_node: int) -> list[int]:
    """Shortest chain of def/call nodes linking the site's frame to an
    entry frame (module body, exported function, or install hook).

    The path lists, innermost first, the definition node of each frame
    crossed and the call statement that invokes it.  A site already in
    an entry frame yields just its own definition node (or nothing for
    module-level code).  If no entry frame reaches the site, the site's
    own definition node is returned so the slice still carries its
    frame context.
    """
    site_frame = graph.frame_of(site_node)
    if site_frame.is_module:
        return []
    seed_path = [site_frame.def_node] if site_frame.def_node is not None else []
    queue: deque[tuple[str, list[int]]] = deque([(site_frame.frame_id, seed_path)])
    seen = {site_frame.frame_id}
    while queue:
        frame_id, path = queue.popleft()
        frame = graph.frames[frame_id]
        if frame.is_entry:
            return path
        for call_node in graph.callers_of(frame_id):
            caller = graph.frame_of(call_node)
            if caller.frame_id in seen:
                continue
            seen.add(caller.frame_id)
            if caller.is_module:
                return path + [call_node]
            caller_path = path + [call_node]
            if caller.def_node is not None:
                caller_path = caller_path + [caller.def_node]
            queue.append((caller.frame_id, caller_path))
    return seed_path


def _closure(graph: ProgramGraph, seeds: set[int], mode: str) -> set[int]:
    included = set(seeds)
    frontier = list(seeds)
    while frontier:
        node_id = frontier.pop()
        preds: set[int] = set()
        if mode in ("data", "both"):
            preds |= graph.data_predecessors(node_id)
        if mode in ("control", "both"):
            preds |= graph.control_predecessors(node_id)
        for pred in preds:
            if pred not in included:
                included.add(pred)
                frontier.append(pred)
    return included


def _distances(graph: ProgramGraph, seeds: set[int], members: set[int], mode: str) -> dict[int, int]:
    dist = {node_id: 0 for node_id in seeds}
    queue = deque(seeds)
    while queue:
        node_id = queue.popleft()
        preds: set[int] = set()
        if mode in ("data", "both"):
            preds |= graph.data_predecessors(node_id)
        if mode in ("control", "both"):
            preds |= graph.control_predecessors(node_id)
        for pred in preds:
            if pred in members and pred not in dist:
                dist[pred] = dist[node_id] + 1
                queue.append(pred)
    return dist


def backward_slice(
    graph: ProgramGraph,
    site: SensitiveSite,
    mode: str = "both",
    max_statements: int = DEFAULT_MAX_STATEMENTS,
) -> CodeSlice:
    """Backward dependency closure from a sensitive call site.

    The closure seeds are the site statement plus its entry call path,
    so the statements that route execution into the site's function are
    always present.  mode selects which edges are followed: data edges,
    control edges, or both.
    """
    if mode not in SLICE_MODES:
        raise ValueError(f"unknown slice mode {mode!r}")
    if max_statements < 1:
        raise ValueError("max_statements must be positive")
    path = entry_call_path(graph, site.node_id)
    seeds = {site.node_id} | set(path)
    members = _closure(graph, seeds, mode)
    if len(members) > max_statements:
        dist = _distances(graph, seeds, members, mode)
        ranked = sorted(members, key=lambda n: (dist.get(n, len(members)), n))
        kept = set(ranked[:max_statements])
        logger.warning(
            "%s: slice at %s:%d truncated from %d to %d statements",
            graph.package_id,
            site.file,
            site.line,
            len(members),
            max_statements,
        )
        members = kept | {site.node_id}
    statements = tuple(
        SliceStatement(file=node.file, line=node.line, source=node.source)
        for node in sorted(
            (graph.nodes[n] for n in members),
            key=lambda node: (node.file, node.line, node.node_id),
        )
    )
    if path:
        entry_node = graph.nodes[path[-1]]
        entry_point = (entry_node.file, entry_node.line)
    else:
        entry_point = (site.file, site.line)
    return CodeSlice(
        package_id=graph.package_id,
        entry_point=entry_point,
        sensitive_call=(site.file, site.line, site.api_name, site.category),
        statements=statements,
    )
