"""Python frontend: AST statements into program-graph nodes and edges.

Statement granularity is one node per top-level statement, keyed by its
first line; compound headers (if/while/for/try/except) are their own
nodes and control their block's statements.  Reaching definitions are
may-reach: straight-line assignments kill, branch merges union with the
pre-branch environment, and loop bodies run twice so back-edge
definitions are seen.  Name resolution is purely name-based: local
function definitions win over imports, import aliases map to their
modules, unknown dotted bases resolve to the dotted name as written.
"""

from __future__ import annotations

import ast
import logging
from dataclasses import dataclass, field

from .graph import CallRef, Frame, ProgramGraph, SourceFile, StatementNode

__all__ = ["PythonFileBuilder"]

logger = logging.getLogger(__name__)

_DYNAMIC_BUILTINS = {"eval", "exec", "getattr", "__import__"}


@dataclass
class _StmtRec:
    node_id: int
    stmt: ast.stmt
    reads: tuple[str, ...]
    writes: tuple[str, ...]
    call_exprs: tuple[ast.Call, ...]
    blocks: list[tuple[str, list["_StmtRec"]]] = field(default_factory=list)


@dataclass
class _FrameRec:
    frame_id: str
    items: list[_StmtRec]
    params: tuple[str, ...]
    def_node: int | None
    imports: dict[str, tuple[str, str, str | None]]  # name -> (kind, target, intra file)


def _names_in(tree: ast.AST) -> tuple[set[str], set[str]]:
    """(reads, writes) of Name nodes, skipping nested function/class bodies."""
    reads: set[str] = set()
    writes: set[str] = set()

    def visit(node: ast.AST) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            return
        if isinstance(node, ast.Name):
            if isinstance(node.ctx, ast.Load):
                reads.add(node.id)
            elif isinstance(node.ctx, ast.Store):
                writes.add(node.id)
        for child in ast.iter_child_nodes(node):
            visit(child)

    visit(tree)
    return reads, writes


def _calls_in(tree: ast.AST) -> list[ast.Call]:
    """Call expressions directly inside a statement, skipping nested defs."""
    calls: list[ast.Call] = []

    def visit(node: ast.AST) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            return
        if isinstance(node, ast.Call):
            calls.append(node)
        for child in ast.iter_child_nodes(node):
            visit(child)

    visit(tree)
    return calls


def _dotted_callee(func: ast.expr) -> str | None:
    parts: list[str] = []
    node = func
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return ".".join(reversed(parts))
    return None


def _header_names(stmt: ast.stmt) -> tuple[set[str], set[str], list[ast.Call]]:
    """Reads/writes/calls of a compound statement's header only."""
    if isinstance(stmt, (ast.If, ast.While)):
        reads, writes = _names_in(stmt.test)
        return reads, writes, _calls_in(stmt.test)
    if isinstance(stmt, (ast.For, ast.AsyncFor)):
        reads, _ = _names_in(stmt.iter)
        _, writes = _names_in(stmt.target)
        return reads, writes, _calls_in(stmt.iter)
    if isinstance(stmt, (ast.With, ast.AsyncWith)):
        reads: set[str] = set()
        writes: set[str] = set()
        calls: list[ast.Call] = []
        for item in stmt.items:
            r, _ = _names_in(item.context_expr)
            reads |= r
            calls.extend(_calls_in(item.context_expr))
            if item.optional_vars is not None:
                _, w = _names_in(item.optional_vars)
                writes |= w
        return reads, writes, calls
    if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
        reads: set[str] = set()
        calls: list[ast.Call] = []
        for expr in list(stmt.decorator_list) + stmt.args.defaults + [
            d for d in stmt.args.kw_defaults if d is not None
        ]:
            r, _ = _names_in(expr)
            reads |= r
            calls.extend(_calls_in(expr))
        return reads, {stmt.name}, calls
    if isinstance(stmt, ast.ClassDef):
        reads: set[str] = set()
        calls: list[ast.Call] = []
        for expr in list(stmt.decorator_list) + list(stmt.bases):
            r, _ = _names_in(expr)
            reads |= r
            calls.extend(_calls_in(expr))
        return reads, {stmt.name}, calls
    if isinstance(stmt, ast.Try):
        return set(), set(), []
    if isinstance(stmt, ast.Import):
        writes = {alias.asname or alias.name.split(".")[0] for alias in stmt.names}
        return set(), writes, []
    if isinstance(stmt, ast.ImportFrom):
        writes = {alias.asname or alias.name for alias in stmt.names if alias.name != "*"}
        return set(), writes, []
    reads, writes = _names_in(stmt)
    return reads, writes, _calls_in(stmt)


def _stmt_kind(stmt: ast.stmt) -> str:
    if isinstance(stmt, (ast.Import, ast.ImportFrom)):
        return "import"
    if isinstance(stmt, ast.If):
        return "condition"
    if isinstance(stmt, (ast.While, ast.For, ast.AsyncFor)):
        return "loop"
    if isinstance(stmt, ast.Try):
        return "try"
    if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
        return "def"
    if isinstance(stmt, ast.Return):
        return "return"
    if isinstance(stmt, (ast.Assign, ast.AugAssign, ast.AnnAssign)):
        return "assign"
    if isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Call):
        return "call"
    return "statement"


class PythonFileBuilder:
    """Two-phase builder: declare nodes/frames, then flow edges."""

    def __init__(self, graph: ProgramGraph, source: SourceFile) -> None:
        self.graph = graph
        self.source = source
        self.path = source.path
        self.frames: dict[str, _FrameRec] = {}
        self.functions: dict[str, str] = {}  # simple name -> frame id (innermost-last)
        self.module_imports: dict[str, tuple[str, str, str | None]] = {}
        self._module_env: dict[str, set[int]] = {}
        self._tree: ast.Module | None = None

    # ------------------------------------------------------------------
    # Phase 1: nodes, frames, control edges, import tables
    # ------------------------------------------------------------------

    def declare(self, module_map: dict[str, str], is_install_hook: bool) -> None:
        module_frame_id = f"{self.path}::<module>"
        self.graph.add_frame(
            Frame(
                frame_id=module_frame_id,
                file=self.path,
                name="<module>",
                def_node=None,
                is_module=True,
                install_hook=is_install_hook,
            )
        )
        rec = _FrameRec(module_frame_id, [], (), None, self.module_imports)
        self.frames[module_frame_id] = rec
        if self.source.opaque:
            self._emit_opaque("file is undecodable or minified")
            return
        try:
            self._tree = ast.parse(self.source.text)
        except SyntaxError as exc:
            logger.warning("%s: unparseable (%s), marked opaque", self.path, exc)
            self._emit_opaque(f"syntax error: {exc.msg}")
            return
        self._module_map = module_map
        rec.items = self._declare_block(
            self._tree.body, module_frame_id, rec.imports, qual_prefix="", control=None
        )

    def _emit_opaque(self, reason: str) -> None:
        node = StatementNode(
            node_id=len(self.graph.nodes),
            file=self.path,
            line=1,
            kind="opaque",
            source=f"<opaque: {reason}>",
            frame_id=f"{self.path}::<module>",
            dynamic=True,
        )
        self.graph.add_node(node)

    def _new_node(self, stmt: ast.stmt, kind: str, frame_id: str) -> int:
        source_text = ast.get_source_segment(self.source.text, stmt)
        if kind in ("condition", "loop", "try", "def"):
            # Compound headers keep only their first physical line.
            lines = self.source.text.splitlines()
            source_text = lines[stmt.lineno - 1].strip() if stmt.lineno <= len(lines) else ""
        elif source_text is None:
            source_text = ""
        node = StatementNode(
            node_id=len(self.graph.nodes),
            file=self.path,
            line=stmt.lineno,
            kind=kind,
            source=source_text.strip() if source_text else "",
            frame_id=frame_id,
        )
        return self.graph.add_node(node)

    def _declare_block(
        self,
        stmts: list[ast.stmt],
        frame_id: str,
        imports: dict[str, tuple[str, str, str | None]],
        qual_prefix: str,
        control: int | None,
    ) -> list[_StmtRec]:
        items: list[_StmtRec] = []
        for stmt in stmts:
            kind = _stmt_kind(stmt)
            node_id = self._new_node(stmt, kind, frame_id)
            if control is not None:
                self.graph.add_control_edge(control, node_id)
            reads, writes, call_exprs = _header_names(stmt)
            rec = _StmtRec(
                node_id=node_id,
                stmt=stmt,
                reads=tuple(sorted(reads)),
                writes=tuple(sorted(writes)),
                call_exprs=tuple(call_exprs),
            )
            items.append(rec)
            self._record_imports(stmt, imports)

            if isinstance(stmt, ast.If):
                rec.blocks.append(
                    ("body", self._declare_block(stmt.body, frame_id, imports, qual_prefix, node_id))
                )
                rec.blocks.append(
                    ("orelse", self._declare_block(stmt.orelse, frame_id, imports, qual_prefix, node_id))
                )
            elif isinstance(stmt, (ast.While, ast.For, ast.AsyncFor)):
                rec.blocks.append(
                    ("body", self._declare_block(stmt.body, frame_id, imports, qual_prefix, node_id))
                )
                rec.blocks.append(
                    ("orelse", self._declare_block(stmt.orelse, frame_id, imports, qual_prefix, node_id))
                )
            elif isinstance(stmt, ast.Try):
                rec.blocks.append(
                    ("body", self._declare_block(stmt.body, frame_id, imports, qual_prefix, control))
                )
                for handler in stmt.handlers:
                    handler_id = self._new_node(handler, "handler", frame_id)  # type: ignore[arg-type]
                    self.graph.add_control_edge(node_id, handler_id)
                    h_reads, h_writes = set(), set()
                    if handler.type is not None:
                        h_reads, _ = _names_in(handler.type)
                    if handler.name:
                        h_writes = {handler.name}
                    handler_rec = _StmtRec(
                        node_id=handler_id,
                        stmt=handler,  # type: ignore[arg-type]
                        reads=tuple(sorted(h_reads)),
                        writes=tuple(sorted(h_writes)),
                        call_exprs=(),
                    )
                    handler_rec.blocks.append(
                        (
                            "body",
                            self._declare_block(
                                handler.body, frame_id, imports, qual_prefix, handler_id
                            ),
                        )
                    )
                    rec.blocks.append(("handler", [handler_rec]))
                rec.blocks.append(
                    ("orelse", self._declare_block(stmt.orelse, frame_id, imports, qual_prefix, node_id))
                )
                rec.blocks.append(
                    ("final", self._declare_block(stmt.finalbody, frame_id, imports, qual_prefix, control))
                )
            elif isinstance(stmt, (ast.With, ast.AsyncWith)):
                rec.blocks.append(
                    ("body", self._declare_block(stmt.body, frame_id, imports, qual_prefix, control))
                )
            elif isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                qualname = f"{qual_prefix}{stmt.name}"
                func_frame_id = f"{self.path}::{qualname}"
                params = tuple(
                    a.arg
                    for a in (
                        stmt.args.posonlyargs + stmt.args.args + stmt.args.kwonlyargs
                    )
                )
                is_module_frame = self.frames[frame_id].def_node is None
                exported = is_module_frame and not stmt.name.startswith("_")
                self.graph.add_frame(
                    Frame(
                        frame_id=func_frame_id,
                        file=self.path,
                        name=qualname,
                        def_node=node_id,
                        params=params,
                        exported=exported,
                    )
                )
                func_imports = dict(imports)
                func_rec = _FrameRec(func_frame_id, [], params, node_id, func_imports)
                self.frames[func_frame_id] = func_rec
                self.functions.setdefault(stmt.name, func_frame_id)
                # Function bodies execute only when the definition is reached
                # and the function is invoked, so the def node gates them.
                func_rec.items = self._declare_block(
                    stmt.body, func_frame_id, func_imports, qualname + ".", control=node_id
                )
            elif isinstance(stmt, ast.ClassDef):
                # Class bodies execute at import time in the enclosing frame.
                rec.blocks.append(
                    (
                        "body",
                        self._declare_block(
                            stmt.body, frame_id, imports, stmt.name + ".", control
                        ),
                    )
                )
        return items

    def _record_imports(
        self, stmt: ast.stmt, imports: dict[str, tuple[str, str, str | None]]
    ) -> None:
        if isinstance(stmt, ast.Import):
            for alias in stmt.names:
                local = alias.asname or alias.name.split(".")[0]
                target = alias.name if alias.asname else alias.name.split(".")[0]
                if alias.asname:
                    imports[local] = ("module", alias.name, self._intra_file(alias.name))
                else:
                    # "import a.b" binds "a"; track the full module for matching.
                    imports[local] = ("module", target, self._intra_file(target))
        elif isinstance(stmt, ast.ImportFrom):
            module = stmt.module or ""
            if stmt.level:
                base_parts = self.path.split("/")[:-1]
                base_parts = base_parts[: len(base_parts) - (stmt.level - 1)]
                module = ".".join(base_parts + ([module] if module else []))
            intra = self._intra_file(module)
            for alias in stmt.names:
                if alias.name == "*":
                    continue
                local = alias.asname or alias.name
                imports[local] = ("symbol", f"{module}.{alias.name}", intra)

    def _intra_file(self, module: str) -> str | None:
        return getattr(self, "_module_map", {}).get(module)

    # ------------------------------------------------------------------
    # Phase 2: dataflow and call resolution
    # ------------------------------------------------------------------

    def flow(self, function_index: dict[str, list[str]]) -> None:
        if self._tree is None:
            return
        self._function_index = function_index
        module_rec = self.frames[f"{self.path}::<module>"]
        self._module_env = self._flow_block(module_rec.items, {}, module_rec)
        for frame_id, rec in self.frames.items():
            if rec.def_node is None:
                continue
            env: dict[str, set[int]] = {
                var: set(defs) for var, defs in self._module_env.items()
            }
            for param in rec.params:
                env[param] = {rec.def_node}
            self._flow_block(rec.items, env, rec)

    def _flow_block(
        self, items: list[_StmtRec], env: dict[str, set[int]], frame: _FrameRec
    ) -> dict[str, set[int]]:
        for rec in items:
            self._apply_statement(rec, env, frame)
        return env

    @staticmethod
    def _merge(*envs: dict[str, set[int]]) -> dict[str, set[int]]:
        merged: dict[str, set[int]] = {}
        for env in envs:
            for var, defs in env.items():
                merged.setdefault(var, set()).update(defs)
        return merged

    @staticmethod
    def _copy(env: dict[str, set[int]]) -> dict[str, set[int]]:
        return {var: set(defs) for var, defs in env.items()}

    def _apply_statement(
        self, rec: _StmtRec, env: dict[str, set[int]], frame: _FrameRec
    ) -> None:
        node = self.graph.nodes[rec.node_id]
        for var in rec.reads:
            for def_node in env.get(var, ()):
                self.graph.add_data_edge(def_node, rec.node_id, var)
        self._resolve_calls(rec, env, frame)
        for var in rec.writes:
            env[var] = {rec.node_id}
        node.reads = rec.reads
        node.writes = rec.writes

        blocks = {name: block for name, block in rec.blocks}
        stmt = rec.stmt
        if isinstance(stmt, ast.If):
            env_body = self._flow_block(blocks.get("body", []), self._copy(env), frame)
            env_else = self._flow_block(blocks.get("orelse", []), self._copy(env), frame)
            merged = self._merge(env, env_body, env_else)
            env.clear()
            env.update(merged)
        elif isinstance(stmt, (ast.While, ast.For, ast.AsyncFor)):
            body = blocks.get("body", [])
            env_one = self._flow_block(body, self._copy(env), frame)
            env_two = self._flow_block(body, self._merge(env, env_one), frame)
            merged = self._merge(env, env_two)
            env_orelse = self._flow_block(blocks.get("orelse", []), self._copy(merged), frame)
            merged = self._merge(merged, env_orelse)
            env.clear()
            env.update(merged)
        elif isinstance(stmt, ast.Try):
            env_body = self._flow_block(blocks.get("body", []), self._copy(env), frame)
            handler_outs = []
            for name, block in rec.blocks:
                if name != "handler":
                    continue
                handler_rec = block[0]
                env_h = self._merge(env, env_body)
                self._apply_statement_simple(handler_rec, env_h)
                env_h = self._flow_block(
                    dict(handler_rec.blocks)["body"], env_h, frame
                )
                handler_outs.append(env_h)
            env_orelse = self._flow_block(blocks.get("orelse", []), self._copy(env_body), frame)
            merged = self._merge(env, env_body, env_orelse, *handler_outs)
            env_final = self._flow_block(blocks.get("final", []), merged, frame)
            env.clear()
            env.update(env_final)
        elif isinstance(stmt, (ast.With, ast.AsyncWith, ast.ClassDef)):
            # Bodies execute unconditionally in the current environment.
            self._flow_block(blocks.get("body", []), env, frame)

    def _apply_statement_simple(self, rec: _StmtRec, env: dict[str, set[int]]) -> None:
        for var in rec.reads:
            for def_node in env.get(var, ()):
                self.graph.add_data_edge(def_node, rec.node_id, var)
        for var in rec.writes:
            env[var] = {rec.node_id}
        node = self.graph.nodes[rec.node_id]
        node.reads = rec.reads
        node.writes = rec.writes

    def _resolve_calls(
        self, rec: _StmtRec, env: dict[str, set[int]], frame: _FrameRec
    ) -> None:
        node = self.graph.nodes[rec.node_id]
        refs: list[CallRef] = []
        dynamic = False
        for call in rec.call_exprs:
            dotted = _dotted_callee(call.func)
            if dotted is None:
                dynamic = True
                refs.append(CallRef(raw="<computed>", kind="dynamic", target=""))
                continue
            resolved = self._resolve_name(dotted, env, frame)
            refs.extend(resolved)
            for ref in resolved:
                if ref.kind == "dynamic":
                    dynamic = True
                if ref.kind == "external" and ref.target in _DYNAMIC_BUILTINS:
                    dynamic = True
                if ref.kind == "internal":
                    self.graph.add_call_edge(rec.node_id, ref.target, ref.confidence)
                    target_frame = self.graph.frames[ref.target]
                    if target_frame.def_node is not None and ref.confidence == "high":
                        for param in target_frame.params:
                            self.graph.add_data_edge(
                                rec.node_id, target_frame.def_node, param
                            )
        node.calls = tuple(refs)
        if dynamic:
            node.dynamic = True

    def _resolve_name(
        self, dotted: str, env: dict[str, set[int]], frame: _FrameRec
    ) -> list[CallRef]:
        parts = dotted.split(".")
        base = parts[0]
        if len(parts) == 1:
            if base in self.functions:
                return [CallRef(raw=dotted, kind="internal", target=self.functions[base])]
            binding = frame.imports.get(base)
            if binding is not None:
                kind, target, intra = binding
                if kind == "symbol":
                    if intra is not None:
                        frame_id = f"{intra}::{target.rsplit('.', 1)[1]}"
                        if frame_id in self.graph.frames:
                            return [CallRef(raw=dotted, kind="internal", target=frame_id)]
                        return [CallRef(raw=dotted, kind="unresolved", target=target)]
                    return [CallRef(raw=dotted, kind="external", target=target)]
                return [CallRef(raw=dotted, kind="unresolved", target=target)]
            if base in env:
                # Calling through a variable: dynamic dispatch.
                refs = [CallRef(raw=dotted, kind="dynamic", target="")]
                refs.extend(self._same_name_fallback(dotted, base))
                return refs
            return [CallRef(raw=dotted, kind="external", target=base)]
        binding = frame.imports.get(base)
        if binding is not None:
            kind, target, intra = binding
            rest = parts[1:]
            if intra is not None and kind == "module":
                frame_id = f"{intra}::{'.'.join(rest)}"
                if frame_id in self.graph.frames:
                    return [CallRef(raw=dotted, kind="internal", target=frame_id)]
                return [CallRef(raw=dotted, kind="unresolved", target=dotted)]
            if kind == "module":
                return [CallRef(raw=dotted, kind="external", target=".".join([target] + rest))]
            return [CallRef(raw=dotted, kind="external", target=".".join([target] + rest))]
        if base in env:
            # Method call on a runtime object: fall back to same-named functions.
            refs = [CallRef(raw=dotted, kind="unresolved", target=dotted)]
            refs.extend(self._same_name_fallback(dotted, parts[-1]))
            return refs
        return [CallRef(raw=dotted, kind="external", target=dotted)]

    def _same_name_fallback(self, raw: str, simple_name: str) -> list[CallRef]:
        refs = []
        for frame_id in self._function_index.get(simple_name, []):
            refs.append(
                CallRef(raw=raw, kind="internal", target=frame_id, confidence="low")
            )
        return refs
