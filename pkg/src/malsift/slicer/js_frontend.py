"""JavaScript frontend: logical lines into program-graph nodes and edges.

This is a line-oriented reader, not a full parser.  A logical statement
is one physical line plus any continuation lines absorbed while round or
square brackets stay open (so a multi-line callback argument collapses
into the single call statement that owns it) or while an object/array
literal brace opened after '=', '(', '[', ',', ':', or 'return' is still
unclosed.  Braces that open if/else/loop/try/catch/function blocks are
scope delimiters, never absorbed.  Dataflow uses the same may-reach
environment algebra as the Python frontend.
"""

from __future__ import annotations

import logging
import posixpath
import re
from dataclasses import dataclass, field

from .graph import CallRef, Frame, ProgramGraph, SourceFile, StatementNode

__all__ = ["JsFileBuilder"]

logger = logging.getLogger(__name__)

_IDENT_RE = re.compile(r"[A-Za-z_$][\w$]*")

_KEYWORDS = {
    "await", "async", "break", "case", "catch", "class", "const", "continue",
    "debugger", "default", "delete", "do", "else", "export", "extends",
    "false", "finally", "for", "from", "function", "if", "import", "in",
    "instanceof", "let", "new", "null", "of", "return", "static", "super",
    "switch", "this", "throw", "true", "try", "typeof", "undefined", "var",
    "void", "while", "with", "yield",
}

_CALL_SKIP = _KEYWORDS | {"require"}

_DYNAMIC_CALLEES = {"eval", "Function"}

_CALL_RE = re.compile(r"(?<![\w$.])(?:new\s+)?([A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)*)\s*\(")
_DECL_RE = re.compile(r"\b(?:const|let|var)\s+([^=;]+?)\s*(?:=(?![=>])|;|$)")
_ASSIGN_RE = re.compile(
    r"(?<![\w$.])([A-Za-z_$][\w$]*)\s*(?:\+=|-=|\*=|/=|%=|&&=|\|\|=|\?\?=|=(?![=>]))"
)
_COMPOUND_RE = re.compile(r"(?<![\w$.])([A-Za-z_$][\w$]*)\s*(?:\+=|-=|\*=|/=|%=|\+\+|--)")
_INCR_PREFIX_RE = re.compile(r"(?:\+\+|--)\s*([A-Za-z_$][\w$]*)")

_REQ_DESTRUCTURE_RE = re.compile(
    r"(?:const|let|var)\s*\{([^}]*)\}\s*=\s*require\(\s*(['\"])([^'\"]+)\2\s*\)"
)
_REQ_ALIAS_RE = re.compile(
    r"(?:const|let|var)\s+([A-Za-z_$][\w$]*)\s*=\s*require\(\s*(['\"])([^'\"]+)\2\s*\)"
)
_IMPORT_NS_RE = re.compile(r"import\s*\*\s*as\s+([A-Za-z_$][\w$]*)\s+from\s*(['\"])([^'\"]+)\2")
_IMPORT_NAMED_RE = re.compile(r"import\s*\{([^}]*)\}\s*from\s*(['\"])([^'\"]+)\2")
_IMPORT_DEFAULT_RE = re.compile(r"import\s+([A-Za-z_$][\w$]*)\s+from\s*(['\"])([^'\"]+)\2")

_FUNC_DECL_RE = re.compile(
    r"^(?:export\s+)?(?:default\s+)?(?:async\s+)?function\s*\*?\s*"
    r"([A-Za-z_$][\w$]*)\s*\(([^)]*)\)"
)
_FUNC_EXPR_RE = re.compile(
    r"^(?:export\s+)?(?:const|let|var)\s+([A-Za-z_$][\w$]*)\s*=\s*(?:async\s*)?"
    r"(?:function\s*\*?\s*\(([^)]*)\)|\(([^)]*)\)\s*=>|([A-Za-z_$][\w$]*)\s*=>)"
)

_ME_ASSIGN_RE = re.compile(r"module\.exports\s*=\s*([^;\n]+)")
_ME_PROP_RE = re.compile(
    r"(?:module\.exports|exports)\.([A-Za-z_$][\w$]*)\s*=\s*([A-Za-z_$][\w$]*)?"
)
_EXPORT_DECL_RE = re.compile(
    r"\bexport\s+(?:default\s+)?(?:async\s+)?(?:function|const|let|var|class)\s+"
    r"([A-Za-z_$][\w$]*)"
)


def _strip_file(text: str) -> tuple[str, str]:
    """Return (code, structure): code blanks comments, structure also
    blanks string contents.  Both keep the original length and newlines."""
    code = list(text)
    struct = list(text)
    state = "normal"
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        nxt = text[i + 1] if i + 1 < n else ""
        if state == "normal":
            if ch == "/" and nxt == "/":
                state = "line_comment"
                code[i] = struct[i] = " "
            elif ch == "/" and nxt == "*":
                state = "block_comment"
                code[i] = struct[i] = " "
            elif ch in "'\"`":
                state = ch
        elif state == "line_comment":
            if ch == "\n":
                state = "normal"
            else:
                code[i] = struct[i] = " "
        elif state == "block_comment":
            if ch == "*" and nxt == "/":
                code[i] = struct[i] = " "
                if i + 1 < n:
                    code[i + 1] = struct[i + 1] = " "
                i += 2
                state = "normal"
                continue
            if ch != "\n":
                code[i] = struct[i] = " "
        else:  # inside a string literal; state holds the quote char
            if ch == "\\":
                struct[i] = " "
                if i + 1 < n and text[i + 1] != "\n":
                    struct[i + 1] = " "
                i += 2
                continue
            if ch == state:
                state = "normal"
            elif ch != "\n":
                struct[i] = " "
        i += 1
    return "".join(code), "".join(struct)


def _pattern_names(pattern: str) -> list[str]:
    """Declared names from a binding pattern (plain, object, or array)."""
    pattern = pattern.strip()
    names: list[str] = []
    if pattern.startswith("{") or pattern.startswith("["):
        inner = pattern.strip("{}[] \t")
        for item in inner.split(","):
            item = item.strip()
            if not item:
                continue
            if ":" in item:
                item = item.split(":", 1)[1]
            item = item.split("=", 1)[0].strip().lstrip(". ")
            if _IDENT_RE.fullmatch(item):
                names.append(item)
        return names
    for item in pattern.split(","):
        item = item.split("=", 1)[0].strip()
        if _IDENT_RE.fullmatch(item) and item not in _KEYWORDS:
            names.append(item)
    return names


def _param_names(params: str) -> tuple[str, ...]:
    names: list[str] = []
    for item in params.split(","):
        item = item.split("=", 1)[0].strip().strip("{}[] ")
        if _IDENT_RE.fullmatch(item) and item not in _KEYWORDS:
            names.append(item)
    return tuple(names)


def _object_key_positions(struct: str) -> set[int]:
    """Start offsets of identifiers in object-key position ({k: or ,k:)."""
    positions: set[int] = set()
    for match in _IDENT_RE.finditer(struct):
        start, end = match.span()
        before = struct[:start].rstrip()
        after = struct[end:].lstrip()
        if before.endswith(("{", ",")) and after.startswith(":"):
            positions.add(start)
    return positions


@dataclass
class _JsRec:
    node_id: int
    kind: str
    struct: str
    reads: tuple[str, ...] = ()
    writes: tuple[str, ...] = ()
    compound_reads: tuple[str, ...] = ()
    call_names: tuple[str, ...] = ()
    blocks: list[tuple[str, list["_JsRec"]]] = field(default_factory=list)


@dataclass
class _FrameRec:
    frame_id: str
    items: list[_JsRec]
    params: tuple[str, ...]
    def_node: int | None


@dataclass
class _OpenBlock:
    owner: _JsRec | None
    role: str
    items: list[_JsRec]
    control: int | None
    frame_id: str


class JsFileBuilder:
    """Two-phase builder mirroring the Python frontend's structure."""

    def __init__(self, graph: ProgramGraph, source: SourceFile) -> None:
        self.graph = graph
        self.source = source
        self.path = source.path
        self.frames: dict[str, _FrameRec] = {}
        self.functions: dict[str, str] = {}
        self.bindings: dict[str, tuple[str, str, str | None]] = {}
        self.exported_names: set[str] = set()
        self._outer_control: dict[int, int | None] = {}
        self._module_env: dict[str, set[int]] = {}
        self._declared = False

    # ------------------------------------------------------------------
    # Phase 1
    # ------------------------------------------------------------------

    def declare(self, file_map: set[str], is_install_hook: bool) -> None:
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
        module_rec = _FrameRec(module_frame_id, [], (), None)
        self.frames[module_frame_id] = module_rec
        if self.source.opaque:
            self._emit_opaque()
            return
        self._file_map = file_map
        code, struct = _strip_file(self.source.text)
        self._scan_exports(code)
        statements = self._logical_statements(code.splitlines(), struct.splitlines())
        self._build_tree(statements, module_rec)
        self._declared = True

    def _emit_opaque(self) -> None:
        node = StatementNode(
            node_id=len(self.graph.nodes),
            file=self.path,
            line=1,
            kind="opaque",
            source="<opaque: file is undecodable or minified>",
            frame_id=f"{self.path}::<module>",
            dynamic=True,
        )
        self.graph.add_node(node)

    def _scan_exports(self, code: str) -> None:
        for match in _ME_ASSIGN_RE.finditer(code):
            for ident in _IDENT_RE.findall(match.group(1)):
                if ident not in _KEYWORDS:
                    self.exported_names.add(ident)
        for match in _ME_PROP_RE.finditer(code):
            self.exported_names.add(match.group(2) or match.group(1))
        for match in _EXPORT_DECL_RE.finditer(code):
            self.exported_names.add(match.group(1))

    @staticmethod
    def _depth_state(struct_text: str) -> tuple[int, int]:
        """(round+square depth, open literal-brace count) for absorption."""
        depth = 0
        literal = 0
        brace_stack: list[bool] = []
        for i, ch in enumerate(struct_text):
            if ch in "([":
                depth += 1
            elif ch in ")]":
                depth = max(0, depth - 1)
            elif ch == "{":
                before = struct_text[:i].rstrip()
                is_literal = depth > 0 or before.endswith(("=", "(", "[", ",", ":", "return"))
                brace_stack.append(is_literal)
                if is_literal:
                    literal += 1
            elif ch == "}":
                if brace_stack and brace_stack.pop():
                    literal -= 1
        return depth, literal

    def _logical_statements(
        self, code_lines: list[str], struct_lines: list[str]
    ) -> list[tuple[int, str, str]]:
        statements: list[tuple[int, str, str]] = []
        i = 0
        while i < len(code_lines):
            if not struct_lines[i].strip():
                i += 1
                continue
            first = i
            buf_code = [code_lines[i]]
            buf_struct = [struct_lines[i]]
            while i + 1 < len(code_lines):
                depth, literal = self._depth_state("\n".join(buf_struct))
                if depth <= 0 and literal <= 0:
                    break
                i += 1
                buf_code.append(code_lines[i])
                buf_struct.append(struct_lines[i])
            statements.append((first + 1, "\n".join(buf_code), "\n".join(buf_struct)))
            i += 1
        return statements

    def _classify(self, struct: str) -> str:
        head = struct.lstrip()
        if head.startswith(("import ", "import{", "import*")) or "require(" in struct:
            return "import"
        if head.startswith(("module.exports", "exports.", "export ")):
            return "export"
        first = _IDENT_RE.match(head)
        word = first.group(0) if first else ""
        if word == "if" or word == "switch":
            return "condition"
        if word in ("for", "while", "do"):
            return "loop"
        if word == "try":
            return "try"
        if word == "return":
            return "return"
        if _FUNC_DECL_RE.match(head) or _FUNC_EXPR_RE.match(head):
            return "def"
        if _DECL_RE.search(struct) or _ASSIGN_RE.search(struct):
            return "assign"
        if _CALL_RE.search(struct):
            return "call"
        return "statement"

    def _new_node(self, line: int, kind: str, code: str, frame_id: str) -> int:
        node = StatementNode(
            node_id=len(self.graph.nodes),
            file=self.path,
            line=line,
            kind=kind,
            source=code.strip(),
            frame_id=frame_id,
        )
        return self.graph.add_node(node)

    def _analyze(self, rec: _JsRec, is_def: bool, declared: list[str]) -> None:
        struct = rec.struct
        if is_def:
            return
        key_positions = _object_key_positions(struct)
        plain_writes = set(declared)
        compound: set[str] = set()
        for match in _ASSIGN_RE.finditer(struct):
            op_region = struct[match.start() : match.end()]
            name = match.group(1)
            if name in _KEYWORDS:
                continue
            if re.search(r"(?:\+=|-=|\*=|/=|%=|&&=|\|\|=|\?\?=)", op_region):
                compound.add(name)
            else:
                plain_writes.add(name)
        for match in _COMPOUND_RE.finditer(struct):
            if match.group(1) not in _KEYWORDS:
                compound.add(match.group(1))
        for match in _INCR_PREFIX_RE.finditer(struct):
            if match.group(1) not in _KEYWORDS:
                compound.add(match.group(1))

        reads: set[str] = set()
        for match in _IDENT_RE.finditer(struct):
            name = match.group(0)
            if name in _KEYWORDS:
                continue
            start = match.start()
            before = struct[:start].rstrip()
            if before.endswith("."):
                continue
            if start in key_positions:
                continue
            reads.add(name)
        # A plainly assigned name is a kill, not a read; compound ops read.
        reads -= plain_writes - compound

        calls: list[str] = []
        for match in _CALL_RE.finditer(struct):
            dotted = match.group(1)
            base = dotted.split(".")[0]
            if base in _CALL_SKIP:
                continue
            calls.append(dotted)

        rec.reads = tuple(sorted(reads | compound))
        rec.writes = tuple(sorted(plain_writes | compound))
        rec.compound_reads = tuple(sorted(compound))
        rec.call_names = tuple(calls)

    def _record_bindings(self, code: str) -> None:
        for match in _REQ_DESTRUCTURE_RE.finditer(code):
            items, _, module = match.group(1), match.group(2), match.group(3)
            intra = self._resolve_intra(module)
            for item in items.split(","):
                item = item.strip()
                if not item:
                    continue
                if ":" in item:
                    key, alias = (part.strip() for part in item.split(":", 1))
                else:
                    key = alias = item.split("=", 1)[0].strip()
                if _IDENT_RE.fullmatch(alias):
                    self.bindings[alias] = ("symbol", f"{module}.{key}", intra)
        for match in _REQ_ALIAS_RE.finditer(code):
            alias, _, module = match.group(1), match.group(2), match.group(3)
            self.bindings[alias] = ("module", module, self._resolve_intra(module))
        for match in _IMPORT_NS_RE.finditer(code):
            alias, _, module = match.group(1), match.group(2), match.group(3)
            self.bindings[alias] = ("module", module, self._resolve_intra(module))
        for match in _IMPORT_NAMED_RE.finditer(code):
            items, _, module = match.group(1), match.group(2), match.group(3)
            intra = self._resolve_intra(module)
            for item in items.split(","):
                item = item.strip()
                if not item:
                    continue
                if " as " in item:
                    key, alias = (part.strip() for part in item.split(" as ", 1))
                else:
                    key = alias = item
                if _IDENT_RE.fullmatch(alias):
                    self.bindings[alias] = ("symbol", f"{module}.{key}", intra)
        for match in _IMPORT_DEFAULT_RE.finditer(code):
            alias, _, module = match.group(1), match.group(2), match.group(3)
            self.bindings.setdefault(alias, ("module", module, self._resolve_intra(module)))

    def _resolve_intra(self, module: str) -> str | None:
        if not module.startswith("."):
            return None
        base = posixpath.normpath(posixpath.join(posixpath.dirname(self.path), module))
        for candidate in (base, f"{base}.js", f"{base}.mjs", f"{base}.cjs",
                          posixpath.join(base, "index.js")):
            if candidate in self._file_map:
                return candidate
        return None

    def _build_tree(self, statements: list[tuple[int, str, str]], module_rec: _FrameRec) -> None:
        module_frame_id = module_rec.frame_id
        stack: list[_OpenBlock] = [
            _OpenBlock(None, "module", module_rec.items, None, module_frame_id)
        ]
        for line, code, struct in statements:
            flat = " ".join(struct.split())
            top = stack[-1]

            if flat.startswith("}"):
                closed = stack.pop() if len(stack) > 1 else stack[0]
                if closed.owner is not None and closed is not stack[0]:
                    closed.owner.blocks.append((closed.role, closed.items))
                rest = flat[1:].strip().rstrip(";").strip()
                if not rest:
                    continue
                outer = stack[-1]
                if rest.startswith("else if") and closed.owner is not None:
                    cond_struct = rest[len("else"):].strip().rstrip("{").strip()
                    node_id = self._new_node(line, "condition", code.strip("} \t"), outer.frame_id)
                    self.graph.add_control_edge(closed.owner.node_id, node_id)
                    rec = _JsRec(node_id, "condition", cond_struct)
                    self._analyze(rec, False, [])
                    orelse: list[_JsRec] = [rec]
                    closed.owner.blocks.append(("orelse", orelse))
                    stack.append(_OpenBlock(rec, "body", [], node_id, outer.frame_id))
                elif rest.startswith("else") and closed.owner is not None:
                    stack.append(
                        _OpenBlock(closed.owner, "orelse", [], closed.owner.node_id, outer.frame_id)
                    )
                elif rest.startswith("catch") and closed.owner is not None:
                    try_rec = closed.owner
                    node_id = self._new_node(line, "handler", code.strip("} \t"), outer.frame_id)
                    self.graph.add_control_edge(try_rec.node_id, node_id)
                    handler = _JsRec(node_id, "handler", rest)
                    param = re.search(r"catch\s*\(\s*([A-Za-z_$][\w$]*)", rest)
                    if param:
                        handler.writes = (param.group(1),)
                    try_rec.blocks.append(("handler", [handler]))
                    stack.append(_OpenBlock(handler, "body", [], node_id, outer.frame_id))
                elif rest.startswith("finally") and closed.owner is not None:
                    try_rec = closed.owner
                    control = self._outer_control.get(try_rec.node_id)
                    stack.append(_OpenBlock(try_rec, "final", [], control, outer.frame_id))
                continue

            opens_block = flat.endswith("{") and self._depth_state(struct)[0] <= 0
            kind = self._classify(struct)
            self._record_bindings(code)

            if opens_block and kind == "def":
                decl = _FUNC_DECL_RE.match(flat)
                expr = _FUNC_EXPR_RE.match(flat)
                if decl:
                    name = decl.group(1)
                    params = _param_names(decl.group(2))
                else:
                    name = expr.group(1)
                    params = _param_names(expr.group(2) or expr.group(3) or expr.group(4) or "")
                node_id = self._new_node(line, "def", code.splitlines()[0], top.frame_id)
                if top.control is not None:
                    self.graph.add_control_edge(top.control, node_id)
                rec = _JsRec(node_id, "def", flat, writes=(name,))
                top.items.append(rec)
                frame_id = f"{self.path}::{name}"
                while frame_id in self.graph.frames:
                    frame_id += "'"
                at_module_level = top.frame_id == module_frame_id
                self.graph.add_frame(
                    Frame(
                        frame_id=frame_id,
                        file=self.path,
                        name=name,
                        def_node=node_id,
                        params=params,
                        exported=at_module_level and name in self.exported_names,
                    )
                )
                func_rec = _FrameRec(frame_id, [], params, node_id)
                self.frames[frame_id] = func_rec
                self.functions.setdefault(name, frame_id)
                stack.append(_OpenBlock(None, "funcbody", func_rec.items, node_id, frame_id))
                continue

            node_id = self._new_node(line, kind, code, top.frame_id)
            rec = _JsRec(node_id, kind, struct)
            declared: list[str] = []
            for match in _DECL_RE.finditer(struct):
                declared.extend(_pattern_names(match.group(1)))
            self._analyze(rec, False, declared)
            top.items.append(rec)
            if top.control is not None:
                self.graph.add_control_edge(top.control, node_id)

            if opens_block:
                if kind == "try":
                    self._outer_control[node_id] = top.control
                    stack.append(_OpenBlock(rec, "body", [], top.control, top.frame_id))
                elif kind in ("condition", "loop"):
                    stack.append(_OpenBlock(rec, "body", [], node_id, top.frame_id))
                else:
                    stack.append(_OpenBlock(rec, "body", [], top.control, top.frame_id))

    # ------------------------------------------------------------------
    # Phase 2
    # ------------------------------------------------------------------

    def flow(self, function_index: dict[str, list[str]]) -> None:
        if not self._declared:
            return
        self._function_index = function_index
        module_rec = self.frames[f"{self.path}::<module>"]
        self._module_env = self._flow_block(module_rec.items, {})
        for frame_id, rec in self.frames.items():
            if rec.def_node is None:
                continue
            env = {var: set(defs) for var, defs in self._module_env.items()}
            for param in rec.params:
                env[param] = {rec.def_node}
            self._flow_block(rec.items, env)

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

    def _flow_block(
        self, items: list[_JsRec], env: dict[str, set[int]]
    ) -> dict[str, set[int]]:
        for rec in items:
            self._apply(rec, env)
        return env

    def _apply(self, rec: _JsRec, env: dict[str, set[int]]) -> None:
        node = self.graph.nodes[rec.node_id]
        for var in rec.reads:
            for def_node in env.get(var, ()):
                self.graph.add_data_edge(def_node, rec.node_id, var)
        self._resolve_calls(rec, env)
        for var in rec.writes:
            env[var] = {rec.node_id}
        node.reads = rec.reads
        node.writes = rec.writes

        blocks = {name: block for name, block in rec.blocks}
        if rec.kind == "condition":
            env_body = self._flow_block(blocks.get("body", []), self._copy(env))
            env_else = self._flow_block(blocks.get("orelse", []), self._copy(env))
            merged = self._merge(env, env_body, env_else)
            env.clear()
            env.update(merged)
        elif rec.kind == "loop":
            body = blocks.get("body", [])
            env_one = self._flow_block(body, self._copy(env))
            env_two = self._flow_block(body, self._merge(env, env_one))
            merged = self._merge(env, env_two)
            env.clear()
            env.update(merged)
        elif rec.kind == "try":
            env_body = self._flow_block(blocks.get("body", []), self._copy(env))
            handler_outs = []
            for name, block in rec.blocks:
                if name != "handler":
                    continue
                handler = block[0]
                env_h = self._merge(env, env_body)
                self._apply(handler, env_h)
                handler_outs.append(env_h)
            merged = self._merge(env, env_body, *handler_outs)
            env_final = self._flow_block(blocks.get("final", []), merged)
            env.clear()
            env.update(env_final)
        elif rec.kind == "handler":
            self._flow_block(blocks.get("body", []), env)
        elif rec.kind == "def":
            pass
        elif rec.blocks:
            for _, block in rec.blocks:
                self._flow_block(block, env)

    def _resolve_calls(self, rec: _JsRec, env: dict[str, set[int]]) -> None:
        if not rec.call_names:
            return
        node = self.graph.nodes[rec.node_id]
        refs: list[CallRef] = []
        dynamic = False
        for dotted in rec.call_names:
            resolved = self._resolve_name(dotted, env)
            refs.extend(resolved)
            for ref in resolved:
                if ref.kind == "dynamic":
                    dynamic = True
                if ref.kind == "external" and ref.target.split(".")[-1] in _DYNAMIC_CALLEES:
                    dynamic = True
                if ref.kind == "internal":
                    self.graph.add_call_edge(rec.node_id, ref.target, ref.confidence)
                    target_frame = self.graph.frames[ref.target]
                    if target_frame.def_node is not None and ref.confidence == "high":
                        for param in target_frame.params:
                            self.graph.add_data_edge(rec.node_id, target_frame.def_node, param)
        node.calls = tuple(refs)
        if dynamic:
            node.dynamic = True

    def _resolve_name(self, dotted: str, env: dict[str, set[int]]) -> list[CallRef]:
        parts = dotted.split(".")
        base = parts[0]
        if len(parts) == 1:
            if base in self.functions:
                return [CallRef(raw=dotted, kind="internal", target=self.functions[base])]
            binding = self.bindings.get(base)
            if binding is not None:
                kind, target, intra = binding
                if kind == "symbol":
                    if intra is not None:
                        frame_id = f"{intra}::{target.rsplit('.', 1)[1]}"
                        if frame_id in self.graph.frames:
                            return [CallRef(raw=dotted, kind="internal", target=frame_id)]
                        return [CallRef(raw=dotted, kind="unresolved", target=target)]
                    return [CallRef(raw=dotted, kind="external", target=target)]
                return [CallRef(raw=dotted, kind="external", target=target)]
            if base in env:
                refs = [CallRef(raw=dotted, kind="dynamic", target="")]
                refs.extend(self._same_name_fallback(dotted, base))
                return refs
            return [CallRef(raw=dotted, kind="external", target=base)]
        binding = self.bindings.get(base)
        if binding is not None:
            kind, target, intra = binding
            rest = parts[1:]
            if intra is not None and kind == "module":
                frame_id = f"{intra}::{'.'.join(rest)}"
                if frame_id in self.graph.frames:
                    return [CallRef(raw=dotted, kind="internal", target=frame_id)]
                return [CallRef(raw=dotted, kind="unresolved", target=dotted)]
            return [CallRef(raw=dotted, kind="external", target=".".join([target] + rest))]
        if base in env:
            refs = [CallRef(raw=dotted, kind="unresolved", target=dotted)]
            refs.extend(self._same_name_fallback(dotted, parts[-1]))
            return refs
        return [CallRef(raw=dotted, kind="external", target=dotted)]

    def _same_name_fallback(self, raw: str, simple_name: str) -> list[CallRef]:
        refs = []
        for frame_id in self._function_index.get(simple_name, []):
            refs.append(CallRef(raw=raw, kind="internal", target=frame_id, confidence="low"))
        return refs
