"""Program-graph construction and backward slicing for package sources."""

from __future__ import annotations

from .catalogue import load_catalogue
from .graph import (
    CallRef,
    Frame,
    PackageSource,
    ProgramGraph,
    SourceFile,
    StatementNode,
    load_package_source,
)
from .js_frontend import JsFileBuilder
from .python_frontend import PythonFileBuilder
from .slicing import (
    DEFAULT_MAX_STATEMENTS,
    SLICE_MODES,
    SensitiveSite,
    backward_slice,
    entry_call_path,
    locate_sensitive_calls,
)

__all__ = [
    "CallRef",
    "Frame",
    "PackageSource",
    "ProgramGraph",
    "SourceFile",
    "StatementNode",
    "load_package_source",
    "load_catalogue",
    "SensitiveSite",
    "SLICE_MODES",
    "DEFAULT_MAX_STATEMENTS",
    "backward_slice",
    "entry_call_path",
    "locate_sensitive_calls",
    "build_program_graph",
]


def build_program_graph(source: PackageSource) -> ProgramGraph:
    """Build one graph covering every parseable file in the package.

    Files are processed in path order so node ids are deterministic.
    Declaration happens for all files before any dataflow pass, so
    cross-file calls resolve no matter the file order.
    """
    graph = ProgramGraph(source.package_id)
    graph.file_language = {f.path: f.language for f in source.files}

    module_map: dict[str, str] = {}
    js_files: set[str] = set()
    for source_file in source.files:
        if source_file.language == "python":
            dotted = source_file.path[:-3].replace("/", ".")
            if dotted.endswith(".__init__"):
                dotted = dotted[: -len(".__init__")]
            elif dotted == "__init__":
                dotted = ""
            if dotted:
                module_map[dotted] = source_file.path
        else:
            js_files.add(source_file.path)

    builders: list[PythonFileBuilder | JsFileBuilder] = []
    for source_file in sorted(source.files, key=lambda s: s.path):
        is_hook = source_file.path in source.install_hook_files
        if source_file.language == "python":
            py_builder = PythonFileBuilder(graph, source_file)
            py_builder.declare(module_map, is_hook)
            builders.append(py_builder)
        else:
            js_builder = JsFileBuilder(graph, source_file)
            js_builder.declare(js_files, is_hook)
            builders.append(js_builder)

    function_index: dict[str, list[str]] = {}
    for frame_id, frame in graph.frames.items():
        if frame.def_node is not None:
            function_index.setdefault(frame.name.split(".")[-1], []).append(frame_id)
    for frame_ids in function_index.values():
        frame_ids.sort()

    for builder in builders:
        builder.flow(function_index)
    return graph
