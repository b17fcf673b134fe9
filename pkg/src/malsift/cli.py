"""Command-line interface.

Exit codes: 0 success (scan: benign), 3 scan found the package
malicious, 1 usage or input error, 2 internal error.  Settings resolve
as command-line flags over MALSIFT_* environment variables over the
--config JSON file over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from .detector import detect_package, render_report
from .embedding import DEFAULT_DIM, EmbeddingError, FallbackEmbedder
from .evaluation import run_evaluation, write_csv
from .model import SchemaError
from .pipeline import build_knowledge_base
from .providers import HttpProvider, LlmProvider, MockProvider, ProviderError, ReplayProvider
from .store import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_K,
    KbIntegrityError,
    load_kb,
    save_kb,
)

__all__ = ["main"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INTERNAL = 2
EXIT_MALICIOUS = 3

ENV_PREFIX = "MALSIFT_"


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this CLI reserves 2 for
    internal failures, so usage errors exit 1 instead."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Settings:
    """Layered settings: flags beat environment beats config file."""

    def __init__(self, config_path: str | None) -> None:
        self._config: dict[str, Any] = {}
        if config_path:
            raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
            if not isinstance(raw, dict):
                raise ValueError(f"{config_path}: config must be a JSON object")
            self._config = raw

    def get(self, flag_value: Any, key: str, default: Any, cast: Callable[[Any], Any]):
        if flag_value is not None:
            return flag_value
        env_value = os.environ.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            return cast(env_value)
        if key in self._config:
            return cast(self._config[key])
        return default


def _make_provider(args: argparse.Namespace, settings: _Settings) -> LlmProvider:
    replay = getattr(args, "replay", None)
    if replay:
        return ReplayProvider(Path(replay))
    url = settings.get(getattr(args, "provider_url", None), "provider_url", "", str)
    if url:
        return HttpProvider(url, model=settings.get(None, "model", "", str))
    return MockProvider()


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a JSON settings file")
    parser.add_argument("--provider-url", dest="provider_url", help="HTTP provider endpoint")
    parser.add_argument("--replay", help="path to a scripted-response replay file")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _add_retrieval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=None, help="matches to retrieve per query")
    parser.add_argument("--alpha", type=float, default=None, help="code-similarity weight")
    parser.add_argument("--beta", type=float, default=None, help="behavior-similarity weight")


def build_parser() -> _Parser:
    parser = _Parser(prog="malsift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge-base operations")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)

    kb_build = kb_sub.add_parser("build", help="build a KB from a report manifest")
    kb_build.add_argument("--manifest", required=True, help="report manifest JSON")
    kb_build.add_argument("--out", required=True, help="output KB directory")
    kb_build.add_argument("--dim", type=int, default=None, help="embedding dimension")
    _add_common(kb_build)

    kb_inspect = kb_sub.add_parser("inspect", help="print KB header and cluster summary")
    kb_inspect.add_argument("kb", help="KB directory")
    _add_common(kb_inspect)

    kb_query = kb_sub.add_parser("query", help="query a KB with a snippet")
    kb_query.add_argument("kb", help="KB directory")
    kb_query.add_argument("--snippet-file", required=True, help="file holding the code snippet")
    kb_query.add_argument(
        "--behavior",
        default=None,
        help="behavior description (defaults to the snippet text)",
    )
    _add_retrieval_flags(kb_query)
    _add_common(kb_query)

    scan = sub.add_parser("scan", help="scan one package against a KB")
    scan.add_argument("package", help="package directory or archive")
    scan.add_argument("--kb", required=True, help="KB directory")
    scan.add_argument("--json", action="store_true", help="print the report as JSON")
    _add_retrieval_flags(scan)
    _add_common(scan)

    ev = sub.add_parser("eval", help="evaluate labeled packages; write CSV and figures")
    ev.add_argument("--manifest", required=True, help="evaluation manifest JSON")
    ev.add_argument("--kb", required=True, help="KB directory")
    ev.add_argument("--out-dir", required=True, help="output directory")
    ev.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    _add_retrieval_flags(ev)
    _add_common(ev)

    audit = sub.add_parser("audit", help="expert audit operations")
    audit_sub = audit.add_subparsers(dest="audit_command", required=True)
    mark = audit_sub.add_parser("mark", help="promote an entry to expert_validated")
    mark.add_argument("entry_id", help="entry id to mark")
    mark.add_argument("status", choices=["expert_validated"], help="target audit status")
    mark.add_argument("--kb", required=True, help="KB directory")
    _add_common(mark)

    return parser


def _cmd_kb_build(args: argparse.Namespace, settings: _Settings) -> int:
    provider = _make_provider(args, settings)
    dim = settings.get(args.dim, "dim", DEFAULT_DIM, int)
    embedder = FallbackEmbedder(dim=dim)
    kb, stats = build_knowledge_base(args.manifest, provider, embedder)
    version = save_kb(kb, Path(args.out))
    print(f"kb_version: {version}")
    print(f"entries: {len(kb)}")
    for key, value in stats.to_dict().items():
        if key == "rejection_reasons":
            continue
        print(f"{key}: {value}")
    for reason in stats.rejection_reasons:
        print(f"rejected: {reason}")
    return EXIT_OK


def _cmd_kb_inspect(args: argparse.Namespace, settings: _Settings) -> int:
    kb = load_kb(Path(args.kb))
    print(f"kb_version: {kb.kb_version}")
    print(f"created_at: {kb.created_at}")
    print(f"embedder: {kb.embedder.name} dim={kb.embedder.dim} v{kb.embedder.version}")
    print(f"entries: {len(kb)}")
    print(f"clusters: {len(kb.clusters)}")
    for cluster in kb.clusters:
        predicates = ", ".join(cluster.voted_predicates) or "(no majority)"
        print(
            f"  cluster {cluster.cluster_id}: {len(cluster.member_ids)} members, "
            f"representative {cluster.representative_id}, predicates: {predicates}"
        )
    return EXIT_OK


def _cmd_kb_query(args: argparse.Namespace, settings: _Settings) -> int:
    kb = load_kb(Path(args.kb))
    snippet = Path(args.snippet_file).read_text(encoding="utf-8")
    behavior = args.behavior if args.behavior is not None else snippet
    embedder = FallbackEmbedder(dim=kb.dim_code)
    k = settings.get(args.k, "k", DEFAULT_K, int)
    alpha = settings.get(args.alpha, "alpha", DEFAULT_ALPHA, float)
    beta = settings.get(args.beta, "beta", DEFAULT_BETA, float)
    result = kb.query_topk(
        embedder.embed(snippet), embedder.embed(behavior), k=k, alpha=alpha, beta=beta
    )
    if result.warning:
        print(f"warning: {result.warning}", file=sys.stderr)
    for score in result.matches:
        print(
            f"{score.entry_id} sim_code={score.sim_code:.6f} "
            f"sim_behav={score.sim_behav:.6f} sim_total={score.sim_total:.6f}"
        )
    return EXIT_OK


def _cmd_scan(args: argparse.Namespace, settings: _Settings) -> int:
    kb = load_kb(Path(args.kb))
    provider = _make_provider(args, settings)
    k = settings.get(args.k, "k", DEFAULT_K, int)
    alpha = settings.get(args.alpha, "alpha", DEFAULT_ALPHA, float)
    beta = settings.get(args.beta, "beta", DEFAULT_BETA, float)
    report = detect_package(args.package, kb, provider, k=k, alpha=alpha, beta=beta)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(render_report(report))
    return EXIT_MALICIOUS if report.package_label == "malicious" else EXIT_OK


def _cmd_eval(args: argparse.Namespace, settings: _Settings) -> int:
    kb = load_kb(Path(args.kb))
    provider = _make_provider(args, settings)
    k = settings.get(args.k, "k", DEFAULT_K, int)
    alpha = settings.get(args.alpha, "alpha", DEFAULT_ALPHA, float)
    beta = settings.get(args.beta, "beta", DEFAULT_BETA, float)
    result = run_evaluation(args.manifest, kb, provider, k=k, alpha=alpha, beta=beta)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(result.rows, out_dir / "results.csv")
    print(f"rows: {len(result.rows)} -> {out_dir / 'results.csv'}")
    if result.metrics is not None:
        rendered = result.metrics.rendered()
        print(
            "accuracy={accuracy} precision={precision} recall={recall} f1={f1}".format(
                **rendered
            )
        )
    else:
        print("no scanned packages; metrics unavailable")
    if not args.no_figures:
        from .figures import render_figures

        for fig_path in render_figures(result.metrics, result.rows, out_dir):
            print(f"figure: {fig_path}")
    return EXIT_OK


def _cmd_audit_mark(args: argparse.Namespace, settings: _Settings) -> int:
    kb_path = Path(args.kb)
    kb = load_kb(kb_path)
    try:
        entry = kb.get(args.entry_id)
    except KeyError:
        print(f"unknown entry id: {args.entry_id}", file=sys.stderr)
        return EXIT_USAGE
    kb.upsert_entry(entry.with_audit(args.status))
    version = save_kb(kb, kb_path)
    print(f"{args.entry_id}: {args.status}")
    print(f"kb_version: {version}")
    return EXIT_OK


_COMMANDS = {
    ("kb", "build"): _cmd_kb_build,
    ("kb", "inspect"): _cmd_kb_inspect,
    ("kb", "query"): _cmd_kb_query,
    ("scan", None): _cmd_scan,
    ("eval", None): _cmd_eval,
    ("audit", "mark"): _cmd_audit_mark,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    subcommand = getattr(args, "kb_command", None) or getattr(args, "audit_command", None)
    handler = _COMMANDS[(args.command, subcommand)]
    try:
        settings = _Settings(getattr(args, "config", None))
        return handler(args, settings)
    except FileNotFoundError as exc:
        print(f"malsift: not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, ValueError, json.JSONDecodeError) as exc:
        print(f"malsift: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KbIntegrityError, ProviderError, EmbeddingError, OSError) as exc:
        print(f"malsift: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
