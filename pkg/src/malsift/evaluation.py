"""Batch evaluation of labeled packages against a knowledge base."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .detector import detect_package
from .embedding import TextEmbedder
from .metrics import Metrics, compute_metrics
from .model import LABELS, SensitiveApiCatalogue
from .providers import LlmProvider
from .store import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_K, KnowledgeBase

__all__ = ["EvalRow", "EvalResult", "run_evaluation", "write_csv", "CSV_COLUMNS"]

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("package_id", "label", "verdict", "responsible_slices", "wall_ms", "status")


@dataclass(frozen=True)
class EvalRow:
    """Outcome for one manifest item; errors keep a row but no verdict."""

    package_id: str
    label: str
    verdict: str
    responsible_slices: tuple[int, ...]
    wall_ms: float
    status: str
    top_sim: float | None = None


@dataclass(frozen=True)
class EvalResult:
    metrics: Metrics | None
    rows: tuple[EvalRow, ...]


def _load_eval_manifest(path: Path) -> list[tuple[Path, str]]:
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("evaluation manifest must be a JSON array")
    if not data:
        raise ValueError("evaluation manifest is empty")
    items: list[tuple[Path, str]] = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or "path" not in item or "label" not in item:
            raise ValueError(f"manifest item {i} must have 'path' and 'label'")
        label = item["label"]
        if label not in LABELS:
            raise ValueError(f"manifest item {i}: label must be one of {sorted(LABELS)}")
        pkg_path = Path(item["path"])
        if not pkg_path.is_absolute():
            pkg_path = path.parent / pkg_path
        items.append((pkg_path, label))
    return items


def run_evaluation(
    manifest_path: str | Path,
    kb: KnowledgeBase,
    provider: LlmProvider,
    embedder: TextEmbedder | None = None,
    *,
    k: int = DEFAULT_K,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    catalogue: SensitiveApiCatalogue | None = None,
    clock: Callable[[], float] | None = None,
) -> EvalResult:
    """Scan every manifest item; failed scans become error rows.

    Error rows are excluded from the confusion counts so one unreadable
    package cannot poison the metrics; they stay visible in the CSV.
    """
    now = clock or time.perf_counter
    items = _load_eval_manifest(Path(manifest_path))
    rows: list[EvalRow] = []
    tp = fp = fn = tn = 0
    for pkg_path, label in items:
        start = now()
        try:
            report = detect_package(
                pkg_path, kb, provider, embedder,
                k=k, alpha=alpha, beta=beta, catalogue=catalogue, clock=clock,
            )
        except (OSError, ValueError) as exc:
            wall_ms = (now() - start) * 1000.0
            logger.warning("%s: scan failed: %s", pkg_path, exc)
            rows.append(
                EvalRow(
                    package_id=pkg_path.name,
                    label=label,
                    verdict="",
                    responsible_slices=(),
                    wall_ms=wall_ms,
                    status=f"error: {exc}",
                )
            )
            continue
        wall_ms = (now() - start) * 1000.0
        sims = [v.scores[0].sim_total for v in report.slice_verdicts if v.scores]
        rows.append(
            EvalRow(
                package_id=report.package_id,
                label=label,
                verdict=report.package_label,
                responsible_slices=report.responsible_slices,
                wall_ms=wall_ms,
                status="ok",
                top_sim=max(sims) if sims else None,
            )
        )
        predicted = report.package_label == "malicious"
        actual = label == "malicious"
        if predicted and actual:
            tp += 1
        elif predicted and not actual:
            fp += 1
        elif not predicted and actual:
            fn += 1
        else:
            tn += 1
    scored = tp + fp + fn + tn
    metrics = compute_metrics(tp=tp, fp=fp, fn=fn, tn=tn) if scored else None
    return EvalResult(metrics=metrics, rows=tuple(rows))


def write_csv(rows: tuple[EvalRow, ...], path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.package_id,
                    row.label,
                    row.verdict,
                    ";".join(str(i) for i in row.responsible_slices),
                    f"{row.wall_ms:.3f}",
                    row.status,
                ]
            )
