"""Confusion-matrix metrics for detection runs.

All rates are percentages.  Degenerate denominators yield None instead
of a fabricated number: precision when no positives were predicted,
recall when no positives exist, f1 when either side is undefined.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Metrics", "compute_metrics"]


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    fpr: float | None
    fnr: float | None

    def to_dict(self) -> dict[str, object]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "fnr": self.fnr,
        }

    def rendered(self) -> dict[str, str]:
        """Two-decimal percentage strings; undefined values render n/a."""
        out: dict[str, str] = {}
        for key in ("accuracy", "precision", "recall", "f1", "fpr", "fnr"):
            value = getattr(self, key)
            out[key] = "n/a" if value is None else f"{value:.2f}"
        return out


def compute_metrics(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    """Compute accuracy, precision, recall, f1, fpr, fnr as percentages."""
    for name, value in (("tp", tp), ("fp", fp), ("fn", fn), ("tn", tn)):
        if value < 0:
            raise ValueError(f"{name} must be non-negative, got {value}")
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("confusion counts sum to zero")
    accuracy = 100.0 * (tp + tn) / total
    precision = 100.0 * tp / (tp + fp) if tp + fp > 0 else None
    recall = 100.0 * tp / (tp + fn) if tp + fn > 0 else None
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    fpr = 100.0 * fp / (fp + tn) if fp + tn > 0 else None
    fnr = 100.0 * fn / (fn + tp) if fn + tp > 0 else None
    return Metrics(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        fpr=fpr,
        fnr=fnr,
    )
