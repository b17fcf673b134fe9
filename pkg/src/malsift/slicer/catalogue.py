"""Loader for the bundled sensitive-API catalogue."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..model import SensitiveApiCatalogue

__all__ = ["load_catalogue"]


def load_catalogue(path: str | Path | None = None) -> SensitiveApiCatalogue:
    """Load the catalogue from a JSON file, or the bundled one by default."""
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = (
            resources.files("malsift").joinpath("data/sensitive_apis.json").read_text("utf-8")
        )
    return SensitiveApiCatalogue.from_dict(json.loads(text))
