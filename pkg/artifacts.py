"""Output layout, atomic file writes and seeded random streams."""
import json
import logging
import os
import tempfile
import zlib
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)


def fork_rng(seed: int, *labels: str) -> np.random.Generator:
    """Independent generator for (seed, labels).

    Streams are keyed by stable label hashes rather than by draw order, so
    adding a fold or a method never shifts another one's randomness.
    """
    spawn_key = tuple(zlib.crc32(str(label).encode("utf-8")) for label in labels)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def atomic_write_json(path, obj: Any):
    atomic_write_text(path, to_json_text(obj))


def atomic_write_csv(path, frame: pd.DataFrame):
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


class ArtifactLayout:
    """Where every stage reads and writes inside ``output_dir``."""

    def __init__(self, output_dir):
        self.root = Path(output_dir)

    @property
    def summary_csv(self) -> Path:
        return self.root / "summary.csv"

    @property
    def folds_csv(self) -> Path:
        return self.root / "folds.csv"

    @property
    def report_json(self) -> Path:
        return self.root / "report.json"

    @property
    def report_text(self) -> Path:
        return self.root / "report.txt"

    @property
    def run_stats_json(self) -> Path:
        return self.root / "run_stats.json"

    @property
    def figures_dir(self) -> Path:
        return self.root / "figures"

    def fold_dir(self, fold_id: int) -> Path:
        return self.root / "folds" / f"fold_{fold_id}"

    def selected_features_csv(self, fold_id: int) -> Path:
        return self.fold_dir(fold_id) / "selected_features.csv"

    def fold_context_json(self, fold_id: int) -> Path:
        return self.fold_dir(fold_id) / "context.json"

    def method_dir(self, fold_id: int, method: str) -> Path:
        return self.fold_dir(fold_id) / method

    def model_json(self, fold_id: int, method: str) -> Path:
        return self.method_dir(fold_id, method) / "model.json"

    def metrics_json(self, fold_id: int, method: str) -> Path:
        return self.method_dir(fold_id, method) / "metrics.json"

    def checklist_text(self, fold_id: int, method: str) -> Path:
        return self.method_dir(fold_id, method) / "checklist.txt"

    def scores_csv(self, fold_id: int, method: str) -> Path:
        return self.method_dir(fold_id, method) / "test_scores.csv"

    def mip_lp(self, fold_id: int) -> Path:
        return self.fold_dir(fold_id) / "checklist_mip.lp"

    def trained_methods(self) -> Iterable[str]:
        """Method labels with a metrics file in every fold directory that exists."""
        fold_dirs = sorted((self.root / "folds").glob("fold_*"))
        if not fold_dirs:
            return []
        per_fold = [
            {p.parent.name for p in fold_dir.glob("*/metrics.json")}
            for fold_dir in fold_dirs
        ]
        return sorted(set.intersection(*per_fold))

    def fold_ids(self):
        return sorted(int(p.name.split("_", 1)[1]) for p in (self.root / "folds").glob("fold_*"))
