"""Patient time-series ingestion: PSV parsing, per-patient summaries, folds."""
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from artifacts import fork_rng
from checklist import FeatureMatrix
from errors import ConfigurationError, DataError, FormatError, StructuralError

log = logging.getLogger(__name__)

LABEL_COLUMN = "SepsisLabel"
MISSING_MARKER = "NaN"
STATIC_VARIABLES = ("Age", "Gender", "Unit1", "Unit2")
# ICU length-of-stay and admission offset; they encode outcome timing.
TIMING_VARIABLES = ("ICULOS", "HospAdmTime")
MAX_FAILED_FRACTION = 0.10


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    variable_names: Tuple[str, ...]
    hourly_values: np.ndarray
    sepsis_labels: np.ndarray
    unparseable_cells: int = 0

    @property
    def n_hours(self) -> int:
        return self.hourly_values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.hourly_values[:, self.variable_names.index(name)]


@dataclass(frozen=True)
class SummaryRow:
    patient_id: str
    features: Dict[str, float]
    label: int


@dataclass(frozen=True)
class FoldSpec:
    n_folds: int = 5
    fold_size: int = 2200
    target_pos_fraction: float = 0.37
    seed: int = 7

    def __post_init__(self):
        if not 0 < self.target_pos_fraction < 1:
            raise ConfigurationError("target_pos_fraction must lie strictly between 0 and 1")
        if self.n_folds < 1 or self.fold_size < 1:
            raise ConfigurationError("need n_folds >= 1 and fold_size >= 1")

    @property
    def n_pos(self) -> int:
        return int(np.floor(self.fold_size * self.target_pos_fraction + 0.5))

    @property
    def n_neg(self) -> int:
        return self.fold_size - self.n_pos


@dataclass
class ImputeStats:
    input_names: Tuple[str, ...]
    kept_names: Tuple[str, ...]
    means: np.ndarray
    dropped: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self):
        return {
            "input_names": list(self.input_names),
            "kept_names": list(self.kept_names),
            "means": [float(m) for m in self.means],
            "dropped": list(self.dropped),
        }


def parse_psv(content: bytes, patient_id: str = "") -> PatientRecord:
    if not content or not content.strip():
        raise FormatError(f"patient file {patient_id or '<bytes>'} is empty")
    try:
        frame = pd.read_csv(io.BytesIO(content), sep="|", dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot parse patient file {patient_id}: {e}") from None
    frame.columns = [c.strip() for c in frame.columns]
    if LABEL_COLUMN not in frame.columns:
        raise FormatError(f"patient file {patient_id} has no {LABEL_COLUMN} column")
    if frame.empty:
        raise FormatError(f"patient file {patient_id} has a header but no rows")

    raw = frame.apply(lambda col: col.str.strip())
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    declared_missing = raw.isin(("", MISSING_MARKER, "nan"))
    bad = numeric.isna() & ~declared_missing
    unparseable = int(bad.to_numpy().sum())
    if unparseable:
        log.warning(f"{patient_id}: {unparseable} unparseable cell(s) read as missing")

    labels = numeric[LABEL_COLUMN].fillna(0).to_numpy()
    variables = tuple(c for c in frame.columns if c != LABEL_COLUMN)
    return PatientRecord(
        patient_id=patient_id,
        variable_names=variables,
        hourly_values=numeric[list(variables)].to_numpy(dtype=np.float64),
        sepsis_labels=(labels > 0).astype(np.int8),
        unparseable_cells=unparseable,
    )


def summarize_series(values: np.ndarray) -> Tuple[float, float, float]:
    """(mean, population sd, last) over the non-missing entries; NaNs if none."""
    observed = values[~np.isnan(values)]
    if observed.size == 0:
        return (np.nan, np.nan, np.nan)
    return (float(observed.mean()), float(observed.std()), float(observed[-1]))


def summarize_patient(record: PatientRecord, include_timing: bool = False) -> SummaryRow:
    features: Dict[str, float] = {}
    for j, name in enumerate(record.variable_names):
        if name in TIMING_VARIABLES and not include_timing:
            continue
        mean, sd, last = summarize_series(record.hourly_values[:, j])
        if name in STATIC_VARIABLES or name in TIMING_VARIABLES:
            features[name] = last
        else:
            features[f"{name}_mean"] = mean
            features[f"{name}_sd"] = sd
            features[f"{name}_last"] = last
    label = int(record.sepsis_labels.max()) if record.sepsis_labels.size else 0
    return SummaryRow(record.patient_id, features, label)


def _load_one(path: Path, include_timing: bool) -> SummaryRow:
    return summarize_patient(parse_psv(path.read_bytes(), patient_id=path.stem), include_timing)


def load_patient_dir(data_dir, n_workers: int = 1, include_timing: bool = False) -> List[SummaryRow]:
    paths = sorted(Path(data_dir).glob("*.psv"))
    if not paths:
        raise ConfigurationError(f"no .psv patient files in {data_dir}")
    log.info(f"Parsing {len(paths)} patient files from {data_dir}")

    def work(path):
        try:
            return _load_one(path, include_timing), None
        except (FormatError, OSError) as e:
            log.warning(f"Skipping {path.name}: {e}")
            return None, path.name

    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        results = list(pool.map(work, paths))

    rows = [row for row, _ in results if row is not None]
    failed = [name for _, name in results if name is not None]
    if failed:
        log.warning(f"{len(failed)} unreadable file(s): {', '.join(failed[:10])}")
        if len(failed) > MAX_FAILED_FRACTION * len(paths):
            raise DataError(f"{len(failed)} of {len(paths)} patient files failed to parse")
    log.info(f"Summarized {len(rows)} patients")
    return rows


def summaries_to_frame(rows: Sequence[SummaryRow]) -> pd.DataFrame:
    columns: Dict[str, None] = {}
    for row in rows:
        for name in row.features:
            columns.setdefault(name, None)
    records = [
        {"patient_id": row.patient_id, **{c: row.features.get(c, np.nan) for c in columns}, "y": row.label}
        for row in rows
    ]
    return pd.DataFrame.from_records(records, columns=["patient_id", *columns, "y"])


def build_folds(rows: Sequence[SummaryRow], spec: FoldSpec) -> List[List[str]]:
    positives = sorted(row.patient_id for row in rows if row.label == 1)
    negatives = sorted(row.patient_id for row in rows if row.label == 0)
    need_neg = spec.n_folds * spec.n_neg
    shortfall = []
    if len(positives) < spec.n_pos:
        shortfall.append(f"{spec.n_pos} positives per fold but only {len(positives)} available")
    if len(negatives) < need_neg:
        shortfall.append(f"{need_neg} negatives across folds but only {len(negatives)} available")
    if shortfall:
        raise ConfigurationError("not enough patients for the fold spec: " + "; ".join(shortfall))

    # Negatives are disjoint across folds; positives are redrawn for each fold.
    neg_order = fork_rng(spec.seed, "folds", "negatives").permutation(len(negatives))
    folds = []
    for f in range(spec.n_folds):
        neg_idx = neg_order[f * spec.n_neg:(f + 1) * spec.n_neg]
        pos_idx = fork_rng(spec.seed, "folds", "positives", str(f)).choice(
            len(positives), size=spec.n_pos, replace=False
        )
        members = [negatives[i] for i in neg_idx] + [positives[i] for i in pos_idx]
        folds.append(sorted(members))
    log.info(f"Built {spec.n_folds} folds of {spec.fold_size} ({spec.n_pos} positive each)")
    return folds


def split_fold(
    patient_ids: Sequence[str],
    labels: Dict[str, int],
    test_fraction: float,
    rng: np.random.Generator,
) -> Tuple[List[str], List[str]]:
    """Stratified train/test split of one fold."""
    members = sorted(patient_ids)
    try:
        train, test = train_test_split(
            members,
            test_size=test_fraction,
            stratify=[labels[pid] for pid in members],
            random_state=int(rng.integers(2 ** 31)),
        )
    except ValueError as e:
        raise ConfigurationError(f"cannot split a fold of {len(members)} patients: {e}") from None
    return sorted(train), sorted(test)


def fold_manifest(folds: Sequence[Sequence[str]], labels: Dict[str, int], test_fraction: float, seed: int) -> pd.DataFrame:
    records = []
    for fold_id, members in enumerate(folds):
        train, test = split_fold(members, labels, test_fraction, fork_rng(seed, "split", str(fold_id)))
        records.extend({"fold_id": fold_id, "patient_id": pid, "split": "train"} for pid in train)
        records.extend({"fold_id": fold_id, "patient_id": pid, "split": "test"} for pid in test)
    return pd.DataFrame.from_records(records, columns=["fold_id", "patient_id", "split"])


def impute_and_clean(X: FeatureMatrix, fitted_stats: Optional[ImputeStats] = None) -> Tuple[FeatureMatrix, ImputeStats]:
    values = X.values
    if fitted_stats is None:
        observed = ~np.isnan(values)
        has_data = observed.any(axis=0)
        dropped = tuple(name for name, ok in zip(X.feature_names, has_data) if not ok)
        if dropped:
            log.info(f"Dropping {len(dropped)} feature(s) with no training data: {', '.join(dropped)}")
        if not has_data.any():
            raise DataError("every feature is entirely missing in the training split")
        kept = np.flatnonzero(has_data)
        sums = np.where(observed, values, 0.0).sum(axis=0)
        means = sums[kept] / observed.sum(axis=0)[kept]
        fitted_stats = ImputeStats(
            input_names=X.feature_names,
            kept_names=tuple(X.feature_names[j] for j in kept),
            means=means,
            dropped=dropped,
        )
    elif tuple(X.feature_names) != tuple(fitted_stats.input_names):
        raise StructuralError(
            f"imputation stats were fitted on {len(fitted_stats.input_names)} features, got {X.d}"
        )
    if not fitted_stats.kept_names:
        raise DataError("imputation left no features")
    kept_idx = [X.feature_names.index(name) for name in fitted_stats.kept_names]
    block = values[:, kept_idx]
    filled = np.where(np.isnan(block), fitted_stats.means[None, :], block)
    return FeatureMatrix(filled, fitted_stats.kept_names), fitted_stats
