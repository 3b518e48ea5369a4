"""Synthetic data: planted-checklist matrices and PSV patient cohorts."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from artifacts import atomic_write_text, fork_rng
from checklist import Checklist, ConceptRule, FeatureMatrix, Labels, predict_matrix
from errors import ConfigurationError
from ingest import LABEL_COLUMN

log = logging.getLogger(__name__)


def planted_checklist(d: int = 8, n_rules: int = 4, m_required: int = 2, threshold: float = 4.5) -> Checklist:
    """Rules "x_j > threshold" on the first n_rules of d features."""
    if n_rules > d:
        raise ConfigurationError(f"cannot plant {n_rules} rules on {d} features")
    return Checklist(tuple(ConceptRule(j, threshold) for j in range(n_rules)), m_required)


def planted_instance(
    n: int,
    d: int,
    checklist: Checklist,
    noise: float = 0.0,
    seed: int = 0,
    levels: int = 10,
) -> Tuple[FeatureMatrix, Labels]:
    """Integer features in [0, levels) labelled by ``checklist``, with label flips at rate ``noise``."""
    if not 0.0 <= noise < 0.5:
        raise ConfigurationError("noise must lie in [0, 0.5)")
    rng = fork_rng(seed, "planted", str(n), str(d))
    values = rng.integers(0, levels, size=(n, d)).astype(np.float64)
    y = predict_matrix(checklist, values)
    if noise > 0:
        flips = rng.random(n) < noise
        y = np.where(flips, 1 - y, y)
    return FeatureMatrix(values, tuple(f"x{j}" for j in range(d))), Labels(y)


# PhysioNet-style hourly variables: (baseline mean, hourly sd, shift when septic, observation rate).
VITALS: Dict[str, Tuple[float, float, float, float]] = {
    "HR": (84.0, 12.0, 14.0, 0.95),
    "O2Sat": (97.0, 2.0, -1.5, 0.9),
    "Temp": (36.9, 0.5, 0.7, 0.35),
    "SBP": (122.0, 18.0, -8.0, 0.85),
    "MAP": (82.0, 12.0, -6.0, 0.85),
    "Resp": (18.0, 4.0, 4.0, 0.9),
    "Lactate": (1.6, 0.6, 1.4, 0.05),
    "WBC": (10.5, 3.5, 4.0, 0.08),
    "Creatinine": (1.3, 0.6, 0.6, 0.08),
    "Platelets": (210.0, 60.0, -45.0, 0.08),
}


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int = 60
    pos_fraction: float = 0.4
    min_hours: int = 8
    max_hours: int = 48
    seed: int = 7


def synth_patient(patient_index: int, septic: bool, spec: CohortSpec) -> pd.DataFrame:
    rng = fork_rng(spec.seed, "patient", str(patient_index))
    hours = int(rng.integers(spec.min_hours, spec.max_hours + 1))
    # septic patients drift toward the shifted mean over their stay
    drift = np.linspace(0.3, 1.0, hours) if septic else np.zeros(hours)
    frame = {}
    for name, (mean, sd, shift, rate) in VITALS.items():
        series = mean + shift * drift + rng.normal(0.0, sd, size=hours)
        series[rng.random(hours) >= rate] = np.nan
        frame[name] = np.round(series, 2)
    frame["Age"] = np.full(hours, float(rng.integers(18, 90)))
    frame["Gender"] = np.full(hours, float(rng.integers(0, 2)))
    unit = float(rng.integers(0, 2))
    frame["Unit1"] = np.full(hours, unit)
    frame["Unit2"] = np.full(hours, 1.0 - unit)
    frame["HospAdmTime"] = np.full(hours, -float(np.round(rng.exponential(20.0), 2)))
    frame["ICULOS"] = np.arange(1, hours + 1, dtype=np.float64)
    labels = np.zeros(hours, dtype=int)
    if septic:
        labels[max(0, hours - 6):] = 1
    frame[LABEL_COLUMN] = labels
    return pd.DataFrame(frame)


def write_synthetic_cohort(out_dir, spec: CohortSpec = CohortSpec()) -> int:
    """Write ``p<index>.psv`` files; returns the number of positives."""
    if not 0.0 < spec.pos_fraction < 1.0:
        raise ConfigurationError("pos_fraction must lie strictly between 0 and 1")
    if spec.min_hours < 1 or spec.max_hours < spec.min_hours:
        raise ConfigurationError("need 1 <= min_hours <= max_hours")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_pos = int(np.floor(spec.n_patients * spec.pos_fraction + 0.5))
    septic = np.zeros(spec.n_patients, dtype=bool)
    septic[fork_rng(spec.seed, "cohort").choice(spec.n_patients, size=n_pos, replace=False)] = True
    for index in range(spec.n_patients):
        frame = synth_patient(index, bool(septic[index]), spec)
        text = frame.to_csv(sep="|", index=False, na_rep="NaN", lineterminator="\n")
        atomic_write_text(out_dir / f"p{index:06d}.psv", text)
    log.info(f"Wrote {spec.n_patients} synthetic patients ({n_pos} septic) to {out_dir}")
    return n_pos
