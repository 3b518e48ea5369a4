import numpy as np
import pytest

from checklist import FeatureMatrix, Labels
from synthetic import CohortSpec, planted_checklist, planted_instance, write_synthetic_cohort


def random_instance(rng, n, d, levels=5):
    """Integer-valued features keep the candidate lists short."""
    values = rng.integers(0, levels, size=(n, d)).astype(float)
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    return FeatureMatrix(values, tuple(f"f{j}" for j in range(d))), Labels(y)


@pytest.fixture
def planted():
    checklist = planted_checklist(d=6, n_rules=3, m_required=2)
    X, y = planted_instance(120, 6, checklist, seed=11)
    return checklist, X, y


@pytest.fixture
def cohort_dir(tmp_path):
    data_dir = tmp_path / "data"
    write_synthetic_cohort(data_dir, CohortSpec(n_patients=60, pos_fraction=0.4, seed=3))
    return data_dir


@pytest.fixture
def small_run_args(tmp_path, cohort_dir):
    """Flags for a quick end-to-end run on the synthetic cohort."""
    return [
        "--data-dir", str(cohort_dir),
        "--output-dir", str(tmp_path / "out"),
        "--fold-n-folds", "2",
        "--fold-size", "20",
        "--fold-pos-fraction", "0.4",
        "--fold-test-fraction", "0.25",
        "--k-features", "5",
        "--solver-time-budget", "60",
        "--baseline-sets-epochs", "200",
        "--mlp-epochs", "20",
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
