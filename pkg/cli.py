"""Command-line pipeline: ingest -> train -> report, plus export-mip, defaults and synth.

    python cli.py ingest --config run.env
    python cli.py train --method mip
    python cli.py report
"""
import argparse
import logging
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from artifacts import (
    ArtifactLayout,
    atomic_write_csv,
    atomic_write_json,
    atomic_write_text,
    fork_rng,
    read_json,
)
from baselines import (
    MlpHyper,
    UnitWeightingConfig,
    binarize_at,
    dummy_fit_predict,
    mlp_score,
    mlp_train,
    sets_to_checklist,
    sets_train,
    unit_weighting,
)
from checklist import (
    Checklist,
    FeatureMatrix,
    Labels,
    ObjectiveWeights,
    add_negated_features,
    concept_matrix,
    evaluate_counts,
    objective_value,
    predict_matrix,
)
from config import METHODS, RunConfig, load_run_config
from errors import BudgetExhausted, ChecklistError, ConfigurationError
from feature_select import TrainHyper, fit_logistic, select_features, standardize
from ingest import (
    FoldSpec,
    build_folds,
    fold_manifest,
    impute_and_clean,
    load_patient_dir,
    summaries_to_frame,
)
from metrics_report import (
    MetricSet,
    OperatingPointRow,
    aggregate_folds,
    classification_metrics,
    export_threshold_comparison,
    precision_at_recall,
    recall_at_precision,
    render_metrics_table,
    render_operating_table,
)
from solver import CandidateSet, SolverConfig, export_mip_form, solve_checklist, solve_fixed_thresholds
from synthetic import CohortSpec, write_synthetic_cohort

log = logging.getLogger(__name__)

CHECKLIST_METHODS = ("mip", "ilp-mean", "unit", "sets")
SCORED_METHODS = ("lr", "mlp")
# Keys left out of the report so it does not change with paths or thread count.
NON_REPORT_KEYS = ("data_dir", "output_dir", "n_workers")


# --------------------------------------------------------------------------
# Fold preparation


@dataclass
class FoldData:
    fold_id: int
    train_ids: List[str]
    test_ids: List[str]
    X_train: FeatureMatrix
    y_train: Labels
    X_test: FeatureMatrix
    y_test: Labels
    # columns the solver sees (selected, plus negated copies when enabled)
    S_train: FeatureMatrix
    S_test: FeatureMatrix


def lr_hyper(config: RunConfig) -> TrainHyper:
    return TrainHyper(
        learning_rate=config.lr_learning_rate,
        l2_strength=config.lr_l2,
        max_epochs=config.lr_max_epochs,
        tolerance=config.lr_tolerance,
    )


def objective_weights(config: RunConfig, lam: float, d: int) -> ObjectiveWeights:
    weights = ObjectiveWeights.with_default_eps(lam, d)
    return ObjectiveWeights(
        lam,
        weights.eps_n if config.solver_eps_n is None else config.solver_eps_n,
        weights.eps_m if config.solver_eps_m is None else config.solver_eps_m,
    )


def column_stats(X: FeatureMatrix) -> Dict[str, Dict[str, float]]:
    return {
        name: {
            "mean": float(X.values[:, j].mean()),
            "min": float(X.values[:, j].min()),
            "max": float(X.values[:, j].max()),
        }
        for j, name in enumerate(X.feature_names)
    }


def _require(path, hint: str):
    if not path.is_file():
        raise ConfigurationError(f"missing {path}; {hint}")


def load_ingest_artifacts(layout: ArtifactLayout) -> Tuple[pd.DataFrame, pd.DataFrame]:
    _require(layout.summary_csv, "run the ingest subcommand first")
    _require(layout.folds_csv, "run the ingest subcommand first")
    summary = pd.read_csv(layout.summary_csv, dtype={"patient_id": str}).set_index("patient_id")
    folds = pd.read_csv(layout.folds_csv, dtype={"patient_id": str})
    return summary, folds


def _matrix(summary: pd.DataFrame, ids: List[str]) -> Tuple[FeatureMatrix, Labels]:
    block = summary.loc[ids]
    names = tuple(c for c in summary.columns if c != "y")
    return FeatureMatrix(block[list(names)].to_numpy(dtype=np.float64), names), Labels(block["y"].to_numpy())


def prepare_fold(config: RunConfig, layout: ArtifactLayout, summary: pd.DataFrame, folds: pd.DataFrame, fold_id: int) -> FoldData:
    members = folds[folds["fold_id"] == fold_id]
    train_ids = members.loc[members["split"] == "train", "patient_id"].tolist()
    test_ids = members.loc[members["split"] == "test", "patient_id"].tolist()
    X_raw, y_train = _matrix(summary, train_ids)
    X_raw_test, y_test = _matrix(summary, test_ids)

    X_train, stats = impute_and_clean(X_raw)
    X_test, _ = impute_and_clean(X_raw_test, stats)
    picked, manifest, _ = select_features(X_train, y_train, config.k_features, lr_hyper(config))
    X_train, X_test = X_train.select(picked), X_test.select(picked)

    S_train, S_test = X_train, X_test
    if config.solver_allow_negated_features:
        S_train, S_test = add_negated_features(X_train), add_negated_features(X_test)

    atomic_write_csv(layout.selected_features_csv(fold_id), manifest)
    atomic_write_json(layout.fold_context_json(fold_id), {
        "fold_id": fold_id,
        "n_train": len(train_ids),
        "n_test": len(test_ids),
        "selected_features": list(X_train.feature_names),
        "imputation": stats.to_dict(),
        "columns": column_stats(S_train),
    })
    return FoldData(fold_id, train_ids, test_ids, X_train, y_train, X_test, y_test, S_train, S_test)


# --------------------------------------------------------------------------
# Per-method training


@dataclass
class MethodOutput:
    model: Dict
    metrics: Dict
    scores: np.ndarray
    predictions: np.ndarray
    checklist_text: Optional[str] = None
    stats: Optional[Dict] = None
    certified: bool = True


def _threshold_table(checklist: Checklist, X: FeatureMatrix) -> List[Dict]:
    stats = column_stats(X)
    table = []
    for rule in checklist.rules:
        name = X.feature_names[rule.feature_index]
        table.append({
            "feature_name": name,
            "threshold": rule.threshold,
            "negated": rule.negated,
            "train_mean": stats[name]["mean"],
            "train_min": stats[name]["min"],
            "train_max": stats[name]["max"],
        })
    return table


def _checklist_output(checklist: Checklist, fold: FoldData, X_train: FeatureMatrix, X_test: FeatureMatrix,
                      weights: ObjectiveWeights, extra: Dict) -> MethodOutput:
    names = X_train.feature_names
    predictions = predict_matrix(checklist, X_test.values)
    scores = concept_matrix(X_test.values, checklist.rules).sum(axis=1)
    train_counts = evaluate_counts(checklist, X_train, fold.y_train)
    metrics = classification_metrics(fold.y_test.y, predictions, checklist.n_rules, checklist.m_required)
    model = {
        "feature_names": list(names),
        "checklist": checklist.to_dict(names),
        "thresholds": _threshold_table(checklist, X_train),
        **extra,
    }
    return MethodOutput(
        model=model,
        metrics={
            "metrics": metrics.to_dict(),
            "train_objective": objective_value(train_counts, checklist.n_rules, checklist.m_required, weights),
            "weights": {"lam": weights.lam, "eps_n": weights.eps_n, "eps_m": weights.eps_m},
        },
        scores=scores.astype(np.float64),
        predictions=predictions,
        checklist_text=checklist.to_text(names),
    )


def _solver_config(config: RunConfig, weights: ObjectiveWeights, fold_id: int) -> SolverConfig:
    return SolverConfig(
        weights=weights,
        max_rules=config.solver_max_rules,
        time_budget=config.solver_time_budget,
        seed=int(fork_rng(config.seed, "solver", str(fold_id)).integers(2 ** 31)),
        n_workers=config.n_workers,
    )


def train_solver_method(method: str, lam: float, config: RunConfig, fold: FoldData) -> MethodOutput:
    X = fold.S_train
    weights = objective_weights(config, lam, X.d)
    solver_config = _solver_config(config, weights, fold.fold_id)
    if method == "mip":
        result = solve_checklist(X, fold.y_train, CandidateSet.from_matrix(X), solver_config)
    else:
        result = solve_fixed_thresholds(X, fold.y_train, X.values.mean(axis=0), solver_config)
    log.debug(f"Fold {fold.fold_id} {method}:\n{result.to_text(X.feature_names)}")
    output = _checklist_output(result.best, fold, X, fold.S_test, weights, {"solver": result.to_dict(X.feature_names)})
    output.metrics["certified_optimal"] = result.certified_optimal
    output.metrics["lower_bound"] = result.lower_bound
    output.stats = result.stats()
    output.certified = result.certified_optimal
    return output


def train_unit_method(method: str, lam: float, config: RunConfig, fold: FoldData) -> MethodOutput:
    X = fold.X_train
    weights = objective_weights(config, lam, X.d)
    unit_config = UnitWeightingConfig(beta=config.baseline_unit_beta, weights=weights)
    hyper = lr_hyper(config)
    extra = {}
    if method == "unit":
        thresholds = X.values.mean(axis=0)
        checklist = unit_weighting(binarize_at(X, thresholds), fold.y_train, hyper, unit_config, thresholds)
    else:
        sds = X.values.std(axis=0)
        sets_hyper = TrainHyper(
            learning_rate=config.baseline_sets_learning_rate,
            l2_strength=config.lr_l2,
            max_epochs=config.baseline_sets_epochs,
            tolerance=config.lr_tolerance,
        )
        model = sets_train(X, fold.y_train, config.baseline_sets_tau, sets_hyper, scale=np.where(sds > 0, sds, 1.0))
        checklist = sets_to_checklist(model, X, fold.y_train, unit_config, hyper)
        extra["sets"] = {**model.to_dict(), "feature_names": list(X.feature_names)}
    return _checklist_output(checklist, fold, X, fold.X_test, weights, extra)


def train_scored_method(method: str, lam: float, config: RunConfig, fold: FoldData) -> MethodOutput:
    X, X_test = fold.X_train, fold.X_test
    if method == "lr":
        model = fit_logistic(X, fold.y_train, lr_hyper(config))
        scores = model.predict_proba(X_test.values)
        payload = model.to_dict()
    elif method == "mlp":
        Z, means, sds = standardize(X)
        Z_test = (X_test.select([X.index_of(n) for n in Z.feature_names]).values - means) / sds
        hyper = MlpHyper(
            hidden=config.mlp_hidden,
            epochs=config.mlp_epochs,
            batch_size=config.mlp_batch_size,
            learning_rate=config.mlp_learning_rate,
            seed=int(fork_rng(config.seed, "mlp", str(fold.fold_id)).integers(2 ** 31)),
        )
        model = mlp_train(Z, fold.y_train, hyper)
        scores = mlp_score(model, Z_test)
        payload = {**model.to_dict(), "feature_names": list(Z.feature_names), "means": means, "sds": sds}
    else:
        model = dummy_fit_predict(fold.y_train)
        scores = model.predict_proba(X_test.values)
        payload = {"constant": model.constant}
    predictions = (scores >= 0.5).astype(np.int8)
    metrics = classification_metrics(fold.y_test.y, predictions)
    return MethodOutput(model=payload, metrics={"metrics": metrics.to_dict()}, scores=scores, predictions=predictions)


TRAINERS = {
    "mip": train_solver_method,
    "ilp-mean": train_solver_method,
    "unit": train_unit_method,
    "sets": train_unit_method,
    "lr": train_scored_method,
    "mlp": train_scored_method,
    "dummy": train_scored_method,
}


def write_method_output(layout: ArtifactLayout, fold: FoldData, label: str, method: str, lam: float, output: MethodOutput):
    header = {"method": method, "label": label, "lambda": lam, "fold_id": fold.fold_id}
    atomic_write_json(layout.model_json(fold.fold_id, label), {**header, **output.model})
    atomic_write_json(layout.metrics_json(fold.fold_id, label), {**header, **output.metrics})
    if output.checklist_text is not None:
        atomic_write_text(layout.checklist_text(fold.fold_id, label), output.checklist_text)
    atomic_write_csv(layout.scores_csv(fold.fold_id, label), pd.DataFrame({
        "patient_id": fold.test_ids,
        "y": fold.y_test.y,
        "score": output.scores,
        "prediction": output.predictions,
    }))


# --------------------------------------------------------------------------
# Subcommands


def cmd_ingest(config: RunConfig):
    config.validate(need_data_dir=True)
    layout = ArtifactLayout(config.output_dir)
    rows = load_patient_dir(config.data_dir, config.n_workers, config.include_timing_features)
    spec = FoldSpec(config.fold_n_folds, config.fold_size, config.fold_pos_fraction, config.seed)
    folds = build_folds(rows, spec)
    labels = {row.patient_id: row.label for row in rows}
    manifest = fold_manifest(folds, labels, config.fold_test_fraction, config.seed)
    atomic_write_csv(layout.summary_csv, summaries_to_frame(rows))
    atomic_write_csv(layout.folds_csv, manifest)
    log.info(f"Wrote {layout.summary_csv} and {layout.folds_csv}")


def cmd_train(config: RunConfig):
    config.validate()
    layout = ArtifactLayout(config.output_dir)
    summary, folds = load_ingest_artifacts(layout)
    run_stats = {"n_workers": config.n_workers, "folds": {}}
    uncertified = []
    for fold_id in sorted(folds["fold_id"].unique()):
        fold_id = int(fold_id)
        fold = prepare_fold(config, layout, summary, folds, fold_id)
        fold_stats = run_stats["folds"].setdefault(str(fold_id), {})
        for method in config.methods:
            for label, lam in config.method_labels(method):
                output = TRAINERS[method](method, lam, config, fold)
                write_method_output(layout, fold, label, method, lam, output)
                if output.stats is not None:
                    fold_stats[label] = output.stats
                if not output.certified:
                    uncertified.append(f"fold {fold_id} {label}")
                m = output.metrics["metrics"]
                log.info(f"Fold {fold_id} {label}: accuracy {m['accuracy']:.3f}, recall {m['recall']:.3f}")
    atomic_write_json(layout.run_stats_json, run_stats)
    if uncertified:
        raise BudgetExhausted(f"no optimality certificate for {', '.join(uncertified)}; incumbents were written")


def _method_sort_key(label: str):
    base = label.split("-lambda")[0]
    return (METHODS.index(base) if base in METHODS else len(METHODS), label)


def _open_target(value: float) -> float:
    return float(np.clip(value, 1e-6, 1.0 - 1e-6))


def operating_rows(layout: ArtifactLayout, labels: List[str], fold_ids: List[int]) -> List[OperatingPointRow]:
    """Score-based models evaluated at each checklist's test precision and recall."""
    scored = [lb for lb in labels if lb.split("-lambda")[0] in SCORED_METHODS]
    checklists = [lb for lb in labels if lb.split("-lambda")[0] == "mip"]
    rows = []
    for score_label in scored:
        for check_label in checklists:
            per_fold = []
            for fold_id in fold_ids:
                m = read_json(layout.metrics_json(fold_id, check_label))["metrics"]
                scores = pd.read_csv(layout.scores_csv(fold_id, score_label))
                per_fold.append((
                    m["precision"],
                    m["recall"],
                    precision_at_recall(scores["score"].to_numpy(), scores["y"].to_numpy(), _open_target(m["recall"])),
                    recall_at_precision(scores["score"].to_numpy(), scores["y"].to_numpy(), _open_target(m["precision"])),
                ))
            means = np.mean(np.asarray(per_fold), axis=0)
            rows.append(OperatingPointRow(f"{score_label} @ {check_label}", *[float(v) for v in means]))
    return rows


def threshold_figures(layout: ArtifactLayout, labels: List[str], fold_ids: List[int]) -> List[str]:
    mip = next((lb for lb in labels if lb.split("-lambda")[0] == "mip"), None)
    sets = next((lb for lb in labels if lb.split("-lambda")[0] == "sets"), None)
    if mip is None or sets is None:
        return []
    written = []
    for fold_id in fold_ids:
        context = read_json(layout.fold_context_json(fold_id))
        columns = context["columns"]
        mip_model = read_json(layout.model_json(fold_id, mip))
        sets_model = read_json(layout.model_json(fold_id, sets))["sets"]
        out = layout.figures_dir / f"thresholds_fold_{fold_id}"
        export_threshold_comparison(
            {row["feature_name"]: row["threshold"] for row in mip_model["thresholds"]},
            dict(zip(sets_model["feature_names"], sets_model["phi"])),
            {name: stats["mean"] for name, stats in columns.items()},
            {name: (stats["min"], stats["max"]) for name, stats in columns.items()},
            out,
        )
        written.append(str(out.relative_to(layout.root)))
    return written


def cmd_report(config: RunConfig):
    config.validate()
    layout = ArtifactLayout(config.output_dir)
    labels = sorted(layout.trained_methods(), key=_method_sort_key)
    if not labels:
        raise ConfigurationError(f"no trained methods under {layout.root}; run the train subcommand first")
    fold_ids = layout.fold_ids()

    methods, aggregates = {}, {}
    for label in labels:
        per_fold = [read_json(layout.metrics_json(f, label)) for f in fold_ids]
        metric_sets = [MetricSet.from_dict(entry["metrics"]) for entry in per_fold]
        aggregates[label] = aggregate_folds(metric_sets)
        entry = {"folds": per_fold, "aggregate": aggregates[label].to_dict()}
        if label.split("-lambda")[0] in CHECKLIST_METHODS:
            entry["checklists"] = [read_json(layout.model_json(f, label))["checklist"] for f in fold_ids]
        methods[label] = entry

    operating = operating_rows(layout, labels, fold_ids)
    figures = threshold_figures(layout, labels, fold_ids)
    report = {
        "config": {k: v for k, v in config.as_dict().items() if k not in NON_REPORT_KEYS},
        "fold_ids": fold_ids,
        "methods": methods,
        "operating_points": [vars(row) for row in operating],
        "figures": figures,
    }
    text = render_metrics_table(aggregates)
    if operating:
        text += "\n" + render_operating_table(operating)
    atomic_write_json(layout.report_json, report)
    atomic_write_text(layout.report_text, text)
    sys.stdout.write(text)


def cmd_export_mip(config: RunConfig, fold_id: int, lam: Optional[float]):
    config.validate()
    layout = ArtifactLayout(config.output_dir)
    summary, folds = load_ingest_artifacts(layout)
    if fold_id not in set(folds["fold_id"].tolist()):
        raise ConfigurationError(f"fold {fold_id} is not in {layout.folds_csv}")
    fold = prepare_fold(config, layout, summary, folds, fold_id)
    lam = config.solver_lambda_grid[0] if lam is None else lam
    weights = objective_weights(config, lam, fold.S_train.d)
    text = export_mip_form(fold.S_train, fold.y_train, _solver_config(config, weights, fold_id))
    atomic_write_text(layout.mip_lp(fold_id), text)
    log.info(f"MIP for fold {fold_id} written to {layout.mip_lp(fold_id)}")


def cmd_defaults():
    sys.stdout.write(RunConfig().to_text())


def cmd_synth(out_dir: str, n_patients: int, pos_fraction: float, seed: int):
    write_synthetic_cohort(out_dir, CohortSpec(n_patients=n_patients, pos_fraction=pos_fraction, seed=seed))


# --------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    """Usage errors surface as ConfigurationError (exit 1)."""

    def error(self, message):
        raise ConfigurationError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="KEY=value config file")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    for key in RunConfig.keys():
        common.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", default=None, metavar="VALUE")

    parser = _Parser(prog="cli.py", description="Learn M-of-N checklists from patient time series.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse patient files, write summaries and folds")
    train = sub.add_parser("train", parents=[common], help="train methods on every fold")
    train.add_argument("--method", choices=METHODS, action="append", help="repeatable; default: METHODS config")
    sub.add_parser("report", parents=[common], help="aggregate metrics into tables and figures")
    export = sub.add_parser("export-mip", parents=[common], help="write one fold's MIP in LP format")
    export.add_argument("--fold", type=int, default=0)
    export.add_argument("--lam", type=float, default=None)
    sub.add_parser("defaults", help="print every config key with its default")
    synth = sub.add_parser("synth", help="write a synthetic PSV cohort")
    synth.add_argument("--out", required=True)
    synth.add_argument("--patients", type=int, default=CohortSpec.n_patients)
    synth.add_argument("--pos-fraction", type=float, default=CohortSpec.pos_fraction)
    synth.add_argument("--seed", type=int, default=CohortSpec.seed)
    synth.add_argument("--verbose", action="store_true")
    return parser


def configure_logging(verbose: bool):
    logging.basicConfig(format="[%(levelname)s] %(message)s")
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        configure_logging(getattr(args, "verbose", False))
        if args.command == "defaults":
            cmd_defaults()
            return 0
        if args.command == "synth":
            cmd_synth(args.out, args.patients, args.pos_fraction, args.seed)
            return 0
        overrides = {
            key[len("cfg_"):]: value for key, value in vars(args).items()
            if key.startswith("cfg_") and value is not None
        }
        config = load_run_config(args.config, overrides)
        if args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "train":
            if args.method:
                config.methods = tuple(dict.fromkeys(args.method))
            cmd_train(config)
        elif args.command == "report":
            cmd_report(config)
        elif args.command == "export-mip":
            cmd_export_mip(config, args.fold, args.lam)
    except ChecklistError as e:
        log.error(str(e))
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
