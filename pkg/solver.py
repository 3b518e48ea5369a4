"""Exact checklist learning by branch-and-bound over discretized thresholds.

A rule's concept column depends on its threshold only through which rows it
separates, so each feature's thresholds are replaced by one candidate per
distinct split: midpoints between consecutive distinct values, a
sentinel above the maximum and a floor below the minimum.  The search then
picks, for every feature in a fixed order, either "skip" or one candidate,
with M fixed in an outer loop.
"""
import itertools
import logging
import math
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pulp

from checklist import (
    Checklist,
    ConceptRule,
    FeatureMatrix,
    Labels,
    ObjectiveWeights,
    objective_from_counts,
)
from errors import ConfigurationError, RefusalError, StructuralError
from feature_select import TrainHyper, fit_logistic

log = logging.getLogger(__name__)

SENTINEL_OFFSET = 1.0
CERTIFICATE_SLACK = 1e-9
POLISH_MAX_PASSES = 25


# --------------------------------------------------------------------------
# Candidates


def candidate_thresholds(column) -> np.ndarray:
    column = np.asarray(column, dtype=np.float64)
    if column.size == 0:
        raise StructuralError("cannot build thresholds for an empty column")
    if not np.isfinite(column).all():
        raise StructuralError("column has non-finite values")
    distinct = np.unique(column)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    # Adjacent floats can round the midpoint up onto the upper value.
    mids = np.where(mids < distinct[1:], mids, distinct[:-1])
    return np.append(mids, distinct[-1] + SENTINEL_OFFSET)


@dataclass(frozen=True)
class CandidateSet:
    thresholds: Tuple[np.ndarray, ...]

    def __post_init__(self):
        cleaned = []
        for j, values in enumerate(self.thresholds):
            values = np.asarray(values, dtype=np.float64).ravel()
            if values.size == 0 or not np.isfinite(values).all():
                raise StructuralError(f"feature {j} needs at least one finite candidate")
            if values.size > 1 and not (np.diff(values) > 0).all():
                raise StructuralError(f"candidates for feature {j} must be strictly increasing")
            cleaned.append(values)
        object.__setattr__(self, "thresholds", tuple(cleaned))

    @classmethod
    def from_matrix(cls, X: FeatureMatrix) -> "CandidateSet":
        """Midpoint candidates plus a floor below each minimum (the always-true rule)."""
        lists = []
        for j in range(X.d):
            column = X.values[:, j]
            low = float(column.min())
            floor = min(low - SENTINEL_OFFSET, float(np.nextafter(low, -np.inf)))
            lists.append(np.insert(candidate_thresholds(column), 0, floor))
        return cls(tuple(lists))

    @classmethod
    def fixed(cls, thresholds: Sequence[float]) -> "CandidateSet":
        return cls(tuple(np.array([float(t)]) for t in thresholds))

    @property
    def d(self) -> int:
        return len(self.thresholds)

    def sizes(self) -> List[int]:
        return [len(t) for t in self.thresholds]


def reduce_candidates(column: np.ndarray, thresholds: np.ndarray, is_positive: np.ndarray) -> np.ndarray:
    """Indices of the candidates no neighbour weakly dominates.

    Lowering a threshold from t[k] to t[k-1] switches on the rows valued in
    (t[k-1], t[k]]; if none of them is negative the lower candidate is at
    least as good for every M.  Symmetrically, raising to t[k+1] switches off
    rows in (t[k], t[k+1]]; if none is positive the higher one is as good.
    Duplicated concept columns keep their lowest candidate.
    """
    kept = np.arange(len(thresholds))
    bucket = np.searchsorted(thresholds, column, side="left")
    occupied = np.bincount(bucket, minlength=len(thresholds) + 1)
    # bucket k (1 <= k < m) empty means t[k-1] and t[k] split identically.
    distinct = np.ones(len(thresholds), dtype=bool)
    distinct[1:] = occupied[1:len(thresholds)] > 0
    kept = kept[distinct]
    if len(kept) == 1:
        return kept

    t = thresholds[kept]
    bucket = np.searchsorted(t, column, side="left")
    pos = np.bincount(bucket[is_positive], minlength=len(t) + 1)
    neg = np.bincount(bucket[~is_positive], minlength=len(t) + 1)
    m = len(t)
    keep = np.ones(m, dtype=bool)
    keep[1:] &= neg[1:m] > 0
    keep[:-1] &= pos[1:m] > 0
    return kept[keep]


# --------------------------------------------------------------------------
# Configuration and results


@dataclass(frozen=True)
class SolverConfig:
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    max_rules: Optional[int] = None
    m_range: Optional[Tuple[int, int]] = None
    time_budget: float = 60.0
    big_a: Optional[Tuple[float, ...]] = None
    big_b: Optional[float] = None
    seed: int = 0
    n_workers: int = 1
    feature_order: Optional[Tuple[int, ...]] = None
    node_limit: Optional[int] = None

    def resolve(self, X: FeatureMatrix) -> "SolverConfig":
        """Fill data-dependent defaults and check the invariants."""
        d = X.d
        max_rules = d if self.max_rules is None else min(int(self.max_rules), d)
        if max_rules < 1:
            raise ConfigurationError("max_rules must be >= 1")
        lo, hi = self.m_range if self.m_range is not None else (1, max_rules)
        if max(1, lo) > min(hi, max_rules):
            raise ConfigurationError(f"empty range for M: {self.m_range} with max_rules={max_rules}")
        ranges = np.ptp(X.values, axis=0)
        deltas = mip_margins(X)
        big_a = self.big_a if self.big_a is not None else tuple(float(r + dl) for r, dl in zip(ranges, deltas))
        if len(big_a) != d or any(a < r for a, r in zip(big_a, ranges)):
            raise ConfigurationError("big_a must cover every feature's value range")
        big_b = float(d + 1) if self.big_b is None else float(self.big_b)
        if big_b < d + 1:
            raise ConfigurationError(f"big_b must be >= d + 1 = {d + 1}")
        if self.time_budget <= 0:
            raise ConfigurationError("time_budget must be > 0")
        if self.n_workers < 1:
            raise ConfigurationError("n_workers must be >= 1")
        order = self.feature_order
        if order is not None and sorted(order) != list(range(d)):
            raise ConfigurationError("feature_order must be a permutation of the feature indices")
        return replace(
            self, max_rules=max_rules, m_range=(max(1, lo), min(hi, max_rules)),
            big_a=tuple(big_a), big_b=big_b,
        )

    @property
    def m_values(self) -> List[int]:
        return list(range(self.m_range[0], self.m_range[1] + 1))


@dataclass(frozen=True)
class SolveResult:
    best: Checklist
    objective: float
    lower_bound: float
    certified_optimal: bool
    nodes_explored: int
    wall_time: float
    candidate_indices: Tuple[int, ...] = ()

    def to_dict(self, feature_names: Optional[Sequence[str]] = None) -> Dict:
        """Deterministic part of the result; run statistics live in stats()."""
        return {
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "certified_optimal": self.certified_optimal,
            "checklist": self.best.to_dict(feature_names),
        }

    def stats(self) -> Dict:
        return {"nodes_explored": self.nodes_explored, "wall_time": round(self.wall_time, 3)}

    def to_text(self, feature_names: Optional[Sequence[str]] = None) -> str:
        lines = [
            f"objective: {self.objective:.10g}",
            f"lower_bound: {self.lower_bound:.10g}",
            f"certified_optimal: {str(self.certified_optimal).lower()}",
            "checklist:",
        ]
        lines.extend("  " + line for line in self.best.to_text(feature_names).splitlines())
        lines.append(f"nodes_explored: {self.nodes_explored}")
        lines.append(f"wall_time: {self.wall_time:.3f}")
        return "\n".join(lines) + "\n"


@dataclass
class SearchState:
    """A node of the search tree.

    ``counts[i]`` is how many chosen rules row i satisfies; whether row i
    ends up misclassified is settled only once every feature is decided.
    """
    chosen: Tuple[Tuple[int, int], ...]
    counts: np.ndarray
    is_positive: np.ndarray


def bound_partial(
    state: SearchState,
    m_required: int,
    weights: ObjectiveWeights,
    remaining: int,
    rule_budget: Optional[int] = None,
) -> float:
    """Admissible lower bound on every completion of ``state``.

    Positives optimistically gain every remaining rule, negatives gain none.
    With ``rule_budget`` (rules still allowed before max_rules), the bound
    instead minimises over how many more rules k get added, charging eps_N
    for them and letting positives gain only k.
    """
    c = len(state.chosen)
    pos_counts = state.counts[state.is_positive]
    neg_counts = state.counts[~state.is_positive]
    l_minus = int(np.count_nonzero(neg_counts >= m_required))
    if rule_budget is None:
        l_plus = int(np.count_nonzero(pos_counts + remaining < m_required))
        return float(objective_from_counts(l_plus, l_minus, c, m_required, weights))

    top = min(remaining, rule_budget)
    low = max(0, m_required - c)
    if top < low:
        return math.inf
    best = math.inf
    for k in range(low, top + 1):
        l_plus = int(np.count_nonzero(pos_counts + k < m_required))
        best = min(best, float(objective_from_counts(l_plus, l_minus, c + k, m_required, weights)))
    return best


# --------------------------------------------------------------------------
# Search internals


class _FeatureBlock:
    """One feature's reduced candidates with its precomputed concept columns."""

    def __init__(self, feature: int, thresholds: np.ndarray, kept: np.ndarray, column: np.ndarray, is_positive: np.ndarray):
        self.feature = feature
        self.kept = kept
        self.thresholds = thresholds[kept]
        self.concepts = (column[:, None] > self.thresholds[None, :]).astype(np.int32)
        self.notc_pos = (1 - self.concepts[is_positive]).astype(np.float32)
        self.c_neg = self.concepts[~is_positive].astype(np.float32)


class Incumbent:
    """Best checklist so far, shared by the worker threads.

    Ties on the objective go to the smaller key (N, M, features, candidate
    indices), so the final answer does not depend on exploration order.
    Candidate indices refer to the full candidate list, but only the
    candidates left after reduction compete, so among tied optima the
    winner is the smallest key over the reduced set.
    """

    def __init__(self):
        self.objective = math.inf
        self.key = None
        self.lock = threading.Lock()

    def offer(self, objective: float, key: Tuple) -> bool:
        with self.lock:
            if objective < self.objective or (objective == self.objective and (self.key is None or key < self.key)):
                if objective < self.objective:
                    log.debug(f"New incumbent {objective:.6g} (N={key[0]}, M={key[1]})")
                self.objective = objective
                self.key = key
                return True
            return False


class _Budget:
    def __init__(self, time_budget: float, node_limit: Optional[int]):
        self.deadline = time.monotonic() + time_budget
        self.node_limit = node_limit
        self.nodes = 0
        self.exhausted = False
        self.lock = threading.Lock()

    def tick(self) -> bool:
        """Count one node; False once the time or node budget is spent."""
        with self.lock:
            if self.exhausted:
                return False
            self.nodes += 1
            if time.monotonic() > self.deadline or (self.node_limit is not None and self.nodes > self.node_limit):
                self.exhausted = True
                return False
            return True


class _Search:
    def __init__(self, blocks: List[_FeatureBlock], labels: Labels, config: SolverConfig, incumbent: Incumbent, budget: _Budget):
        self.blocks = blocks
        self.is_positive = labels.is_positive
        self.pos = labels.pos_indices
        self.neg = labels.neg_indices
        self.weights = config.weights
        self.max_rules = config.max_rules
        self.incumbent = incumbent
        self.budget = budget
        self.open_bounds: List[float] = []
        self.n = labels.n

    # -- objective helpers ---------------------------------------------

    def key(self, chosen, m_required) -> Tuple:
        pairs = sorted((self.blocks[b].feature, int(self.blocks[b].kept[i])) for b, i in chosen)
        return (len(pairs), m_required, tuple(f for f, _ in pairs), tuple(i for _, i in pairs))

    def exact_objective(self, counts: np.ndarray, n_rules: int, m_required: int):
        """Objective of predicting counts >= M; counts may be n or n x m."""
        predicted = counts >= m_required
        l_plus = np.count_nonzero(~predicted[self.pos], axis=0)
        l_minus = np.count_nonzero(predicted[self.neg], axis=0)
        return objective_from_counts(l_plus, l_minus, n_rules, m_required, self.weights)

    def offer(self, counts, chosen, m_required):
        objective = float(self.exact_objective(counts, len(chosen), m_required))
        self.incumbent.offer(objective, self.key(chosen, m_required))

    # -- incumbent heuristics ------------------------------------------

    def greedy(self, m_required: int):
        """Add the best (feature, threshold) pair until nothing improves.

        While fewer than M rules are chosen, candidates are scored as if all
        chosen rules had to hold, so the first picks are not blind.
        """
        counts = np.zeros(self.n, dtype=np.int32)
        chosen: List[Tuple[int, int]] = []
        current = math.inf
        while len(chosen) < self.max_rules:
            taken = {b for b, _ in chosen}
            c_next = len(chosen) + 1
            effective = min(m_required, c_next)
            best = None
            for b, block in enumerate(self.blocks):
                if b in taken:
                    continue
                scores = self.exact_objective(counts[:, None] + block.concepts, c_next, effective)
                i = int(np.argmin(scores))
                if best is None or scores[i] < best[0]:
                    best = (float(scores[i]), b, i)
            if best is None:
                break
            if c_next > m_required and best[0] >= current:
                break
            chosen.append((best[1], best[2]))
            counts = counts + self.blocks[best[1]].concepts[:, best[2]]
            if len(chosen) >= m_required:
                current = float(self.exact_objective(counts, len(chosen), m_required))
        if len(chosen) < m_required:
            return None
        return self.polish(chosen, counts, m_required)

    def polish(self, chosen, counts, m_required):
        """Coordinate descent: re-pick one rule's threshold, drop it, or add one."""
        chosen = list(chosen)
        current = float(self.exact_objective(counts, len(chosen), m_required))
        for _ in range(POLISH_MAX_PASSES):
            improved = False
            for slot in range(len(chosen)):
                b, i = chosen[slot]
                block = self.blocks[b]
                without = counts - block.concepts[:, i]
                scores = self.exact_objective(without[:, None] + block.concepts, len(chosen), m_required)
                j = int(np.argmin(scores))
                if scores[j] < current:
                    chosen[slot] = (b, j)
                    counts = without + block.concepts[:, j]
                    current = float(scores[j])
                    improved = True
            if len(chosen) > m_required:
                for slot in range(len(chosen)):
                    b, i = chosen[slot]
                    without = counts - self.blocks[b].concepts[:, i]
                    score = float(self.exact_objective(without, len(chosen) - 1, m_required))
                    if score < current:
                        del chosen[slot]
                        counts, current, improved = without, score, True
                        break
            if len(chosen) < self.max_rules:
                taken = {b for b, _ in chosen}
                for b, block in enumerate(self.blocks):
                    if b in taken:
                        continue
                    scores = self.exact_objective(counts[:, None] + block.concepts, len(chosen) + 1, m_required)
                    j = int(np.argmin(scores))
                    if scores[j] < current:
                        chosen.append((b, j))
                        counts = counts + block.concepts[:, j]
                        current = float(scores[j])
                        improved = True
                        break
            if not improved:
                break
        self.incumbent.offer(current, self.key(chosen, m_required))
        return chosen

    # -- branch and bound ---------------------------------------------

    def child_bounds(self, block: _FeatureBlock, counts: np.ndarray, c: int, m_required: int, remaining_after: int) -> np.ndarray:
        """bound_partial (budgeted form) for every candidate child at once."""
        c_child = c + 1
        top = min(remaining_after, self.max_rules - c_child)
        low = max(0, m_required - c_child)
        if top < low:
            return np.full(len(block.kept), math.inf)
        base_neg = counts[self.neg]
        l_minus = np.count_nonzero(base_neg >= m_required) + np.rint(
            block.c_neg.T @ (base_neg == m_required - 1).astype(np.float32)
        ).astype(np.int64)
        base_pos = counts[self.pos]
        ks = np.arange(low, top + 1)
        cut = m_required - ks
        # A positive misses the cut when base + C < cut, i.e. base < cut-1, or base == cut-1 and C == 0.
        below = (base_pos[:, None] < (cut - 1)[None, :]).sum(axis=0)
        edge = (base_pos[:, None] == (cut - 1)[None, :]).astype(np.float32)
        l_plus = below[:, None] + np.rint(edge.T @ block.notc_pos).astype(np.int64)
        objectives = objective_from_counts(l_plus, l_minus[None, :], (c_child + ks)[:, None], m_required, self.weights)
        return objectives.min(axis=0)

    def run(self, m_required: int):
        root = SearchState((), np.zeros(self.n, dtype=np.int32), self.is_positive)
        root_bound = bound_partial(root, m_required, self.weights, len(self.blocks), self.max_rules)
        if self.budget.exhausted:
            self.open_bounds.append(root_bound)
            return
        if root_bound <= self.incumbent.objective:
            self.dfs(0, root.counts, (), m_required, root_bound)
        log.debug(f"M={m_required}: search finished")

    def dfs(self, depth: int, counts: np.ndarray, chosen: Tuple, m_required: int, node_bound: float):
        if not self.budget.tick():
            self.open_bounds.append(node_bound)
            return
        c = len(chosen)
        if c >= m_required:
            self.offer(counts, chosen, m_required)
        if depth == len(self.blocks) or c == self.max_rules:
            return

        block = self.blocks[depth]
        remaining_after = len(self.blocks) - depth - 1
        state = SearchState(chosen, counts, self.is_positive)
        skip_bound = bound_partial(state, m_required, self.weights, remaining_after, self.max_rules - c)
        bounds = self.child_bounds(block, counts, c, m_required, remaining_after)

        # Children by ascending bound; skip (-1) first among equals, then candidate order.
        labels = np.concatenate(([-1], np.arange(len(bounds))))
        all_bounds = np.concatenate(([skip_bound], bounds))
        order = np.lexsort((labels, all_bounds))
        for pos in order:
            bound = float(all_bounds[pos])
            # Strict: equal-objective completions are still visited for the tie-break.
            if bound > self.incumbent.objective:
                break
            if self.budget.exhausted:
                self.open_bounds.append(bound)
                return
            child = int(labels[pos])
            if child < 0:
                self.dfs(depth + 1, counts, chosen, m_required, bound)
            else:
                self.dfs(depth + 1, counts + block.concepts[:, child], chosen + ((depth, child),), m_required, bound)


# --------------------------------------------------------------------------
# Public entry points


def default_feature_order(X: FeatureMatrix, y: Labels) -> Tuple[int, ...]:
    """Features by descending |standardized logistic coefficient|."""
    magnitude = np.zeros(X.d)
    if np.unique(y.y).size == 2 and np.ptp(X.values, axis=0).max() > 0:
        model = fit_logistic(X, y, TrainHyper(max_epochs=300))
        for name, w in zip(model.feature_names, model.weights):
            magnitude[X.index_of(name)] = abs(w)
    return tuple(int(j) for j in np.lexsort((np.arange(X.d), -magnitude)))


def _check_inputs(X: FeatureMatrix, y: Labels, candidates: CandidateSet):
    X.require_finite()
    if X.n != y.n:
        raise StructuralError(f"{X.n} rows but {y.n} labels")
    if candidates.d != X.d:
        raise StructuralError(f"{candidates.d} candidate lists for {X.d} features")


def _result_from_key(key, candidates: CandidateSet, objective, lower_bound, certified, nodes, wall) -> SolveResult:
    _, m_required, features, indices = key
    rules = tuple(ConceptRule(f, float(candidates.thresholds[f][i])) for f, i in zip(features, indices))
    return SolveResult(
        best=Checklist(rules, m_required),
        objective=float(objective),
        lower_bound=float(min(lower_bound, objective)),
        certified_optimal=bool(certified),
        nodes_explored=int(nodes),
        wall_time=float(wall),
        candidate_indices=tuple(indices),
    )


def solve_checklist(X: FeatureMatrix, y: Labels, candidates: CandidateSet, config: SolverConfig) -> SolveResult:
    started = time.monotonic()
    _check_inputs(X, y, candidates)
    config = config.resolve(X)
    order = config.feature_order or default_feature_order(X, y)
    is_positive = y.is_positive
    blocks = []
    for j in order:
        kept = reduce_candidates(X.values[:, j], candidates.thresholds[j], is_positive)
        blocks.append(_FeatureBlock(j, candidates.thresholds[j], kept, X.values[:, j], is_positive))
    log.debug(f"Candidates per feature after reduction: {[len(b.kept) for b in blocks]}")

    incumbent = Incumbent()
    budget = _Budget(config.time_budget, config.node_limit)
    m_values = config.m_values

    def task(m_required):
        search = _Search(blocks, y, config, incumbent, budget)
        search.run(m_required)
        return search.open_bounds

    seeder = _Search(blocks, y, config, incumbent, budget)
    for m_required in m_values:
        seeder.greedy(m_required)
    log.debug(f"Greedy incumbent: {incumbent.objective:.6g}")

    if config.n_workers == 1:
        open_bounds = [task(m) for m in m_values]
    else:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            open_bounds = list(pool.map(task, m_values))

    leftovers = [b for bounds in open_bounds for b in bounds]
    lower = min([incumbent.objective, *leftovers])
    certified = not budget.exhausted or incumbent.objective - lower <= CERTIFICATE_SLACK
    if certified:
        lower = incumbent.objective
    wall = time.monotonic() - started
    result = _result_from_key(incumbent.key, candidates, incumbent.objective, lower, certified, budget.nodes, wall)
    if certified:
        log.info(f"Certified optimal checklist: objective {result.objective:.6g} ({budget.nodes} nodes, {wall:.1f}s)")
    else:
        log.warning(
            f"Solver budget exhausted: objective {result.objective:.6g}, bound {result.lower_bound:.6g}"
        )
    return result


def solve_fixed_thresholds(X: FeatureMatrix, y: Labels, fixed_t: Sequence[float], config: SolverConfig) -> SolveResult:
    """The same program with each feature's threshold frozen (mean-threshold ILP)."""
    fixed_t = np.asarray(fixed_t, dtype=np.float64)
    if fixed_t.shape != (X.d,) or not np.isfinite(fixed_t).all():
        raise StructuralError(f"need {X.d} finite fixed thresholds")
    return solve_checklist(X, y, CandidateSet.fixed(fixed_t), config)


@dataclass(frozen=True)
class OracleCaps:
    max_features: int = 4
    max_candidates_per_feature: int = 8


def brute_force_oracle(
    X: FeatureMatrix,
    y: Labels,
    candidates: CandidateSet,
    config: SolverConfig,
    caps: OracleCaps = OracleCaps(),
) -> SolveResult:
    """Enumerate every (skip | candidate) assignment and every M."""
    started = time.monotonic()
    _check_inputs(X, y, candidates)
    if X.d > caps.max_features:
        raise RefusalError(f"oracle refuses d={X.d} > {caps.max_features}")
    if max(candidates.sizes()) > caps.max_candidates_per_feature:
        raise RefusalError(
            f"oracle refuses {max(candidates.sizes())} candidates per feature (cap {caps.max_candidates_per_feature})"
        )
    config = config.resolve(X)
    concepts = [
        (X.values[:, j][:, None] > candidates.thresholds[j][None, :]).astype(np.int32)
        for j in range(X.d)
    ]
    pos, neg = y.pos_indices, y.neg_indices
    best_objective, best_key, visited = math.inf, None, 0
    for assignment in itertools.product(*[range(-1, len(t)) for t in candidates.thresholds]):
        picks = [(j, i) for j, i in enumerate(assignment) if i >= 0]
        n_rules = len(picks)
        if n_rules == 0 or n_rules > config.max_rules:
            continue
        counts = sum(concepts[j][:, i] for j, i in picks)
        for m_required in config.m_values:
            if m_required > n_rules:
                break
            visited += 1
            predicted = counts >= m_required
            objective = float(objective_from_counts(
                int(np.count_nonzero(~predicted[pos])), int(np.count_nonzero(predicted[neg])),
                n_rules, m_required, config.weights,
            ))
            key = (n_rules, m_required, tuple(j for j, _ in picks), tuple(i for _, i in picks))
            if objective < best_objective or (objective == best_objective and key < best_key):
                best_objective, best_key = objective, key
    return _result_from_key(best_key, candidates, best_objective, best_objective, True, visited, time.monotonic() - started)


# --------------------------------------------------------------------------
# MIP export


def mip_margins(X: FeatureMatrix) -> np.ndarray:
    """Per-feature margin that turns "X > t" into "X >= t + delta"."""
    ranges = np.ptp(X.values, axis=0)
    return np.where(ranges > 0, 1e-6 * ranges, 1e-6)


def build_mip(X: FeatureMatrix, y: Labels, config: SolverConfig) -> pulp.LpProblem:
    """The big-M program with the threshold variables left continuous.

    The printed strict inequalities are repaired with a margin delta_j on the
    threshold links and with integrality (+1) on the misclassification
    links.  w_j * C_ij is linearised through u_ij.
    """
    X.require_finite()
    if X.n != y.n:
        raise StructuralError(f"{X.n} rows but {y.n} labels")
    config = config.resolve(X)
    n, d = X.n, X.d
    lows, highs = X.values.min(axis=0), X.values.max(axis=0)
    delta = mip_margins(X)
    # thresholds may sit SENTINEL_OFFSET below the minimum
    big_a = np.asarray(config.big_a) + delta + SENTINEL_OFFSET
    big_b = config.big_b
    w = config.weights

    prob = pulp.LpProblem("checklist", pulp.LpMinimize)
    w_vars = [pulp.LpVariable(f"w_{j}", cat="Binary") for j in range(d)]
    t_vars = [pulp.LpVariable(f"t_{j}", lowBound=float(lows[j] - SENTINEL_OFFSET), upBound=float(highs[j])) for j in range(d)]
    z_vars = [pulp.LpVariable(f"z_{i}", cat="Binary") for i in range(n)]
    c_vars = [[pulp.LpVariable(f"C_{i}_{j}", cat="Binary") for j in range(d)] for i in range(n)]
    u_vars = [[pulp.LpVariable(f"u_{i}_{j}", lowBound=0, upBound=1) for j in range(d)] for i in range(n)]
    m_var = pulp.LpVariable("M", lowBound=config.m_range[0], upBound=config.m_range[1], cat="Integer")

    pos = set(y.pos_indices.tolist())
    prob += (
        pulp.lpSum(z_vars[i] for i in range(n) if i in pos)
        + w.lam * pulp.lpSum(z_vars[i] for i in range(n) if i not in pos)
        + w.eps_n * pulp.lpSum(w_vars)
        + w.eps_m * m_var
    ), "objective"

    for i in range(n):
        for j in range(d):
            x = float(X.values[i, j])
            # C = 1 whenever x > t, and C = 0 whenever x <= t (up to delta).
            prob += float(big_a[j]) * c_vars[i][j] + t_vars[j] >= x, f"link_up_{i}_{j}"
            prob += float(big_a[j]) * c_vars[i][j] + t_vars[j] <= x - float(delta[j]) + float(big_a[j]), f"link_dn_{i}_{j}"
    for i in range(n):
        satisfied = pulp.lpSum(u_vars[i])
        if i in pos:
            prob += big_b * z_vars[i] >= m_var - satisfied, f"miss_{i}"
        else:
            prob += big_b * z_vars[i] >= satisfied - m_var + 1, f"miss_{i}"
    for i in range(n):
        for j in range(d):
            prob += u_vars[i][j] <= w_vars[j], f"prod_w_{i}_{j}"
            prob += u_vars[i][j] <= c_vars[i][j], f"prod_c_{i}_{j}"
            prob += u_vars[i][j] >= w_vars[j] + c_vars[i][j] - 1, f"prod_wc_{i}_{j}"
    prob += m_var <= pulp.lpSum(w_vars), "m_le_n"
    prob += pulp.lpSum(w_vars) <= config.max_rules, "n_le_max_rules"
    return prob


def export_mip_form(X: FeatureMatrix, y: Labels, config: SolverConfig) -> str:
    """LP-format text of build_mip, for cross-checking with an external solver."""
    prob = build_mip(X, y, config)
    fd, path = tempfile.mkstemp(suffix=".lp")
    os.close(fd)
    try:
        prob.writeLP(path)
        with open(path, encoding="utf-8") as handle:
            return handle.read()
    finally:
        os.unlink(path)
