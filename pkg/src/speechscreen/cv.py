"""Subject-grouped, class-balanced k-fold assignment and the CV runner.

Every clip of a subject lands in one fold (the anti-leakage constraint);
subjects are placed greedily in descending clip-count order onto the fold
that keeps per-class clip counts closest to even, so fold sizes come out
near-equal even with few subjects.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, replace, asdict

import numpy as np

from .audio import Manifest
from .errors import FoldError, FeatureTableError
from .features import FeatureConfig, FeatureTable, check_table_schema
from .forest import ForestModel, ForestParams, predict_scores, train_forest
from .metrics import (
    ClassificationScores,
    RocCurve,
    aggregate_folds,
    confusion_and_scores,
    roc_auc,
)
from .validation import LABELS, POSITIVE_LABEL, binary_to_labels, labels_to_binary

REPORT_SCHEMA_VERSION = 1


@dataclass
class FoldAssignment:
    k: int
    subject_to_fold: dict[str, int]
    counts: list[dict[str, int]]  # per fold: label -> clip count

    def fold_of(self, subject_id: str) -> int:
        return self.subject_to_fold[subject_id]


@dataclass
class CvRunConfig:
    forest: ForestParams
    features: FeatureConfig
    seed: int
    k: int = 5

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")


@dataclass
class FoldEval:
    fold: int
    n_test: int
    scores: ClassificationScores
    auroc: float | None
    roc: RocCurve | None


@dataclass
class EvalReport:
    folds: list[FoldEval]
    aggregate: dict
    config: dict
    seed: int
    averaging_mode: str = "weighted"
    schema_version: int = REPORT_SCHEMA_VERSION


def balanced_group_folds(labels, groups, k: int, seed: int) -> dict[str, int]:
    """Greedy balanced assignment of groups to k folds.

    Groups are processed in descending row count; each goes to the fold
    currently holding the fewest rows of its class (the longest-processing-
    time greedy, which keeps every per-class fold count within one group of
    the even share). Ties prefer the fold with the fewest rows overall and
    are finally broken by a seeded shuffle.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    labels = np.asarray(labels, dtype=object)
    groups = np.asarray(groups, dtype=object)
    if labels.size != groups.size:
        raise ValueError("labels and groups differ in length")

    group_label: dict = {}
    group_count: dict = {}
    for lab, grp in zip(labels, groups):
        if group_label.setdefault(grp, lab) != lab:
            raise FoldError(f"group {grp!r} carries more than one label")
        group_count[grp] = group_count.get(grp, 0) + 1

    class_names = sorted({str(lab) for lab in group_label.values()})
    per_class_groups = {lab: 0 for lab in class_names}
    for lab in group_label.values():
        per_class_groups[str(lab)] += 1
    for lab, n_groups in sorted(per_class_groups.items()):
        if n_groups < k:
            warnings.warn(
                f"class {lab!r} has only {n_groups} subjects for {k} folds; "
                "some folds will miss this class",
                stacklevel=2,
            )

    rng = np.random.default_rng(seed)
    order = list(group_label)
    rng.shuffle(order)
    order.sort(key=lambda g: -group_count[g])  # stable: seeded order breaks count ties

    counts = [{lab: 0 for lab in class_names} for _ in range(k)]
    totals = [0] * k
    assignment: dict = {}
    for grp in order:
        lab = str(group_label[grp])
        size = group_count[grp]
        rank = {int(f): r for r, f in enumerate(rng.permutation(k))}
        fold = min(range(k), key=lambda f: (counts[f][lab], totals[f], rank[f]))
        assignment[grp] = fold
        counts[fold][lab] += size
        totals[fold] += size
    return assignment


def assign_folds(manifest: Manifest, k: int = 5, seed: int | None = None) -> FoldAssignment:
    """Build (or validate) the subject -> fold mapping for a manifest.

    A manifest carrying a fold column is honored verbatim after checking
    the grouping constraint and dense fold indices; otherwise seeded
    greedy balancing runs (seed is then mandatory).
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if manifest.has_folds:
        mapping: dict[str, int] = {}
        for e in manifest.entries:
            if e.fold is None:
                raise FoldError(f"clip {e.clip_id!r} is missing its fold index")
            if not 0 <= e.fold < k:
                raise FoldError(f"clip {e.clip_id!r} has fold {e.fold} outside 0..{k - 1}")
            if mapping.setdefault(e.subject_id, e.fold) != e.fold:
                raise FoldError(
                    f"subject {e.subject_id!r} is split across folds "
                    f"{mapping[e.subject_id]} and {e.fold}"
                )
        missing = sorted(set(range(k)) - set(mapping.values()))
        if missing:
            raise FoldError(f"fold indices not dense: folds {missing} have no subjects")
    else:
        if seed is None:
            raise ValueError("seed is required when the manifest has no fold column")
        labels = [e.label for e in manifest.entries]
        groups = [e.subject_id for e in manifest.entries]
        mapping = balanced_group_folds(labels, groups, k, seed)

    counts = [{lab: 0 for lab in LABELS} for _ in range(k)]
    for e in manifest.entries:
        counts[mapping[e.subject_id]][e.label] += 1
    return FoldAssignment(k=k, subject_to_fold=mapping, counts=counts)


class SubjectGroupedKFold:
    """sklearn-style splitter enforcing the one-fold-per-group constraint."""

    def __init__(self, n_splits: int = 5, seed: int | None = None):
        if n_splits < 2:
            raise ValueError(f"n_splits must be >= 2, got {n_splits}")
        self.n_splits = n_splits
        self.seed = seed

    def get_n_splits(self, X=None, y=None, groups=None) -> int:
        return self.n_splits

    def split(self, X, y, groups):
        if self.seed is None:
            raise ValueError("seed must be set before splitting")
        y = np.asarray(y, dtype=object)
        groups = np.asarray(groups, dtype=object)
        mapping = balanced_group_folds(y, groups, self.n_splits, self.seed)
        folds = np.array([mapping[g] for g in groups])
        indices = np.arange(groups.size)
        for f in range(self.n_splits):
            test = indices[folds == f]
            train = indices[folds != f]
            yield train, test

    def get_params(self, deep=True):
        return {"n_splits": self.n_splits, "seed": self.seed}


def write_fold_csv(assignment: FoldAssignment, comments: list[str] | None = None) -> str:
    lines = list(comments or [])
    lines.append("subject_id,fold")
    for subject in sorted(assignment.subject_to_fold):
        lines.append(f"{subject},{assignment.subject_to_fold[subject]}")
    return "\n".join(lines) + "\n"


def read_fold_csv(text: str) -> tuple[dict[str, int], list[str]]:
    comments = []
    body = []
    for ln in text.splitlines():
        if ln.lstrip().startswith("#"):
            comments.append(ln)
        elif ln.strip():
            body.append(ln)
    if not body:
        raise FoldError("fold CSV is empty")
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    if [c.strip() for c in rows[0]] != ["subject_id", "fold"]:
        raise FoldError(f"fold CSV header must be subject_id,fold, got {rows[0]!r}")
    mapping: dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise FoldError(f"fold CSV line {lineno}: expected 2 fields")
        subject, fold_cell = row[0].strip(), row[1].strip()
        if subject in mapping:
            raise FoldError(f"fold CSV line {lineno}: duplicate subject {subject!r}")
        try:
            mapping[subject] = int(fold_cell)
        except ValueError:
            raise FoldError(f"fold CSV line {lineno}: fold {fold_cell!r} is not an integer") from None
    return mapping, comments


def fold_seed(master_seed: int, fold_index: int) -> int:
    """Deterministic per-fold training seed derived from the master seed."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(fold_index,))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class CvResult:
    report: EvalReport
    models: list[ForestModel]
    assignment: FoldAssignment


def run_cross_validation(
    manifest: Manifest,
    table: FeatureTable,
    config: CvRunConfig,
    jobs: int = 1,
    assignment: FoldAssignment | None = None,
) -> CvResult:
    """Train/evaluate one forest per fold and aggregate the metrics.

    Features must exist for every manifest clip. A fold whose test side
    misses a class gets auroc=None (excluded from the aggregate, counted),
    never a fabricated number.
    """
    check_table_schema(table, config.features)
    by_clip = table.by_clip()
    missing = [e.clip_id for e in manifest.entries if e.clip_id not in by_clip]
    if missing:
        raise FeatureTableError(
            f"features missing for {len(missing)} manifest clips (first: {missing[0]!r})"
        )
    for e in manifest.entries:
        row = by_clip[e.clip_id]
        if row.label is not None and row.label != e.label:
            raise FeatureTableError(
                f"clip {e.clip_id!r}: feature table label {row.label} contradicts manifest {e.label}"
            )

    if assignment is None:
        assignment = assign_folds(manifest, k=config.k, seed=config.seed)
    else:
        if assignment.k != config.k:
            raise FoldError(f"assignment has k={assignment.k} but config.k={config.k}")
        unassigned = {e.subject_id for e in manifest.entries} - set(assignment.subject_to_fold)
        if unassigned:
            raise FoldError(f"assignment is missing {len(unassigned)} manifest subjects")

    X = np.vstack([by_clip[e.clip_id].values for e in manifest.entries])
    y = labels_to_binary([e.label for e in manifest.entries])
    clip_fold = np.array([assignment.subject_to_fold[e.subject_id] for e in manifest.entries])

    folds: list[FoldEval] = []
    models: list[ForestModel] = []
    for f in range(config.k):
        test_mask = clip_fold == f
        if not test_mask.any():
            raise FoldError(f"fold {f} has no test clips")
        if test_mask.all():
            raise FoldError(f"fold {f} leaves no training clips")
        params = replace(config.forest, seed=fold_seed(config.seed, f))
        model = train_forest(X[~test_mask], y[~test_mask], table.names, params, jobs=jobs)
        scores = predict_scores(model, X[test_mask])
        predicted = binary_to_labels(scores >= 0.5)
        truth = binary_to_labels(y[test_mask])
        cls = confusion_and_scores(truth, predicted)
        if 0 < int(y[test_mask].sum()) < int(test_mask.sum()):
            curve = roc_auc(truth, scores)
            auroc = curve.auc
        else:
            curve, auroc = None, None
        folds.append(FoldEval(fold=f, n_test=int(test_mask.sum()), scores=cls, auroc=auroc, roc=curve))
        models.append(model)

    per_fold = [
        {
            "accuracy": fe.scores.accuracy,
            "precision": fe.scores.weighted.precision,
            "recall": fe.scores.weighted.recall,
            "f1": fe.scores.weighted.f1,
            "precision_positive": fe.scores.positive.precision,
            "recall_positive": fe.scores.positive.recall,
            "f1_positive": fe.scores.positive.f1,
            "auroc": fe.auroc,
        }
        for fe in folds
    ]
    aggregate = aggregate_folds(per_fold)

    config_echo = {
        "k": config.k,
        "seed": config.seed,
        "forest": asdict(config.forest),
        "features": config.features.to_dict(),
        "positive_class": POSITIVE_LABEL,
    }
    report = EvalReport(folds=folds, aggregate=aggregate, config=config_echo, seed=config.seed)
    return CvResult(report=report, models=models, assignment=assignment)


def _prf_dict(prf) -> dict:
    return {
        "precision": prf.precision,
        "recall": prf.recall,
        "f1": prf.f1,
        "degenerate": prf.degenerate,
    }


def report_to_json(report: EvalReport) -> str:
    doc = {
        "schema_version": report.schema_version,
        "seed": report.seed,
        "averaging_mode": report.averaging_mode,
        "config": report.config,
        "folds": [
            {
                "fold": fe.fold,
                "n_test": fe.n_test,
                "confusion": fe.scores.confusion.to_dict(),
                "accuracy": fe.scores.accuracy,
                "weighted": _prf_dict(fe.scores.weighted),
                "positive": _prf_dict(fe.scores.positive),
                "auroc": fe.auroc,
            }
            for fe in report.folds
        ],
        "aggregate": report.aggregate,
    }
    return json.dumps(doc, indent=2) + "\n"
