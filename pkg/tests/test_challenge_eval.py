"""
Copyright 2025 The cbvcc-baseline Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

     http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

import csv
import json
import math

import numpy as np
import pytest

from hypothesis import assume, given, settings
import hypothesis.strategies as st

from scripts.challenge_eval import (Confusion, auc, cell_count_bins, challenge_score,
                                    combine_score, confusion_metrics, cv_fold_task, cv_tasks,
                                    evaluate_predictions, grouped_kfold, roc_area, roc_curve,
                                    run_cross_validation, save_cv_results, save_report, save_roc,
                                    save_strata, snr_bins, stratified_scores)
from scripts.dataset_manifest import ManifestEntry, Prediction
from scripts.lib import DegenerateError, InfeasibleError, ShapeError
from scripts.video_quality import QualityReport

# (AUC, precision, recall, balanced accuracy) -> published overall score
PUBLISHED_ROWS = [
    (0.944, 0.806, 1.000, 0.914, 0.922),
    (0.861, 0.840, 0.840, 0.863, 0.853),
    (0.887, 0.710, 0.880, 0.811, 0.835),
    (0.880, 0.760, 0.760, 0.794, 0.815),
    (0.784, 0.679, 0.760, 0.751, 0.752),
    (0.827, 0.588, 0.800, 0.700, 0.749),
    (0.787, 0.737, 0.560, 0.709, 0.716),
    (0.750, 0.535, 0.920, 0.674, 0.726),
    (0.781, 0.682, 0.600, 0.700, 0.709),
    (0.744, 0.625, 0.600, 0.671, 0.677),
    (0.769, 0.750, 0.360, 0.637, 0.657),
    (0.669, 0.417, 1.000, 0.500, 0.651),
    (0.693, 0.600, 0.600, 0.657, 0.648),
    (0.726, 0.600, 0.480, 0.626, 0.631),
    (0.665, 0.667, 0.480, 0.654, 0.626),
    (0.669, 0.533, 0.640, 0.620, 0.626),
    (0.631, 0.517, 0.600, 0.600, 0.596),
    (0.632, 0.484, 0.600, 0.571, 0.584),
    (0.747, 0.750, 0.120, 0.546, 0.582),
    (0.702, 0.562, 0.360, 0.580, 0.581),
    (0.726, 0.583, 0.280, 0.569, 0.577),
    (0.655, 0.556, 0.400, 0.586, 0.570),
    (0.578, 0.436, 0.680, 0.526, 0.560),
    (0.603, 0.500, 0.480, 0.569, 0.551),
    (0.425, 0.556, 0.200, 0.543, 0.430),
    (0.663, 0.000, 0.000, 0.486, 0.363),
]


def _pair_auc(y, s):
  pos = [b for a, b in zip(y, s) if a == 1]
  neg = [b for a, b in zip(y, s) if a == 0]
  total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
  return total / (len(pos) * len(neg))


@pytest.mark.parametrize("row", PUBLISHED_ROWS)
def test_published_scores(row):
  auc_value, precision, recall, balanced, score = row
  assert abs(combine_score(auc_value, precision, recall, balanced) - score) <= 0.001


def test_perfect_score():
  assert combine_score(1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0)


def test_perfect_predictions():
  precision, recall, balanced, confusion = confusion_metrics([1, 0, 1, 0], [1, 0, 1, 0])
  assert (precision, recall, balanced) == (1.0, 1.0, 1.0)
  assert confusion == Confusion(2, 2, 0, 0)


def test_all_zero_predictions():
  precision, recall, balanced, _ = confusion_metrics([1, 0, 1, 0, 0], [0] * 5)
  assert (precision, recall, balanced) == (0.0, 0.0, 0.5)


def test_counts_behind_a_published_row():
  y_true = [1] * 25 + [0] * 35
  y_pred = [1] * 25 + [1] * 6 + [0] * 29
  precision, recall, balanced, confusion = confusion_metrics(y_true, y_pred)
  assert confusion == Confusion(25, 29, 6, 0)
  assert precision == pytest.approx(25.0 / 31.0)
  assert recall == 1.0
  assert balanced == pytest.approx(0.5 * (1.0 + 29.0 / 35.0))
  assert round(balanced, 3) == 0.914


def test_confusion_errors():
  with pytest.raises(ShapeError):
    confusion_metrics([1, 0], [1])
  with pytest.raises(ShapeError):
    confusion_metrics([1, 2], [1, 0])


def test_auc_examples():
  assert auc([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.1]) == 0.75
  assert auc([0, 0, 1, 1], [0.1, 0.2, 0.3, 0.4]) == 1.0
  assert auc([0, 1, 0, 1], [0.5] * 4) == 0.5


def test_auc_needs_both_classes():
  with pytest.raises(DegenerateError):
    auc([1, 1], [0.2, 0.3])
  with pytest.raises(DegenerateError):
    roc_curve([0, 0], [0.2, 0.3])


def test_trapezoid_matches_pair_count():
  rng = np.random.default_rng(0)
  for _ in range(1000):
    n = int(rng.integers(2, 30))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    # Coarse scores produce ties
    s = rng.integers(0, 6, n) / 5.0
    value = auc(y, s)
    assert abs(roc_area(roc_curve(y, s)) - value) <= 1e-12
    assert value == pytest.approx(_pair_auc(y, s), abs=1e-12)


def test_roc_endpoints():
  points = roc_curve([1, 0, 1, 0, 1], [0.9, 0.9, 0.4, 0.2, 0.2])
  assert points[0] == (math.inf, 0.0, 0.0)
  assert points[-1][1:] == (1.0, 1.0)
  thresholds = [p[0] for p in points]
  assert thresholds == sorted(thresholds, reverse=True)
  assert len(points) == 4


labels_and_scores = st.lists(st.tuples(st.integers(0, 1), st.integers(-1000, 1000)),
                             min_size=2, max_size=40, unique_by=lambda t: t[1])


@settings(max_examples=200, deadline=None)
@given(labels_and_scores)
def test_auc_of_negated_scores(pairs):
  y = [p[0] for p in pairs]
  s = np.array([p[1] for p in pairs], dtype=np.float64)
  assume(0 < sum(y) < len(y))
  assert auc(y, s) + auc(y, -s) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(labels_and_scores)
def test_auc_increasing_transform(pairs):
  y = [p[0] for p in pairs]
  s = np.array([p[1] for p in pairs], dtype=np.float64)
  assume(0 < sum(y) < len(y))
  assert auc(y, s ** 3 + 7.0) == auc(y, s)
  assert auc(y, 2.0 * s - 3.0) == auc(y, s)


unit = st.floats(0.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(unit, unit, unit, unit, st.integers(0, 3), st.floats(0.0, 1.0))
def test_score_is_monotone(a, p, r, b, which, delta):
  args = [a, p, r, b]
  bumped = list(args)
  bumped[which] += delta
  assert combine_score(*bumped) >= combine_score(*args)


def test_challenge_report():
  y = [1, 1, 0, 0, 1]
  probs = [0.9, 0.6, 0.55, 0.2, 0.4]
  preds = [1, 1, 1, 0, 0]
  report = challenge_score(y, probs, preds)
  assert report.score == combine_score(report.auc, report.precision, report.recall,
                                       report.balanced_accuracy)
  assert sum(report.confusion) == 5
  assert report.roc_points[0][1:] == (0.0, 0.0)
  assert report.roc_points[-1][1:] == (1.0, 1.0)


def test_evaluate_skips_unlabeled(tmp_path):
  preds = [Prediction("a", 0.9, 1), Prediction("b", 0.2, 0), Prediction("c", 0.7, 1)]
  report = evaluate_predictions(preds, {"a": 1, "b": 0})
  assert sum(report.confusion) == 2
  assert report.auc == 1.0
  path = str(tmp_path / "report.json")
  save_report(report, path)
  data = json.load(open(path))
  assert data["balanced_accuracy"] == 1.0
  assert data["n"] == 2
  assert data["roc_points"][0] == [0.0, 0.0]
  roc_path = str(tmp_path / "roc.csv")
  save_roc(report, roc_path)
  rows = list(csv.reader(open(roc_path)))
  assert rows[0] == ["threshold", "fpr", "tpr"]
  assert rows[1] == ["inf", "0.0", "0.0"]
  assert rows[-1][1:] == ["1.0", "1.0"]


def _entries(groups):
  return [ManifestEntry("p%02d" % i, "p%02d.tif" % i, i % 2, g, "train")
          for i, g in enumerate(groups)]


def test_folds_of_singleton_groups():
  plan = grouped_kfold(_entries(["g%d" % i for i in range(10)]), k=5, repeats=3, seed=1)
  for folds in plan.folds:
    assert [len(f) for f in folds] == [2] * 5
    assert sorted(g for f in folds for g in f) == sorted("g%d" % i for i in range(10))


def test_large_group_stays_whole():
  groups = ["big"] * 6 + ["a", "b", "c", "d"]
  plan = grouped_kfold(_entries(groups), k=5, repeats=2, seed=0)
  for folds in plan.folds:
    assert ["big"] in folds
    assert sorted(len(f) for f in folds) == [1] * 5


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 11), min_size=5, max_size=60), st.integers(0, 2 ** 31 - 1))
def test_groups_never_split(group_idx, seed):
  groups = ["g%d" % g for g in group_idx]
  assume(len(set(groups)) >= 5)
  plan = grouped_kfold(_entries(groups), k=5, repeats=2, seed=seed)
  for folds in plan.folds:
    flat = [g for f in folds for g in f]
    assert sorted(flat) == sorted(set(groups))
    assert all(folds)


def test_plan_is_seeded():
  entries = _entries(["g%d" % (i % 13) for i in range(40)])
  assert grouped_kfold(entries, seed=4) == grouped_kfold(entries, seed=4)
  assert grouped_kfold(entries, seed=4).folds != grouped_kfold(entries, seed=5).folds


def test_infeasible_plans():
  with pytest.raises(InfeasibleError):
    grouped_kfold(_entries(["a", "b", "c", "d"]), k=5)
  with pytest.raises(InfeasibleError):
    grouped_kfold(_entries(["a", "b", "", "d", "e", "f"]), k=5)


def _cv_problem():
  rng = np.random.default_rng(3)
  y = np.array([0, 1] * 20)
  X = rng.normal(size=(40, 3)) + y[:, None] * 1.5
  groups = ["g%02d" % (i // 2) for i in range(40)]
  return X, y, groups


def test_cv_is_order_independent():
  X, y, groups = _cv_problem()
  plan = grouped_kfold(_entries(groups), k=5, repeats=5, seed=2)
  result, rows = run_cross_validation(X, y, groups, plan, 200.0)
  assert len(rows) == 25
  assert [(r["repeat"], r["fold"]) for r in rows] == [(r, f) for r in range(5) for f in range(5)]
  reversed_rows = [cv_fold_task(t) for t in reversed(cv_tasks(X, y, groups, plan, 200.0))]
  reversed_rows.sort(key=lambda row: (row["repeat"], row["fold"]))
  assert reversed_rows == rows
  _, parallel_rows = run_cross_validation(X, y, groups, plan, 200.0, jobs=2)
  assert parallel_rows == rows
  for r in range(5):
    for f in range(5):
      assert result.fold_scores[r][f] == (rows[5 * r + f]["balanced_accuracy"],
                                          rows[5 * r + f]["score"])


def test_cv_folds_hold_out_whole_groups():
  X, y, groups = _cv_problem()
  plan = grouped_kfold(_entries(groups), k=5, repeats=1, seed=0)
  for task in cv_tasks(X, y, groups, plan, 200.0):
    train_groups = set(groups[i] for i in task["train_idx"])
    test_groups = set(groups[i] for i in task["test_idx"])
    assert not train_groups & test_groups
    assert len(task["train_idx"]) + len(task["test_idx"]) == 40


def test_cv_results_csv(tmp_path):
  X, y, groups = _cv_problem()
  plan = grouped_kfold(_entries(groups), k=5, repeats=1, seed=0)
  _, rows = run_cross_validation(X, y, groups, plan, 200.0)
  path = str(tmp_path / "cv_results.csv")
  save_cv_results(rows, path)
  loaded = list(csv.DictReader(open(path)))
  assert len(loaded) == 5
  assert float(loaded[0]["balanced_accuracy"]) == rows[0]["balanced_accuracy"]


def test_snr_bins():
  reports = [QualityReport("a", 1, 0.5, []), QualityReport("b", 1, 11.99, []),
             QualityReport("c", 1, 12.0, []), QualityReport("d", 1, 12.5, []),
             QualityReport("e", 0, None, []), QualityReport("f", 2, 3.0, [])]
  assert dict(snr_bins(reports)) == {"a": 0.0, "b": 11.0, "c": 11.0, "f": 3.0}
  assert dict(snr_bins(reports, width=4.0)) == {"a": 0.0, "b": 8.0, "c": 8.0, "f": 0.0}
  assert dict(cell_count_bins(reports)) == {"a": 1, "b": 1, "c": 1, "d": 1, "e": 0, "f": 2}


def _strata_case():
  preds = [Prediction("a1", 0.9, 1), Prediction("a2", 0.4, 0), Prediction("a3", 0.6, 1),
           Prediction("a4", 0.1, 0),
           Prediction("b1", 0.8, 1), Prediction("b2", 0.3, 0), Prediction("b3", 0.2, 0),
           Prediction("c1", 0.3, 0), Prediction("c2", 0.7, 1)]
  labels = {"a1": 1, "a2": 1, "a3": 0, "a4": 0, "b1": 1, "b2": 0, "b3": 0, "c1": 0, "c2": 0}
  strata = {"a1": 1, "a2": 1, "a3": 1, "a4": 1, "b1": 2, "b2": 2, "b3": 2, "c1": 3, "c2": 3}
  return preds, labels, strata


def test_stratified_by_hand():
  reports = stratified_scores(*_strata_case())
  assert list(reports) == [1, 2, 3]
  first = reports[1]
  assert (first.n, first.n_pos, first.n_neg) == (4, 2, 2)
  assert first.balanced_accuracy == 0.5
  assert first.auc == 0.75
  assert first.score == pytest.approx(0.4 * 0.75 + 0.2 * 1.5)
  assert reports[2].score == pytest.approx(1.0)
  assert reports[2].status == "ok"


def test_single_class_stratum(caplog):
  third = stratified_scores(*_strata_case())[3]
  assert third.status == "insufficient"
  assert third.auc is None and third.score is None
  assert third.balanced_accuracy == 0.25
  assert "single class" in caplog.text


def test_one_bin_equals_global():
  preds, labels, _ = _strata_case()
  everything = dict((p.patch_id, 0) for p in preds)
  report = stratified_scores(preds, labels, everything)[0]
  full = evaluate_predictions(preds, labels)
  assert report.score == full.score
  assert report.balanced_accuracy == full.balanced_accuracy


def test_strata_csv(tmp_path):
  preds, labels, strata = _strata_case()
  path = str(tmp_path / "strata.csv")
  save_strata([("n_cells", stratified_scores(preds, labels, strata))], path)
  rows = list(csv.DictReader(open(path)))
  assert [r["bin"] for r in rows] == ["1", "2", "3"]
  assert rows[2]["status"] == "insufficient"
  assert rows[2]["auc"] == ""
