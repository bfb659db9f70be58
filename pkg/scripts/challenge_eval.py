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

Challenge metrics, ROC/AUC, grouped cross-validation and stratified scores
"""

import csv
import logging
import math

from collections import namedtuple, OrderedDict
from fractions import Fraction

import numpy as np

from scipy.stats import rankdata

from scripts.lib import (DegenerateError, InfeasibleError, ShapeError, derive_seed,
                         format_float, run_parallel, write_json)
from scripts.logistic_model import predict_label, predict_proba, train

AUC_WEIGHT = 0.4
COUNT_WEIGHT = 0.2
MAX_SNR = 12.0
SNR_BIN_WIDTH = 1.0

CV_FIELDS = ["repeat", "fold", "n_train", "n_test", "train_balanced_accuracy", "train_score",
             "balanced_accuracy", "score"]
STRATA_FIELDS = ["stratum", "bin", "n", "n_pos", "n_neg", "balanced_accuracy", "auc", "score",
                 "status"]
REPLICATE_FIELDS = ["replicate", "seed", "n_tracks", "auc", "precision", "recall",
                    "balanced_accuracy", "score"]

Confusion = namedtuple("Confusion", ["tp", "tn", "fp", "fn"])
StratumReport = namedtuple("StratumReport", ["bin", "n", "n_pos", "n_neg", "balanced_accuracy",
                                             "auc", "score", "status"])


class EvalReport(namedtuple("EvalReport", ["auc", "precision", "recall", "balanced_accuracy",
                                           "score", "roc_points", "confusion"])):
  """Challenge metrics of one prediction set"""
  __slots__ = ()

  def to_json(self):
    return {"auc"               : self.auc,
            "precision"         : self.precision,
            "recall"            : self.recall,
            "balanced_accuracy" : self.balanced_accuracy,
            "score"             : self.score,
            "confusion"         : dict(self.confusion._asdict()),
            "n"                 : sum(self.confusion),
            "roc_points"        : [[fpr, tpr] for _, fpr, tpr in self.roc_points]}


class CvPlan(namedtuple("CvPlan", ["k", "repeats", "seed", "folds"])):
  """Group assignment of a repeated grouped k-fold

  folds[r][f] is the sorted list of group ids held out in fold f of
  repeat r.
  """
  __slots__ = ()

  def fold_of(self, repeat, group_id):
    for f, groups in enumerate(self.folds[repeat]):
      if group_id in groups:
        return f
    raise KeyError(group_id)


class CvResult(namedtuple("CvResult", ["fold_scores", "plan", "seed"])):
  """fold_scores[r][f] = (balanced_accuracy, score) of the held-out fold"""
  __slots__ = ()


def _check_labels(values, name):
  values = np.asarray(values).reshape(-1)
  if not set(np.unique(values).tolist()) <= {0, 1}:
    raise ShapeError("%s must contain only 0 and 1" % name)
  return values.astype(int)


def _ratio(num, den):
  return Fraction(num, den) if den else Fraction(0)


def confusion_metrics(y_true, y_pred):
  """Precision, recall and balanced accuracy from label counts

  Zero denominators give 0 for the affected ratio.

  Returns:
    (precision, recall, balanced_accuracy, Confusion)
  """
  if len(y_true) != len(y_pred):
    raise ShapeError("Label vectors differ in length: %d vs %d" % (len(y_true), len(y_pred)))
  y_true = _check_labels(y_true, "y_true")
  y_pred = _check_labels(y_pred, "y_pred")
  tp = int(np.sum((y_true == 1) & (y_pred == 1)))
  tn = int(np.sum((y_true == 0) & (y_pred == 0)))
  fp = int(np.sum((y_true == 0) & (y_pred == 1)))
  fn = int(np.sum((y_true == 1) & (y_pred == 0)))
  precision = _ratio(tp, tp + fp)
  recall = _ratio(tp, tp + fn)
  balanced = (recall + _ratio(tn, tn + fp)) / 2
  return float(precision), float(recall), float(balanced), Confusion(tp, tn, fp, fn)


def auc(y_true, scores):
  """Area under the ROC curve, Mann-Whitney form with ties counted 1/2"""
  y_true = _check_labels(y_true, "y_true")
  scores = np.asarray(scores, dtype=np.float64).reshape(-1)
  if len(scores) != len(y_true):
    raise ShapeError("Scores and labels differ in length: %d vs %d" % (len(scores), len(y_true)))
  n_pos = int(np.sum(y_true == 1))
  n_neg = len(y_true) - n_pos
  if n_pos == 0 or n_neg == 0:
    raise DegenerateError("AUC needs both classes, got %d positives and %d negatives" %
                          (n_pos, n_neg))
  ranks = rankdata(scores)
  u_stat = float(np.sum(ranks[y_true == 1])) - n_pos * (n_pos + 1) / 2.0
  return u_stat / (n_pos * n_neg)


def roc_curve(y_true, scores):
  """ROC points over tie-grouped thresholds, from (0, 0) to (1, 1)

  Returns:
    list of (threshold, fpr, tpr), thresholds decreasing; the first point
    has threshold +inf
  """
  y_true = _check_labels(y_true, "y_true")
  scores = np.asarray(scores, dtype=np.float64).reshape(-1)
  n_pos = int(np.sum(y_true == 1))
  n_neg = len(y_true) - n_pos
  if n_pos == 0 or n_neg == 0:
    raise DegenerateError("ROC needs both classes")
  order = np.argsort(-scores, kind="mergesort")
  s_sorted = scores[order]
  y_sorted = y_true[order]
  tps = np.cumsum(y_sorted == 1)
  fps = np.cumsum(y_sorted == 0)
  # Last index of every group of tied scores
  last = np.r_[np.nonzero(np.diff(s_sorted))[0], len(s_sorted) - 1]
  points = [(math.inf, 0.0, 0.0)]
  for i in last:
    points.append((float(s_sorted[i]), fps[i] / float(n_neg), tps[i] / float(n_pos)))
  return points


def roc_area(points):
  """Trapezoidal area under ROC points"""
  fpr = np.array([p[1] for p in points])
  tpr = np.array([p[2] for p in points])
  return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def combine_score(auc_value, precision, recall, balanced_accuracy):
  """Score = 0.4 AUC + 0.2 (precision + recall + balanced accuracy)"""
  return AUC_WEIGHT * auc_value + COUNT_WEIGHT * (precision + recall + balanced_accuracy)


def challenge_score(y_true, probs, y_pred):
  """Full challenge report of one prediction set

  Args:
    y_true : true labels
    probs  : class-1 probabilities, ranked for the AUC
    y_pred : predicted labels, counted for precision/recall/BA

  Returns:
    EvalReport
  """
  precision, recall, balanced, confusion = confusion_metrics(y_true, y_pred)
  auc_value = auc(y_true, probs)
  return EvalReport(auc_value, precision, recall, balanced,
                    combine_score(auc_value, precision, recall, balanced),
                    roc_curve(y_true, probs), confusion)


def align_predictions(preds, labels):
  """Pair predictions with known labels, in prediction order

  Returns:
    (patch_ids, y_true, probs, y_pred)
  """
  ids, y_true, probs, y_pred = [], [], [], []
  for p in preds:
    label = labels.get(p.patch_id)
    if label is None:
      continue
    ids.append(p.patch_id)
    y_true.append(label)
    probs.append(p.prob_class1)
    y_pred.append(p.pred_label)
  return ids, np.array(y_true, dtype=int), np.array(probs), np.array(y_pred, dtype=int)


def evaluate_predictions(preds, labels):
  """Challenge report of predictions against a patch_id -> label map"""
  ids, y_true, probs, y_pred = align_predictions(preds, labels)
  logging.info("Evaluating %d labeled predictions" % len(ids))
  return challenge_score(y_true, probs, y_pred)


def grouped_kfold(entries, k = 5, repeats = 5, seed = 0):
  """Plan a repeated k-fold that never splits a source video

  For every repeat the groups are shuffled with a repeat-specific seed,
  ordered by decreasing size (stable, so the shuffle breaks ties) and dealt
  to the fold currently holding the fewest patches.

  Args:
    entries : manifest entries (patch_id, group_id) of the training data
    k       : fold count
    repeats : repeat count
    seed    : run seed

  Returns:
    CvPlan
  """
  sizes = OrderedDict()
  for e in entries:
    if not e.group_id:
      raise InfeasibleError("Patch %s has no group id" % e.patch_id)
    sizes[e.group_id] = sizes.get(e.group_id, 0) + 1
  groups = sorted(sizes)
  if len(groups) < k:
    raise InfeasibleError("%d groups cannot fill %d folds" % (len(groups), k))
  folds = []
  for r in range(repeats):
    rng = np.random.default_rng(derive_seed(seed, "cv-repeat", r))
    order = [groups[i] for i in rng.permutation(len(groups))]
    order.sort(key=lambda g: -sizes[g])
    fold_groups = [[] for _ in range(k)]
    fold_sizes = [0] * k
    for g in order:
      f = min(range(k), key=lambda i: (fold_sizes[i], i))
      fold_groups[f].append(g)
      fold_sizes[f] += sizes[g]
    folds.append([sorted(fg) for fg in fold_groups])
    logging.debug("CV repeat %d fold sizes: %s" % (r, fold_sizes))
  return CvPlan(k, repeats, seed, folds)


def _fold_metrics(model, X, y):
  """(balanced accuracy, score or None) of a model on rows X"""
  if len(y) == 0:
    return None, None
  probs = predict_proba(model, X)
  preds = predict_label(model, X)
  _, _, balanced, _ = confusion_metrics(y, preds)
  if len(set(y.tolist())) < 2:
    return balanced, None
  return balanced, challenge_score(y, probs, preds).score


def cv_fold_task(task):
  """Train on the other folds and score the held-out fold

  Args:
    task : dict with X, y, train_idx, test_idx, repeat, fold, c_reg,
           threshold, standardize

  Returns:
    dict row of cv_results.csv
  """
  X, y = task["X"], task["y"]
  tr, te = task["train_idx"], task["test_idx"]
  model = train(X[tr], y[tr], task["c_reg"], threshold=task["threshold"],
                standardize=task["standardize"])
  train_ba, train_score = _fold_metrics(model, X[tr], y[tr])
  test_ba, test_score = _fold_metrics(model, X[te], y[te])
  return {"repeat"                  : task["repeat"],
          "fold"                    : task["fold"],
          "n_train"                 : len(tr),
          "n_test"                  : len(te),
          "train_balanced_accuracy" : train_ba,
          "train_score"             : train_score,
          "balanced_accuracy"       : test_ba,
          "score"                   : test_score}


def cv_tasks(X, y, groups, plan, c_reg, threshold = 0.5, standardize = False):
  """One task per (repeat, fold) of a plan; groups[i] is the group of row i"""
  X = np.asarray(X, dtype=np.float64)
  y = np.asarray(y, dtype=int)
  groups = list(groups)
  tasks = []
  for r in range(plan.repeats):
    fold_idx = np.array([plan.fold_of(r, g) for g in groups])
    for f in range(plan.k):
      tasks.append({"X"           : X,
                    "y"           : y,
                    "train_idx"   : np.nonzero(fold_idx != f)[0],
                    "test_idx"    : np.nonzero(fold_idx == f)[0],
                    "repeat"      : r,
                    "fold"        : f,
                    "c_reg"       : c_reg,
                    "threshold"   : threshold,
                    "standardize" : standardize})
  return tasks


def run_cross_validation(X, y, groups, plan, c_reg, threshold = 0.5, standardize = False,
                         jobs = 1):
  """Evaluate every (repeat, fold) of a grouped CV plan

  Returns:
    (CvResult, list of per-fold row dicts ordered by repeat and fold)
  """
  tasks = cv_tasks(X, y, groups, plan, c_reg, threshold, standardize)
  logging.info("Running %d cross-validation folds" % len(tasks))
  rows = run_parallel(cv_fold_task, tasks, jobs)
  rows.sort(key=lambda row: (row["repeat"], row["fold"]))
  fold_scores = [[None] * plan.k for _ in range(plan.repeats)]
  for row in rows:
    fold_scores[row["repeat"]][row["fold"]] = (row["balanced_accuracy"], row["score"])
  return CvResult(fold_scores, plan, plan.seed), rows


def cell_count_bins(reports):
  """patch_id -> number of cells"""
  return OrderedDict((r.patch_id, r.n_cells) for r in reports)


def snr_bins(reports, width = SNR_BIN_WIDTH, max_snr = MAX_SNR):
  """patch_id -> lower edge of its equal-width SNR bin over [0, max_snr]

  Patches without an SNR or above max_snr are left out.
  """
  n_bins = int(math.ceil(max_snr / width))
  strata = OrderedDict()
  for r in reports:
    if r.snr is None or r.snr > max_snr:
      continue
    idx = min(int(math.floor(r.snr / width)), n_bins - 1)
    strata[r.patch_id] = idx * width
  return strata


def stratified_scores(preds, labels, strata):
  """Per-bin balanced accuracy and challenge score

  A bin holding a single class gets status "insufficient": its balanced
  accuracy is still reported, AUC and score are not.

  Returns:
    OrderedDict bin -> StratumReport, bins sorted
  """
  by_bin = OrderedDict()
  for p in preds:
    if p.patch_id in strata and labels.get(p.patch_id) is not None:
      by_bin.setdefault(strata[p.patch_id], []).append(p)
  reports = OrderedDict()
  for key in sorted(by_bin):
    _, y_true, probs, y_pred = align_predictions(by_bin[key], labels)
    _, _, balanced, _ = confusion_metrics(y_true, y_pred)
    n_pos = int(np.sum(y_true == 1))
    n_neg = len(y_true) - n_pos
    if n_pos and n_neg:
      report = challenge_score(y_true, probs, y_pred)
      reports[key] = StratumReport(key, len(y_true), n_pos, n_neg, balanced, report.auc,
                                   report.score, "ok")
    else:
      logging.warning("Stratum %s holds a single class, AUC and score skipped" % key)
      reports[key] = StratumReport(key, len(y_true), n_pos, n_neg, balanced, None, None,
                                   "insufficient")
  return reports


def save_report(report, path):
  write_json(report.to_json(), path)
  logging.info("Evaluation report saved to : %s" % path)


def save_roc(report, path):
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.writer(csv_fd, lineterminator="\n")
    csv_writer.writerow(["threshold", "fpr", "tpr"])
    for threshold, fpr, tpr in report.roc_points:
      csv_writer.writerow([format_float(threshold), format_float(fpr), format_float(tpr)])


def save_cv_results(rows, path):
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=CV_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for row in rows:
      out = dict(row)
      for key in ("train_balanced_accuracy", "train_score", "balanced_accuracy", "score"):
        out[key] = format_float(row[key])
      csv_writer.writerow(out)
  logging.info("Cross-validation results saved to : %s" % path)


def save_replicates(rows, path):
  """Write replicates.csv, metric columns stay empty for an unlabeled split"""
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=REPLICATE_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for row in rows:
      report = row["report"]
      out = {"replicate" : row["replicate"],
             "seed"      : row["seed"],
             "n_tracks"  : row["n_tracks"]}
      for key in ("auc", "precision", "recall", "balanced_accuracy", "score"):
        out[key] = format_float(getattr(report, key) if report is not None else None)
      csv_writer.writerow(out)
  logging.info("Replicate results saved to : %s" % path)


def save_strata(named_reports, path):
  """Write strata.csv from a list of (stratum name, OrderedDict of StratumReport)"""
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=STRATA_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for name, reports in named_reports:
      for rep in reports.values():
        csv_writer.writerow({"stratum"           : name,
                             "bin"               : rep.bin,
                             "n"                 : rep.n,
                             "n_pos"             : rep.n_pos,
                             "n_neg"             : rep.n_neg,
                             "balanced_accuracy" : format_float(rep.balanced_accuracy),
                             "auc"               : format_float(rep.auc),
                             "score"             : format_float(rep.score),
                             "status"            : rep.status})
  logging.info("Stratified scores saved to : %s" % path)
