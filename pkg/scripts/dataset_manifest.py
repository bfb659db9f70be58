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

Dataset manifest and prediction CSV files
"""

import csv
import logging
import math
import os

from collections import namedtuple, OrderedDict

from scripts.lib import DataError, DuplicateRowError, FormatError, RangeError
from scripts.video_patch import SPLITS, load_patch

MANIFEST_FIELDS = ["patch_id", "path", "label", "group_id", "split"]
PREDICTION_FIELDS = ["patch_id", "prob_class1", "pred_label"]

# Split sizes of the published challenge data
CBVCC_SPLIT_SIZES = {"train": 210, "validation": 30, "test": 60}

ManifestEntry = namedtuple("ManifestEntry", ["patch_id", "path", "label", "group_id", "split"])


class Prediction(namedtuple("Prediction", ["patch_id", "prob_class1", "pred_label"])):
  """Per-patch classifier output"""
  __slots__ = ()

  def __new__(cls, patch_id, prob_class1, pred_label):
    prob_class1 = float(prob_class1)
    if not math.isfinite(prob_class1) or prob_class1 < 0.0 or prob_class1 > 1.0:
      raise RangeError("Prediction %s: probability %r outside [0, 1]" % (patch_id, prob_class1))
    if pred_label not in (0, 1):
      raise DataError("Prediction %s: label must be 0 or 1" % patch_id)
    return super(Prediction, cls).__new__(cls, patch_id, prob_class1, int(pred_label))


class DatasetManifest(object):
  """Ordered list of patch entries with an optional track directory"""
  def __init__(self, entries, track_dir = None):
    seen = set()
    for entry in entries:
      if entry.patch_id in seen:
        raise DuplicateRowError("Duplicate patch id %s in manifest" % entry.patch_id)
      seen.add(entry.patch_id)
    self.entries = tuple(entries)
    self.track_dir = track_dir

  def __len__(self):
    return len(self.entries)

  def __iter__(self):
    return iter(self.entries)

  @property
  def patch_ids(self):
    return [e.patch_id for e in self.entries]

  def entry(self, patch_id):
    for e in self.entries:
      if e.patch_id == patch_id:
        return e
    raise DataError("Unknown patch id %s" % patch_id)

  def labels(self):
    """Return patch_id -> label for labeled entries"""
    return OrderedDict((e.patch_id, e.label) for e in self.entries if e.label is not None)

  def groups(self):
    return OrderedDict((e.patch_id, e.group_id) for e in self.entries)

  def select(self, split = None):
    """Return the entries of one split, or all entries when split is None"""
    if split is None:
      return list(self.entries)
    return [e for e in self.entries if e.split == split]

  def split_counts(self):
    counts = OrderedDict((s, 0) for s in SPLITS)
    for e in self.entries:
      if e.split is not None:
        counts[e.split] += 1
    return counts

  def load_patch(self, patch_id):
    e = self.entry(patch_id)
    return load_patch(e.path, patch_id, label=e.label, group_id=e.group_id, split=e.split)


def _parse_label(text, patch_id):
  text = (text or "").strip()
  if text == "":
    return None
  if text not in ("0", "1"):
    raise FormatError("Patch %s: label must be 0, 1 or empty, got %s" % (patch_id, text))
  return int(text)


def load_manifest(path, track_dir = None):
  """Load manifest.csv

  Args:
    path      : manifest CSV with header patch_id,path,label,group_id,split
    track_dir : track directory, defaults to tracks/ next to the manifest

  Returns:
    DatasetManifest
  """
  if not os.path.isfile(path):
    raise FormatError("Cannot find manifest %s" % path)
  root = os.path.dirname(os.path.abspath(path))
  entries = []
  with open(path, "r", newline="") as csv_fd:
    csv_reader = csv.DictReader(csv_fd)
    missing = [f for f in MANIFEST_FIELDS if f not in (csv_reader.fieldnames or [])]
    if missing:
      raise FormatError("Manifest %s is missing columns: %s" % (path, ",".join(missing)))
    for row in csv_reader:
      patch_id = row['patch_id'].strip()
      split = (row['split'] or "").strip() or None
      if split is not None and split not in SPLITS:
        raise FormatError("Patch %s: unknown split %s" % (patch_id, split))
      patch_path = row['path'].strip()
      if patch_path and not os.path.isabs(patch_path):
        patch_path = os.path.join(root, patch_path)
      entries.append(ManifestEntry(patch_id, patch_path, _parse_label(row['label'], patch_id),
                                   row['group_id'].strip(), split))
  if track_dir is None and os.path.isdir(os.path.join(root, "tracks")):
    track_dir = os.path.join(root, "tracks")
  manifest = DatasetManifest(entries, track_dir)
  logging.info("Loaded manifest %s: %d patches %s" %
               (path, len(manifest), dict(manifest.split_counts())))
  return manifest


def save_manifest(manifest, path):
  """Write manifest.csv, patch paths relative to the manifest directory"""
  root = os.path.dirname(os.path.abspath(path))
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for e in manifest:
      patch_path = e.path
      if os.path.isabs(patch_path):
        patch_path = os.path.relpath(patch_path, root)
      csv_writer.writerow({'patch_id' : e.patch_id,
                           'path'     : patch_path.replace(os.sep, "/"),
                           'label'    : "" if e.label is None else e.label,
                           'group_id' : e.group_id,
                           'split'    : e.split or ""})


def save_predictions(preds, path):
  """Write predictions.csv, probabilities with 6 decimals

  The id check runs before the file is opened, so a rejected list leaves
  no partial file behind.
  """
  seen = set()
  for p in preds:
    if p.patch_id in seen:
      raise DuplicateRowError("Duplicate patch id %s in predictions" % p.patch_id)
    seen.add(p.patch_id)
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=PREDICTION_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for p in preds:
      csv_writer.writerow({'patch_id'    : p.patch_id,
                           'prob_class1' : "%.6f" % p.prob_class1,
                           'pred_label'  : p.pred_label})
  logging.info("Predictions saved to : %s" % path)


def load_predictions(path):
  """Read predictions.csv"""
  if not os.path.isfile(path):
    raise FormatError("Cannot find predictions %s" % path)
  preds = []
  seen = set()
  with open(path, "r", newline="") as csv_fd:
    for row in csv.DictReader(csv_fd):
      try:
        pred = Prediction(row['patch_id'], float(row['prob_class1']), int(row['pred_label']))
      except (KeyError, TypeError, ValueError):
        raise FormatError("Malformed prediction row: %s" % row)
      if pred.patch_id in seen:
        raise DuplicateRowError("Duplicate patch id %s in predictions" % pred.patch_id)
      seen.add(pred.patch_id)
      preds.append(pred)
  return preds
