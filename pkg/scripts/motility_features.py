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

Motility features of the focus track
"""

import csv
import logging
import math

from collections import OrderedDict

import numpy as np

from scripts.lib import (MID_FRAME, PATCH_CENTER, ConfigError, FormatError, TooShortError,
                         format_float, parse_optional_float)
from scripts.track_linker import interpolate_tracks, select_focus_track

# Centers of the bimodal features, read off the class-0 distributions
OUTREACH_CENTER = 0.55
STRAIGHTNESS_CENTER = 0.45

# Values used when no cell is seen in the middle frame
DEFAULT_D_CENTER = 50.0
DEFAULT_DELTA_THETA = 0.0
DEFAULT_S_NORM = 2.0
MISSING_VALUE = -1.0

FEATURE_SETS = ("all", "basic")
BASIC_FEATURES = ["speed", "mean_turning_angle", "outreach_ratio_t", "displacement_ratio",
                  "straightness_t", "asphericity", "displacement", "n_coordinates",
                  "d_center"]
HANDCRAFTED_FEATURES = ["delta_theta", "s_norm"]
ALL_FEATURES = BASIC_FEATURES + HANDCRAFTED_FEATURES + ["track_missing"]
FEATURE_CSV_FIELDS = ["patch_id"] + ALL_FEATURES


def feature_schema(feature_set):
  """Ordered classifier columns of a feature set"""
  if feature_set == "all":
    return list(ALL_FEATURES)
  if feature_set == "basic":
    return BASIC_FEATURES + ["track_missing"]
  raise ConfigError("Unknown feature set %s, expected one of %s" %
                    (feature_set, ", ".join(FEATURE_SETS)))


class FeatureVector(object):
  """Named motility features of one patch

  Features excluded by the feature set are None and not part of the schema.
  """
  def __init__(self, values, feature_set = "all"):
    schema = feature_schema(feature_set)
    self.feature_set = feature_set
    self.values = OrderedDict((name, values.get(name)) for name in ALL_FEATURES)
    for name in ALL_FEATURES:
      if name not in schema:
        self.values[name] = None
    for name in schema:
      val = self.values[name]
      if val is None or not math.isfinite(val):
        raise FormatError("Feature %s is missing or not finite: %s" % (name, val))

  @property
  def schema(self):
    return feature_schema(self.feature_set)

  def __getattr__(self, name):
    values = self.__dict__.get("values")
    if values is not None and name in values:
      return values[name]
    raise AttributeError(name)

  def __len__(self):
    return len(self.schema)

  def as_array(self):
    return np.array([self.values[name] for name in self.schema], dtype=np.float64)


def _positions(track):
  return np.array([(p.x, p.y) for p in track.points], dtype=np.float64)


def _angle_between(u, v):
  """Angle in [0, pi] between two nonzero vectors"""
  cos = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
  return float(math.acos(min(1.0, max(-1.0, cos))))


def straightness(pos):
  """Displacement over path length, 0 for a zero-length path"""
  path = float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1)))
  if path == 0:
    return 0.0
  return float(np.linalg.norm(pos[-1] - pos[0])) / path


def basic_features(track):
  """Track-level features computed from the interpolated focus track

  Args:
    track : Track with at least 3 points

  Returns:
    dict of speed, mean_turning_angle, outreach_raw, straightness_raw,
    displacement_ratio, asphericity, displacement, n_coordinates
  """
  if len(track) < 3:
    raise TooShortError("Track %d has %d points, features need 3" % (track.track_id, len(track)))
  pos = _positions(track)
  steps = np.diff(pos, axis=0)
  step_len = np.linalg.norm(steps, axis=1)
  path_length = float(np.sum(step_len))
  displacement = float(np.linalg.norm(pos[-1] - pos[0]))
  max_reach = float(np.max(np.linalg.norm(pos - pos[0], axis=1)))
  duration = track.t_max - track.t_min

  moving = steps[step_len > 0]
  turns = [_angle_between(u, v) for u, v in zip(moving, moving[1:])]

  gyration = np.cov(pos.T, bias=True)
  lam = np.clip(np.linalg.eigvalsh(gyration), 0.0, None)
  lam_sum = float(lam[0] + lam[1])

  feats = OrderedDict()
  feats["speed"] = path_length / duration
  feats["mean_turning_angle"] = float(np.mean(turns)) if turns else 0.0
  feats["outreach_raw"] = max_reach / path_length if path_length > 0 else 0.0
  feats["straightness_raw"] = displacement / path_length if path_length > 0 else 0.0
  feats["displacement_ratio"] = displacement / max_reach if max_reach > 0 else 0.0
  feats["asphericity"] = float(((lam[1] - lam[0]) / lam_sum) ** 2) if lam_sum > 0 else 0.0
  feats["displacement"] = displacement
  feats["n_coordinates"] = len(track)
  return feats


def transform_bimodal(raw, b):
  """Fold a bimodal feature around b"""
  return abs(raw - b)


def handcrafted_features(track, t_mid = MID_FRAME, center = PATCH_CENTER):
  """Direction-change features around the middle frame

  Steps start at frame t (v_t = x_{t+1} - x_t); steps with t < t_mid are
  "before", the others "after".

  Returns:
    (delta_theta, s_norm, d_center); the class-0-like (0, 2, 50) triple
    when there is no point at t_mid, an empty side, or a zero mean step
  """
  defaults = (DEFAULT_DELTA_THETA, DEFAULT_S_NORM, DEFAULT_D_CENTER)
  mid = track.position(t_mid)
  if mid is None:
    return defaults
  pts = track.points
  before, after = [], []
  for p, q in zip(pts, pts[1:]):
    step = (q.x - p.x, q.y - p.y)
    (before if p.frame < t_mid else after).append(step)
  if not before or not after:
    return defaults
  before = np.array(before)
  after = np.array(after)
  v_b = before.mean(axis=0)
  v_a = after.mean(axis=0)
  n_b = np.linalg.norm(v_b)
  n_a = np.linalg.norm(v_a)
  if n_b == 0 or n_a == 0:
    return defaults
  theta_b = np.arctan2(before[:, 1], before[:, 0]).mean()
  theta_a = np.arctan2(after[:, 1], after[:, 0]).mean()
  delta_theta = float(abs(theta_a - theta_b))
  s_norm = float(min(2.0, np.linalg.norm(v_b / n_b + v_a / n_a)))
  d_center = math.hypot(mid[0] - center[0], mid[1] - center[1])
  return delta_theta, s_norm, d_center


def assemble(track, feature_set = "all"):
  """Build the feature vector of a patch from its focus track

  Args:
    track       : Track or None when no track was observed
    feature_set : "all" or "basic" (basic drops delta_theta and s_norm)

  Returns:
    FeatureVector
  """
  schema = feature_schema(feature_set)
  if track is None:
    values = dict((name, MISSING_VALUE) for name in schema)
    values["track_missing"] = 1.0
    return FeatureVector(values, feature_set)
  basic = basic_features(track)
  delta_theta, s_norm, d_center = handcrafted_features(track)
  values = {"speed"              : basic["speed"],
            "mean_turning_angle" : basic["mean_turning_angle"],
            "outreach_ratio_t"   : transform_bimodal(basic["outreach_raw"], OUTREACH_CENTER),
            "displacement_ratio" : basic["displacement_ratio"],
            "straightness_t"     : transform_bimodal(basic["straightness_raw"], STRAIGHTNESS_CENTER),
            "asphericity"        : basic["asphericity"],
            "displacement"       : basic["displacement"],
            "n_coordinates"      : float(basic["n_coordinates"]),
            "d_center"           : d_center,
            "delta_theta"        : delta_theta,
            "s_norm"             : s_norm,
            "track_missing"      : 0.0}
  return FeatureVector(values, feature_set)


def patch_features(tracks, feature_set = "all"):
  """Interpolate, select the focus track and assemble its features"""
  focus = select_focus_track(interpolate_tracks(tracks))
  return assemble(focus, feature_set)


def save_features(rows, path):
  """Write features.csv

  Args:
    rows : list of (patch_id, FeatureVector)
    path : output CSV
  """
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=FEATURE_CSV_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for patch_id, vec in rows:
      row = {"patch_id" : patch_id}
      for name in ALL_FEATURES:
        row[name] = format_float(vec.values[name])
      csv_writer.writerow(row)
  logging.info("Features saved to : %s" % path)


def load_features(path, feature_set = "all"):
  """Read features.csv into an ordered dict patch_id -> FeatureVector"""
  rows = OrderedDict()
  try:
    with open(path, "r", newline="") as csv_fd:
      for row in csv.DictReader(csv_fd):
        values = dict((name, parse_optional_float(row.get(name))) for name in ALL_FEATURES)
        rows[row["patch_id"]] = FeatureVector(values, feature_set)
  except OSError as exc:
    raise FormatError("Cannot read features %s: %s" % (path, exc))
  except ValueError as exc:
    raise FormatError("Malformed features file %s: %s" % (path, exc))
  return rows
