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

Rule-based pre-screening of tracks into behavior categories
"""

import csv
import logging
import math

from collections import namedtuple, OrderedDict

import numpy as np

from scripts.lib import MID_FRAME, DataError, DegenerateError, FormatError, format_float, \
                        parse_optional_float
from scripts.motility_features import straightness
from scripts.track_linker import interpolate_tracks, select_focus_track

CLASS1_TURN = "Class1Turn"
CLASS0_STRAIGHT = "Class0Straight"
CLASS0_STATIONARY = "Class0Stationary"
CLASS0_BACKGROUND = "Class0Background"
AMBIGUOUS = "Ambiguous"
CATEGORIES = (CLASS1_TURN, CLASS0_STRAIGHT, CLASS0_STATIONARY, CLASS0_BACKGROUND, AMBIGUOUS)

TURN_THRESHOLD_DEG = 90.0
STRAIGHTNESS_THRESHOLD = 0.5

ANNOTATION_FIELDS = ["patch_id", "category", "net_turning_angle_deg",
                     "straightness_before", "straightness_after"]


class AnnotationResult(namedtuple("AnnotationResult",
                                  ["category", "net_turning_angle_deg",
                                   "straightness_before", "straightness_after"])):
  __slots__ = ()

  def __new__(cls, category, net_turning_angle_deg = None, straightness_before = None,
              straightness_after = None):
    if category not in CATEGORIES:
      raise DataError("Unknown annotation category %s" % category)
    return super(AnnotationResult, cls).__new__(cls, category, net_turning_angle_deg,
                                                straightness_before, straightness_after)


def category_label(category):
  """Class label of a category, None for Ambiguous"""
  if category == CLASS1_TURN:
    return 1
  if category == AMBIGUOUS:
    return None
  return 0


def net_turning_angle(track, t_ann = MID_FRAME):
  """Deviation in degrees between the pre- and post-annotation directions

  0 means the cell keeps going straight, 180 a full reversal.
  """
  mid = track.position(t_ann)
  if mid is None or track.t_min >= t_ann or track.t_max <= t_ann:
    raise DegenerateError("Track %d does not span frame %d with a step on each side" %
                          (track.track_id, t_ann))
  first = track.points[0]
  last = track.points[-1]
  u = np.array([mid[0] - first.x, mid[1] - first.y])
  v = np.array([last.x - mid[0], last.y - mid[1]])
  nu = np.linalg.norm(u)
  nv = np.linalg.norm(v)
  if nu == 0 or nv == 0:
    raise DegenerateError("Track %d has a zero-length direction around frame %d" %
                          (track.track_id, t_ann))
  cos = float(np.dot(u, v) / (nu * nv))
  return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def segment_straightness(track, t_ann = MID_FRAME, side = "before"):
  """Straightness of the part of the track up to (before) or from (after) t_ann"""
  if side == "before":
    pts = [p for p in track.points if p.frame <= t_ann]
  elif side == "after":
    pts = [p for p in track.points if p.frame >= t_ann]
  else:
    raise DataError("Unknown segment side %s" % side)
  if len(pts) < 2:
    raise DegenerateError("Track %d has %d point(s) %s frame %d" %
                          (track.track_id, len(pts), side, t_ann))
  return straightness(np.array([(p.x, p.y) for p in pts]))


def classify(alpha, s_b, s_a):
  """Truth table of the pre-screening rules"""
  straight_b = s_b > STRAIGHTNESS_THRESHOLD
  straight_a = s_a > STRAIGHTNESS_THRESHOLD
  if straight_b and straight_a:
    return CLASS1_TURN if alpha > TURN_THRESHOLD_DEG else CLASS0_STRAIGHT
  if not straight_b and not straight_a:
    return CLASS0_STATIONARY
  return AMBIGUOUS


def annotate(track, t_ann = MID_FRAME):
  """Categorize a focus track (or its absence)

  Args:
    track : Track or None
    t_ann : annotation frame

  Returns:
    AnnotationResult
  """
  if track is None:
    return AnnotationResult(CLASS0_BACKGROUND)
  values = {}
  for key, func in (("s_b", lambda: segment_straightness(track, t_ann, "before")),
                    ("s_a", lambda: segment_straightness(track, t_ann, "after")),
                    ("alpha", lambda: net_turning_angle(track, t_ann))):
    try:
      values[key] = func()
    except DegenerateError as exc:
      logging.debug("Degenerate geometry: %s" % exc)
      values[key] = None
  alpha, s_b, s_a = values["alpha"], values["s_b"], values["s_a"]
  if alpha is None and s_b is None and s_a is None:
    # Too few points around t_ann to measure anything, same as no centroid
    return AnnotationResult(CLASS0_BACKGROUND)
  if s_b is None or s_a is None:
    category = AMBIGUOUS
  elif alpha is None:
    # Both sides still: no direction to compare, but no movement either
    category = CLASS0_STATIONARY if classify(0.0, s_b, s_a) == CLASS0_STATIONARY else AMBIGUOUS
  else:
    category = classify(alpha, s_b, s_a)
  return AnnotationResult(category, alpha, s_b, s_a)


def annotate_tracks(tracks, t_ann = MID_FRAME):
  """Interpolate, pick the focus track and annotate it"""
  return annotate(select_focus_track(interpolate_tracks(tracks), t_ann), t_ann)


def save_annotations(rows, path):
  """Write annotations.csv from a list of (patch_id, AnnotationResult)"""
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=ANNOTATION_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for patch_id, res in rows:
      csv_writer.writerow({"patch_id"              : patch_id,
                           "category"              : res.category,
                           "net_turning_angle_deg" : format_float(res.net_turning_angle_deg),
                           "straightness_before"   : format_float(res.straightness_before),
                           "straightness_after"    : format_float(res.straightness_after)})
  logging.info("Annotations saved to : %s" % path)


def load_annotations(path):
  """Read annotations.csv into an ordered dict patch_id -> AnnotationResult"""
  rows = OrderedDict()
  with open(path, "r", newline="") as csv_fd:
    for row in csv.DictReader(csv_fd):
      try:
        rows[row["patch_id"]] = AnnotationResult(
            row["category"], parse_optional_float(row["net_turning_angle_deg"]),
            parse_optional_float(row["straightness_before"]),
            parse_optional_float(row["straightness_after"]))
      except (KeyError, ValueError, DataError):
        raise FormatError("Malformed annotation row: %s" % row)
  return rows
