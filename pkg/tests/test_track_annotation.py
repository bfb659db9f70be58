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

import math

import numpy as np
import pytest

from conftest import make_track, turn_track
from scripts.cell_track_csv import Track
from scripts.lib import DataError, DegenerateError
from scripts.track_annotation import (AMBIGUOUS, CLASS0_BACKGROUND, CLASS0_STATIONARY,
                                      CLASS0_STRAIGHT, CLASS1_TURN, AnnotationResult, annotate,
                                      annotate_tracks, category_label, load_annotations,
                                      net_turning_angle, save_annotations, segment_straightness)


def _three_points(a, b, c):
  return Track(1, [(0,) + a, (10,) + b, (19,) + c])


@pytest.mark.parametrize("end,expected", [((20.0, 0.0), 0.0), ((10.0, 10.0), 90.0),
                                          ((0.0, 1.0), 174.2894)])
def test_net_turning_angle(end, expected):
  track = _three_points((0.0, 0.0), (10.0, 0.0), end)
  assert net_turning_angle(track) == pytest.approx(expected, abs=1e-3)


def test_net_turning_angle_needs_both_sides():
  with pytest.raises(DegenerateError):
    net_turning_angle(make_track([(float(t), 0.0) for t in range(5)], start=10))
  with pytest.raises(DegenerateError):
    net_turning_angle(_three_points((0.0, 0.0), (0.0, 0.0), (5.0, 5.0)))


def test_segment_straightness():
  straight = make_track([(float(t), 0.0) for t in range(20)])
  assert segment_straightness(straight, side="before") == pytest.approx(1.0)
  still = make_track([(4.0, 4.0)] * 20)
  assert segment_straightness(still, side="after") == 0.0
  zigzag = [(0.0, 0.0)]
  for t in range(10):
    x, y = zigzag[-1]
    zigzag.append((x + 1.0, y) if t % 2 == 0 else (x, y + 1.0))
  assert segment_straightness(make_track(zigzag), side="before") == \
         pytest.approx(math.sqrt(50.0) / 10.0)


def test_segment_straightness_errors():
  track = make_track([(0.0, 0.0), (1.0, 0.0)], start=10)
  with pytest.raises(DegenerateError):
    segment_straightness(track, side="before")
  with pytest.raises(DataError):
    segment_straightness(track, side="middle")


def test_no_track_is_background():
  res = annotate(None)
  assert res == AnnotationResult(CLASS0_BACKGROUND)
  assert res.net_turning_angle_deg is None


def test_straight_line_is_class0():
  res = annotate(make_track([(float(t), 10.0) for t in range(20)]))
  assert res.category == CLASS0_STRAIGHT
  assert res.net_turning_angle_deg == pytest.approx(0.0)


def test_sharp_turn_is_class1():
  res = annotate(turn_track(135.0))
  assert res.category == CLASS1_TURN
  assert res.net_turning_angle_deg == pytest.approx(135.0)
  assert res.straightness_before == pytest.approx(1.0)
  assert res.straightness_after == pytest.approx(1.0)


def test_still_cell_is_stationary():
  assert annotate(make_track([(25.0, 25.0)] * 20)).category == CLASS0_STATIONARY


def test_mixed_straightness_is_ambiguous():
  xy = [(float(t), 0.0) for t in range(11)]
  for t in range(9):
    xy.append((10.0 + (t % 2), 0.0))
  assert annotate(make_track(xy)).category == AMBIGUOUS


def test_track_not_reaching_mid_frame_is_ambiguous():
  assert annotate(make_track([(float(t), 0.0) for t in range(8)])).category == AMBIGUOUS


@pytest.mark.parametrize("points", [[(10, 25.0, 25.0)], [(9, 20.0, 25.0), (11, 30.0, 25.0)]])
def test_track_without_geometry_counts_as_background(points):
  result = annotate(Track(1, points))
  assert result.category == CLASS0_BACKGROUND
  assert result.net_turning_angle_deg is None
  assert result.straightness_before is None and result.straightness_after is None


def _wiggle_track(phi_deg, amp):
  """Two segments with a perpendicular zig-zag of amplitude amp"""
  base = turn_track(phi_deg)
  pts = []
  for p in base.points:
    if p.frame in (0, 10, 19):
      pts.append((p.frame, p.x, p.y))
      continue
    heading = 0.0 if p.frame < 10 else math.radians(phi_deg)
    sign = 1.0 if p.frame % 2 else -1.0
    pts.append((p.frame, p.x - sign * amp * math.sin(heading), p.y + sign * amp * math.cos(heading)))
  return Track(1, pts)


def _straightness(points):
  pos = np.array(points)
  path = np.sum(np.hypot(*np.diff(pos, axis=0).T))
  return 0.0 if path == 0 else float(np.hypot(*(pos[-1] - pos[0]))) / path


def _truth_table(alpha, s_b, s_a):
  if s_b > 0.5 and s_a > 0.5:
    return CLASS1_TURN if alpha > 90.0 else CLASS0_STRAIGHT
  if s_b <= 0.5 and s_a <= 0.5:
    return CLASS0_STATIONARY
  return AMBIGUOUS


@pytest.mark.parametrize("phi", range(0, 181, 15))
@pytest.mark.parametrize("amp", [0.0, 0.5, 1.0, 2.0, 4.0])
def test_grid_matches_truth_table(phi, amp):
  track = _wiggle_track(float(phi), amp)
  pts = dict((p.frame, (p.x, p.y)) for p in track.points)
  u = np.subtract(pts[10], pts[0])
  v = np.subtract(pts[19], pts[10])
  cos = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
  alpha = math.degrees(math.acos(min(1.0, max(-1.0, cos))))
  s_b = _straightness([pts[f] for f in range(0, 11)])
  s_a = _straightness([pts[f] for f in range(10, 20)])
  res = annotate(track)
  assert res.category == _truth_table(alpha, s_b, s_a)
  if res.category == CLASS1_TURN:
    assert res.straightness_before > 0.5 and res.straightness_after > 0.5


@pytest.mark.parametrize("phi", [0.0, 1.0, 2.5, 4.0])
def test_category_invariant_under_rigid_motion(phi):
  track = turn_track(120.0)
  c, s = math.cos(phi), math.sin(phi)
  moved = Track(1, [(p.frame, c * p.x - s * p.y + 3.0, s * p.x + c * p.y - 7.0)
                    for p in track.points])
  assert annotate(moved).category == annotate(track).category == CLASS1_TURN


def test_annotate_tracks_picks_focus():
  center = turn_track(150.0)
  corner = make_track([(3.0 + t, 3.0) for t in range(20)], track_id=2)
  assert annotate_tracks([corner, center]).category == CLASS1_TURN
  assert annotate_tracks([]).category == CLASS0_BACKGROUND


def test_category_label():
  assert category_label(CLASS1_TURN) == 1
  assert category_label(CLASS0_STATIONARY) == 0
  assert category_label(CLASS0_BACKGROUND) == 0
  assert category_label(AMBIGUOUS) is None


def test_unknown_category():
  with pytest.raises(DataError):
    AnnotationResult("Class2")


def test_annotations_round_trip(tmp_path):
  path = str(tmp_path / "annotations.csv")
  rows = [("a", annotate(turn_track(100.0))), ("b", annotate(None))]
  save_annotations(rows, path)
  loaded = load_annotations(path)
  assert list(loaded.items()) == rows
