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

Frame-to-frame linking, gap interpolation and focus-track selection
"""

import logging
import math

from collections import namedtuple

import numpy as np

from scipy.interpolate import CubicSpline
from scipy.optimize import linear_sum_assignment

from scripts.blob_detector import DetectionParams, detect_blobs, preprocess_intensity
from scripts.cell_track_csv import Track
from scripts.lib import MID_FRAME, PATCH_CENTER, ConfigError, TooShortError, derive_seed

MIN_FOCUS_POINTS = 3


class LinkParams(namedtuple("LinkParams", ["search_range_px", "memory_frames"])):
  """Linker settings; the defaults allow nearly every link in a 50 px patch"""
  __slots__ = ()

  def __new__(cls, search_range_px = 20.0, memory_frames = 30):
    if not search_range_px > 0:
      raise ConfigError("search_range_px must be positive, got %s" % search_range_px)
    if int(memory_frames) < 0:
      raise ConfigError("memory_frames must be >= 0, got %s" % memory_frames)
    return super(LinkParams, cls).__new__(cls, float(search_range_px), int(memory_frames))


def assign_frame(track_pos, det_pos, search_range):
  """Optimal assignment between open tracks and the detections of one frame

  Feasible links are at most search_range long. The assignment maximizes
  the number of feasible links, then minimizes their total squared length.

  Args:
    track_pos    : (n, 2) last known positions of the candidate tracks
    det_pos      : (m, 2) detection positions
    search_range : maximum link length

  Returns:
    list of (track index, detection index, squared length)
  """
  if len(track_pos) == 0 or len(det_pos) == 0:
    return []
  diff = track_pos[:, None, :] - det_pos[None, :, :]
  cost = np.sum(diff ** 2, axis=2)
  feasible = cost <= search_range ** 2
  if not feasible.any():
    return []
  # Any infeasible pair costs more than every feasible matching together
  big = (search_range ** 2) * (min(cost.shape) + 1) * 4.0 + 1.0
  solve_cost = np.where(feasible, cost, big)
  rows, cols = linear_sum_assignment(solve_cost)
  return [(int(r), int(c), float(cost[r, c])) for r, c in zip(rows, cols) if feasible[r, c]]


def link_detections(per_frame, params = None):
  """Link per-frame centroids into tracks

  Args:
    per_frame : list indexed by frame of lists of (x, y[, ...]) centroids
    params    : LinkParams

  Returns:
    list of Track (source automated), ordered by track_id
  """
  tracks, _ = link_detections_with_cost(per_frame, params)
  return tracks


def link_detections_with_cost(per_frame, params = None):
  """Link centroids and also return the total squared link length"""
  if params is None:
    params = LinkParams()
  points = []
  total_cost = 0.0
  for frame, dets in enumerate(per_frame):
    det_pos = np.array([(float(d[0]), float(d[1])) for d in dets], dtype=np.float64).reshape(-1, 2)
    # Tracks unmatched for more than memory_frames frames are closed
    open_ids = [tid for tid, pts in enumerate(points)
                if frame - pts[-1][0] - 1 <= params.memory_frames]
    track_pos = np.array([points[tid][-1][1:] for tid in open_ids],
                         dtype=np.float64).reshape(-1, 2)
    matched = set()
    for r, c, cost in assign_frame(track_pos, det_pos, params.search_range_px):
      points[open_ids[r]].append((frame, det_pos[c, 0], det_pos[c, 1]))
      matched.add(c)
      total_cost += cost
    for c in range(len(det_pos)):
      if c not in matched:
        points.append([(frame, det_pos[c, 0], det_pos[c, 1])])
    logging.debug("Frame %d: %d detections, %d linked, %d new tracks" %
                  (frame, len(det_pos), len(matched), len(det_pos) - len(matched)))
  tracks = [Track(tid + 1, pts, "automated") for tid, pts in enumerate(points)]
  return tracks, total_cost


def interpolate_track(track):
  """Fill the gaps of a track

  Gap frames are filled by a natural cubic spline on x(t) and y(t) when the
  track has at least 4 points, by linear interpolation otherwise. Original
  points are kept exactly.

  Args:
    track : Track with at least 2 points

  Returns:
    Track (source interpolated) covering every frame in [t_min, t_max]
  """
  if len(track) < 2:
    raise TooShortError("Track %d has %d point(s), interpolation needs 2" %
                         (track.track_id, len(track)))
  frames = np.array(track.frames, dtype=np.float64)
  xs = np.array([p.x for p in track.points])
  ys = np.array([p.y for p in track.points])
  all_frames = np.arange(track.t_min, track.t_max + 1)
  if len(track) >= 4:
    new_x = CubicSpline(frames, xs, bc_type="natural")(all_frames)
    new_y = CubicSpline(frames, ys, bc_type="natural")(all_frames)
  else:
    new_x = np.interp(all_frames, frames, xs)
    new_y = np.interp(all_frames, frames, ys)
  known = dict((p.frame, p) for p in track.points)
  points = [known.get(int(f), (int(f), new_x[i], new_y[i])) for i, f in enumerate(all_frames)]
  return Track(track.track_id, points, "interpolated")


def interpolate_tracks(tracks):
  """Interpolate every track with at least 2 points, keep the others as is"""
  return [interpolate_track(t) if len(t) >= 2 else t for t in tracks]


def select_focus_track(tracks, mid_frame = MID_FRAME, center = PATCH_CENTER):
  """Pick the track closest to the patch center in the middle frame

  Tracks with fewer than 3 coordinates are discarded. Tracks without a point
  in the middle frame are measured at their point temporally nearest to it,
  and only when no track has a point in the middle frame.

  Returns:
    Track or None
  """
  survivors = [t for t in tracks if len(t) >= MIN_FOCUS_POINTS]
  if not survivors:
    return None

  def center_dist(pos):
    return math.hypot(pos[0] - center[0], pos[1] - center[1])

  at_mid = [t for t in survivors if t.position(mid_frame) is not None]
  if at_mid:
    return min(at_mid, key=lambda t: (center_dist(t.position(mid_frame)), t.track_id))

  def nearest_dist(t):
    p = min(t.points, key=lambda p: (abs(p.frame - mid_frame), p.frame))
    return center_dist((p.x, p.y))

  return min(survivors, key=lambda t: (nearest_dist(t), t.track_id))


def track_patch(patch, detection = None, link = None, seed = 0):
  """Detect and link the cells of one video-patch

  Args:
    patch     : VideoPatch
    detection : DetectionParams
    link      : LinkParams
    seed      : per-patch seed, the noise of frame f uses derive_seed(seed, f)

  Returns:
    (list of Track, summary dict)
  """
  if detection is None:
    detection = DetectionParams()
  per_frame = []
  for f, frame in enumerate(patch.frames):
    clean = preprocess_intensity(frame, detection.noise_floor_cutoff,
                                 detection.noise_sigma, derive_seed(seed, f))
    per_frame.append(detect_blobs(clean, detection))
  tracks = link_detections(per_frame, link)
  gaps = [g for t in tracks for g in t.gaps()]
  summary = {"detections_per_frame" : [len(d) for d in per_frame],
             "n_tracks"             : len(tracks),
             "n_gaps"               : len(gaps),
             "max_gap"              : max(gaps) if gaps else 0}
  logging.debug("Patch %s: %d tracks" % (patch.patch_id, len(tracks)))
  return tracks, summary
