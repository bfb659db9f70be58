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

Video complexity and quality: cell count and foreground/background SNR
"""

import csv
import logging

from collections import namedtuple, OrderedDict

import numpy as np

from scripts.lib import DataError, FormatError, format_float, parse_optional_float
from scripts.track_linker import interpolate_tracks

# Distances in um from the nearest centroid (10 um cell diameter)
FG_RADIUS_UM = 3.0
BG_RADIUS_UM = 20.0
QUALITY_FIELDS = ["patch_id", "n_cells", "snr"]


class QualityReport(namedtuple("QualityReport", ["patch_id", "n_cells", "snr", "per_frame_snr"])):
  __slots__ = ()


def count_cells(tracks):
  """Number of tracks in the patch"""
  return len(tracks)


def fg_bg_masks(shape, centroids, pixel_size_um):
  """Foreground and background pixel masks of a frame

  A pixel is foreground when its nearest centroid is closer than 3 um and
  background when it is farther than 20 um; the ring in between is neither.

  Args:
    shape         : (rows, cols)
    centroids     : list of (x_px, y_px), x the column
    pixel_size_um : pixel size

  Returns:
    (fg, bg) boolean arrays
  """
  if not pixel_size_um > 0:
    raise DataError("pixel_size_um must be positive, got %s" % pixel_size_um)
  rows, cols = np.indices(shape, dtype=np.float64)
  if len(centroids) == 0:
    return np.zeros(shape, dtype=bool), np.ones(shape, dtype=bool)
  dist = np.full(shape, np.inf)
  for x, y in centroids:
    dist = np.minimum(dist, np.hypot(cols - x, rows - y))
  dist *= pixel_size_um
  return dist < FG_RADIUS_UM, dist > BG_RADIUS_UM


def frame_snr(frame, centroids, pixel_size_um):
  """|avg(FG) - avg(BG)| / std(BG) of one frame, population std

  Returns:
    float, or None when FG or BG is empty or std(BG) is 0
  """
  frame = np.asarray(frame, dtype=np.float64)
  fg, bg = fg_bg_masks(frame.shape, centroids, pixel_size_um)
  if not fg.any() or not bg.any():
    return None
  bg_std = float(np.std(frame[bg]))
  if bg_std == 0:
    return None
  return abs(float(np.mean(frame[fg])) - float(np.mean(frame[bg]))) / bg_std


def centroids_by_frame(tracks, n_frames):
  """Per-frame centroid lists from tracks"""
  per_frame = [[] for _ in range(n_frames)]
  for track in tracks:
    for p in track.points:
      if 0 <= p.frame < n_frames:
        per_frame[p.frame].append((p.x, p.y))
  return per_frame


def patch_snr(patch, tracks):
  """Average the defined per-frame SNR values of a patch

  Args:
    patch  : VideoPatch
    tracks : tracks of the patch, gaps are interpolated here

  Returns:
    QualityReport
  """
  per_frame = centroids_by_frame(interpolate_tracks(tracks), len(patch.frames))
  values = [frame_snr(frame, cents, patch.pixel_size_um)
            for frame, cents in zip(patch.frames, per_frame)]
  defined = [v for v in values if v is not None]
  snr = float(np.mean(defined)) if defined else None
  logging.debug("Patch %s: SNR %s over %d/%d frames" %
                (patch.patch_id, snr, len(defined), len(values)))
  return QualityReport(patch.patch_id, count_cells(tracks), snr, values)


def save_quality(reports, path):
  """Write quality.csv, snr empty when undefined"""
  with open(path, "w", newline="") as csv_fd:
    csv_writer = csv.DictWriter(csv_fd, fieldnames=QUALITY_FIELDS, lineterminator="\n")
    csv_writer.writeheader()
    for r in reports:
      csv_writer.writerow({"patch_id" : r.patch_id,
                           "n_cells"  : r.n_cells,
                           "snr"      : format_float(r.snr)})
  logging.info("Quality metrics saved to : %s" % path)


def load_quality(path):
  """Read quality.csv into an ordered dict patch_id -> QualityReport"""
  reports = OrderedDict()
  try:
    with open(path, "r", newline="") as csv_fd:
      for row in csv.DictReader(csv_fd):
        reports[row["patch_id"]] = QualityReport(row["patch_id"], int(row["n_cells"]),
                                                 parse_optional_float(row["snr"]), [])
  except OSError as exc:
    raise FormatError("Cannot read quality file %s: %s" % (path, exc))
  except (KeyError, ValueError):
    raise FormatError("Malformed quality file %s" % path)
  return reports
