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

Class for cell track CSV
"""

import csv
import logging
import math
import os

from collections import namedtuple

from scripts.lib import (N_FRAMES, DuplicateRowError, FormatError, RangeError,
                         DataError, format_float)

TRACK_FIELDS = ["track_id", "frame", "x_px", "y_px"]
TRACK_SOURCES = ("manual", "automated", "interpolated")

# x is the column index and y the row index, origin at the top-left pixel
TrackPoint = namedtuple("TrackPoint", ["frame", "x", "y"])


class Track(object):
  """Time-ordered centroids of one cell

  Points are stored as an immutable tuple of TrackPoint. Frames must be
  strictly increasing and coordinates finite; an interpolated track has no
  gaps.
  """
  def __init__(self, track_id, points, source = "manual"):
    if source not in TRACK_SOURCES:
      raise DataError("Unknown track source %s" % source)
    points = tuple(TrackPoint(int(p[0]), float(p[1]), float(p[2])) for p in points)
    for prev, cur in zip(points, points[1:]):
      if cur.frame <= prev.frame:
        raise DataError("Track %s: frames not strictly increasing (%d after %d)" %
                        (track_id, cur.frame, prev.frame))
    for p in points:
      if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise DataError("Track %s: non-finite coordinate at frame %d" %
                        (track_id, p.frame))
    if source == "interpolated" and points and \
       points[-1].frame - points[0].frame + 1 != len(points):
      raise DataError("Track %s flagged interpolated but has gaps" % track_id)
    self._track_id = int(track_id)
    self._points = points
    self._source = source

  @property
  def track_id(self):
    return self._track_id

  @property
  def points(self):
    return self._points

  @property
  def source(self):
    return self._source

  def __len__(self):
    return len(self._points)

  def __eq__(self, other):
    return (isinstance(other, Track) and self._track_id == other._track_id and
            self._points == other._points and self._source == other._source)

  def __hash__(self):
    return hash((self._track_id, self._points, self._source))

  def __repr__(self):
    return "Track(%d, %d points, %s)" % (self._track_id, len(self._points), self._source)

  @property
  def frames(self):
    return [p.frame for p in self._points]

  @property
  def t_min(self):
    return self._points[0].frame

  @property
  def t_max(self):
    return self._points[-1].frame

  def position(self, frame):
    """Return (x, y) at frame, or None when the track has no point there"""
    for p in self._points:
      if p.frame == frame:
        return (p.x, p.y)
    return None

  def gaps(self):
    """Return the list of gap lengths (missing frames between points)"""
    return [cur.frame - prev.frame - 1
            for prev, cur in zip(self._points, self._points[1:])
            if cur.frame - prev.frame > 1]


class CellTrackCsv(object):
  """Cell track CSV class

  This class provides functions to read/write track CSV
  """
  def __init__(self, csv_fd):
    self.csv_fd = csv_fd

  def start_new_tracks(self):
    """Create a CSV writer for a new track file"""
    self.csv_writer = csv.DictWriter(self.csv_fd, fieldnames=TRACK_FIELDS,
                                     lineterminator="\n")
    self.csv_writer.writeheader()

  def read_tracks(self, source = "manual"):
    """Read tracks from CSV, rows grouped by track_id and sorted by frame"""
    csv_reader = csv.DictReader(self.csv_fd)
    if csv_reader.fieldnames is None:
      return []
    missing = [f for f in TRACK_FIELDS if f not in csv_reader.fieldnames]
    if missing:
      raise FormatError("Track CSV is missing columns: %s" % ",".join(missing))
    rows = {}
    for line, row in enumerate(csv_reader, start=2):
      try:
        track_id = int(row['track_id'])
        frame = int(row['frame'])
        x = float(row['x_px'])
        y = float(row['y_px'])
      except (TypeError, ValueError):
        raise FormatError("Malformed track row at line %d: %s" % (line, row))
      if frame < 0 or frame >= N_FRAMES:
        raise RangeError("Track %d: frame %d outside [0,%d]" %
                         (track_id, frame, N_FRAMES - 1))
      points = rows.setdefault(track_id, {})
      if frame in points:
        raise DuplicateRowError("Duplicate row for track %d frame %d" % (track_id, frame))
      points[frame] = (frame, x, y)
    return [Track(track_id, [points[f] for f in sorted(points)], source)
            for track_id, points in sorted(rows.items())]

  def write_track_entry(self, track_id, point):
    """Write a new track point to CSV"""
    self.csv_writer.writerow({'track_id' : track_id,
                              'frame'    : point.frame,
                              'x_px'     : format_float(point.x),
                              'y_px'     : format_float(point.y)})


def load_tracks(path):
  """Load manual tracks from a track CSV file

  Args:
    path : track CSV with header track_id,frame,x_px,y_px

  Returns:
    list of Track
  """
  try:
    with open(path, "r", newline="") as csv_fd:
      return CellTrackCsv(csv_fd).read_tracks()
  except OSError as exc:
    raise FormatError("Cannot read track file %s: %s" % (path, exc))


def save_tracks(tracks, path):
  """Write tracks to a track CSV file"""
  with open(path, "w", newline="") as csv_fd:
    track_csv = CellTrackCsv(csv_fd)
    track_csv.start_new_tracks()
    for track in tracks:
      for point in track.points:
        track_csv.write_track_entry(track.track_id, point)
  logging.debug("Tracks saved to : %s" % path)


def load_track_dir(track_dir, patch_ids):
  """Load tracks/<patch_id>.csv for every patch

  A patch without a track file has no tracks.

  Returns:
    dict patch_id -> list of Track
  """
  tracks = {}
  for patch_id in patch_ids:
    path = os.path.join(track_dir, "%s.csv" % patch_id)
    tracks[patch_id] = load_tracks(path) if os.path.isfile(path) else []
  return tracks
