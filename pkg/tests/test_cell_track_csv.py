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

import pytest

from scripts.cell_track_csv import Track, load_track_dir, load_tracks, save_tracks
from scripts.lib import DataError, DuplicateRowError, FormatError, RangeError


def _write(path, rows):
  path.write_text("track_id,frame,x_px,y_px\n" + "".join(r + "\n" for r in rows))
  return str(path)


def test_single_track(tmp_path):
  tracks = load_tracks(_write(tmp_path / "t.csv", ["1,0,1.0,2.0", "1,1,2.0,2.0", "1,2,3.0,2.5"]))
  assert len(tracks) == 1
  assert tracks[0].frames == [0, 1, 2]
  assert tracks[0].source == "manual"
  assert tracks[0].position(2) == (3.0, 2.5)


def test_rows_grouped_and_sorted(tmp_path):
  path = _write(tmp_path / "t.csv", ["2,5,0,0", "1,3,1,1", "2,1,0,1", "1,0,4,4"])
  tracks = load_tracks(path)
  assert [t.track_id for t in tracks] == [1, 2]
  assert tracks[0].frames == [0, 3]
  assert tracks[1].frames == [1, 5]


def test_frame_out_of_range(tmp_path):
  with pytest.raises(RangeError):
    load_tracks(_write(tmp_path / "t.csv", ["1,25,1,1"]))


def test_duplicate_frame(tmp_path):
  with pytest.raises(DuplicateRowError):
    load_tracks(_write(tmp_path / "t.csv", ["1,3,1,1", "1,3,2,2"]))


@pytest.mark.parametrize("row", ["1,3,abc,1", "x,3,1,1", "1,3,1"])
def test_malformed_row(tmp_path, row):
  with pytest.raises(FormatError):
    load_tracks(_write(tmp_path / "t.csv", [row]))


def test_missing_column(tmp_path):
  path = tmp_path / "t.csv"
  path.write_text("track_id,frame,x\n1,0,1\n")
  with pytest.raises(FormatError):
    load_tracks(str(path))


def test_header_only_file(tmp_path):
  assert load_tracks(_write(tmp_path / "t.csv", [])) == []


def test_round_trip_exact(tmp_path):
  tracks = [Track(1, [(0, 0.1 + 0.2, 1.0 / 3.0), (4, 1e-17, 49.999999999999)]),
            Track(7, [(19, math.pi, math.e)])]
  path = str(tmp_path / "t.csv")
  save_tracks(tracks, path)
  assert load_tracks(path) == tracks


def test_track_invariants():
  with pytest.raises(DataError):
    Track(1, [(3, 0, 0), (3, 1, 1)])
  with pytest.raises(DataError):
    Track(1, [(3, 0, 0), (2, 1, 1)])
  with pytest.raises(DataError):
    Track(1, [(0, float("nan"), 0)])
  with pytest.raises(DataError):
    Track(1, [(0, 0, 0), (2, 1, 1)], "interpolated")
  with pytest.raises(DataError):
    Track(1, [(0, 0, 0)], "guessed")


def test_gaps():
  track = Track(1, [(0, 0, 0), (1, 0, 0), (5, 0, 0), (7, 0, 0)])
  assert track.gaps() == [3, 1]
  assert (track.t_min, track.t_max) == (0, 7)
  assert track.position(4) is None


def test_track_dir_missing_file_means_no_tracks(tmp_path):
  _write(tmp_path / "a.csv", ["1,0,1,1"])
  tracks = load_track_dir(str(tmp_path), ["a", "b"])
  assert len(tracks["a"]) == 1
  assert tracks["b"] == []
