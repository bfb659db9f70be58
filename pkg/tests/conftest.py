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

Shared fixtures: spot renderer, track builder, small synthetic dataset
"""

import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.realpath(__file__)))
if ROOT not in sys.path:
  sys.path.insert(0, ROOT)

from scripts.cell_track_csv import Track
from scripts.synth_dataset import SynthParams, cmd_synth


def render_spot_frame(centers, sigma = 3.0, amplitude = 100.0, background = 20.0,
                      shape = (50, 50)):
  """Noise-free frame with one Gaussian spot per (x, y) center"""
  rows, cols = np.indices(shape, dtype=np.float64)
  frame = np.full(shape, background)
  for x, y in centers:
    frame += amplitude * np.exp(-((cols - x) ** 2 + (rows - y) ** 2) / (2.0 * sigma ** 2))
  return frame


def make_track(xy, start = 0, track_id = 1, source = "manual"):
  """Track from a list of (x, y), one point per frame from start"""
  return Track(track_id, [(start + i, x, y) for i, (x, y) in enumerate(xy)], source)


def turn_track(alpha_deg, speed = 1.0, n_before = 10, n_after = 9, heading_deg = 0.0):
  """Two straight segments meeting at frame n_before, deviating by alpha_deg"""
  theta = np.radians(heading_deg)
  d_b = np.array([np.cos(theta), np.sin(theta)])
  d_a = np.array([np.cos(theta + np.radians(alpha_deg)), np.sin(theta + np.radians(alpha_deg))])
  mid = np.array([25.0, 25.0])
  xy = [mid - speed * (n_before - t) * d_b for t in range(n_before + 1)]
  xy += [mid + speed * k * d_a for k in range(1, n_after + 1)]
  return make_track([tuple(p) for p in xy])


@pytest.fixture
def spot_frame():
  return render_spot_frame


@pytest.fixture(scope="session")
def synth_data(tmp_path_factory):
  """Small labeled synthetic dataset shared by the CLI tests"""
  out = str(tmp_path_factory.mktemp("synth"))
  params = SynthParams(n_patches=40, class_mix=0.5, snr_min=8.0, snr_max=10.0,
                       cells_min=1, cells_max=2, seed=3)
  cmd_synth(out, params)
  return out
