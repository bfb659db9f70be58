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

Intensity preprocessing and Laplacian-of-Gaussian blob detection
"""

import logging
import math

from collections import namedtuple

import numpy as np

from scipy.ndimage import gaussian_laplace, maximum_filter

from scripts.lib import ConfigError, RangeError

Blob = namedtuple("Blob", ["x", "y", "sigma"])


class DetectionParams(namedtuple("DetectionParams",
                                 ["sigma_min_px", "sigma_max_px", "n_sigma", "log_threshold",
                                  "noise_floor_cutoff", "noise_sigma"])):
  """Blob detector settings

  The sigma bracket comes from a typical 10 um cell diameter (12.5 px at
  0.8 um/px, sigma ~ 4.4 px).
  """
  __slots__ = ()

  def __new__(cls, sigma_min_px = 2.0, sigma_max_px = 6.0, n_sigma = 5,
              log_threshold = 0.05, noise_floor_cutoff = 20, noise_sigma = 5.0):
    if not 0 < sigma_min_px < sigma_max_px:
      raise ConfigError("Detection needs 0 < sigma_min_px < sigma_max_px, got %s, %s" %
                        (sigma_min_px, sigma_max_px))
    if int(n_sigma) < 1:
      raise ConfigError("n_sigma must be >= 1, got %s" % n_sigma)
    if not log_threshold > 0:
      raise ConfigError("log_threshold must be positive, got %s" % log_threshold)
    return super(DetectionParams, cls).__new__(cls, float(sigma_min_px), float(sigma_max_px),
                                               int(n_sigma), float(log_threshold),
                                               float(noise_floor_cutoff), float(noise_sigma))

  def sigma_grid(self):
    if self.n_sigma == 1:
      return np.array([self.sigma_min_px])
    return np.linspace(self.sigma_min_px, self.sigma_max_px, self.n_sigma)


def preprocess_intensity(frame, cutoff = 20, noise_sigma = 5.0, rng_seed = 0):
  """Fill the dark floor of a frame with noise around a low quantile

  Pixels above cutoff are kept. Pixels at or below cutoff become
  q20 + N(0, noise_sigma), clamped to [0, 255], where q20 is the 20% quantile
  of the unique intensities of the frame.

  Args:
    frame       : 2D intensity array
    cutoff      : noise floor in [0, 255]
    noise_sigma : standard deviation of the added noise
    rng_seed    : seed of the noise stream

  Returns:
    float64 frame
  """
  if cutoff < 0 or cutoff > 255:
    raise RangeError("Noise floor cutoff %s outside [0, 255]" % cutoff)
  frame = np.asarray(frame, dtype=np.float64)
  out = frame.copy()
  floor = frame <= cutoff
  n_floor = int(np.count_nonzero(floor))
  if n_floor == 0:
    return out
  q20 = np.quantile(np.unique(frame), 0.2)
  rng = np.random.default_rng(rng_seed)
  noise = rng.normal(0.0, noise_sigma, size=n_floor)
  out[floor] = np.clip(q20 + noise, 0.0, 255.0)
  return out


def _peak_offset(left, center, right):
  """Vertex of the parabola through three samples, in [-0.5, 0.5]"""
  denom = left - 2.0 * center + right
  if denom >= 0:
    return 0.0
  return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def log_scale_space(frame, sigmas):
  """Scale-normalized -sigma^2 * LoG responses, one plane per sigma"""
  return np.stack([-gaussian_laplace(frame, s, mode="nearest") * s ** 2 for s in sigmas])


def detect_blobs(frame, params = None):
  """Find bright blobs as scale-space maxima of the normalized LoG response

  Args:
    frame  : 2D intensity array, rescaled to [0, 1] internally
    params : DetectionParams

  Returns:
    list of Blob(x, y, sigma), strongest first; x is the column, y the row
  """
  if params is None:
    params = DetectionParams()
  frame = np.asarray(frame, dtype=np.float64)
  lo, hi = frame.min(), frame.max()
  if not hi > lo:
    return []
  image = (frame - lo) / (hi - lo)
  sigmas = params.sigma_grid()
  cube = log_scale_space(image, sigmas)
  peaks = (maximum_filter(cube, size=3, mode="nearest") == cube) & \
          (cube >= params.log_threshold)
  candidates = []
  n_s, n_y, n_x = cube.shape
  for s_idx, row, col in zip(*np.nonzero(peaks)):
    resp = cube[s_idx, row, col]
    dx = dy = ds = 0.0
    if 0 < col < n_x - 1:
      dx = _peak_offset(cube[s_idx, row, col - 1], resp, cube[s_idx, row, col + 1])
    if 0 < row < n_y - 1:
      dy = _peak_offset(cube[s_idx, row - 1, col], resp, cube[s_idx, row + 1, col])
    if 0 < s_idx < n_s - 1:
      ds = _peak_offset(cube[s_idx - 1, row, col], resp, cube[s_idx + 1, row, col])
    if ds >= 0:
      sigma = sigmas[s_idx] + ds * (sigmas[min(s_idx + 1, n_s - 1)] - sigmas[s_idx])
    else:
      sigma = sigmas[s_idx] + ds * (sigmas[s_idx] - sigmas[max(s_idx - 1, 0)])
    candidates.append((-float(resp), int(row), int(col),
                       Blob(col + dx, row + dy, float(sigma))))
  # Strongest first, ties by position, so suppression is order independent
  candidates.sort(key=lambda c: c[:3])
  kept = []
  for _, _, _, blob in candidates:
    overlaps = any(math.hypot(blob.x - k.x, blob.y - k.y) < math.sqrt(2) * max(blob.sigma, k.sigma)
                   for k in kept)
    if not overlaps:
      kept.append(blob)
  logging.debug("Detected %d blobs from %d scale-space maxima" % (len(kept), len(candidates)))
  return kept
