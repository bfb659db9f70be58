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

Video-patch container: 20-page 50x50 TIFF stacks
"""

import logging
import os

import numpy as np
import tifffile

from scripts.lib import N_FRAMES, PATCH_SIZE, DataError, FormatError, RangeError, ShapeError

PIXEL_SIZE_UM = 0.8
FRAME_INTERVAL_S = 60.0
SPLITS = ("train", "validation", "test")


class VideoPatch(object):
  """A 20-frame 50x50 single-channel intensity stack with its metadata"""
  def __init__(self, patch_id, frames, pixel_size_um = PIXEL_SIZE_UM,
               frame_interval_s = FRAME_INTERVAL_S, label = None,
               group_id = "", split = None):
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape != (N_FRAMES, PATCH_SIZE, PATCH_SIZE):
      raise ShapeError("Patch %s has shape %s, expected %d frames of %dx%d" %
                       (patch_id, "x".join(str(d) for d in frames.shape),
                        N_FRAMES, PATCH_SIZE, PATCH_SIZE))
    if not np.all(np.isfinite(frames)) or frames.min() < 0 or frames.max() > 255:
      raise RangeError("Patch %s has intensities outside [0, 255]" % patch_id)
    if not pixel_size_um > 0 or not frame_interval_s > 0:
      raise DataError("Patch %s: pixel size and frame interval must be positive" % patch_id)
    if label not in (None, 0, 1):
      raise DataError("Patch %s: label must be 0 or 1, got %s" % (patch_id, label))
    if split is not None and split not in SPLITS:
      raise DataError("Patch %s: unknown split %s" % (patch_id, split))
    frames.setflags(write=False)
    self.patch_id = patch_id
    self.frames = frames
    self.pixel_size_um = float(pixel_size_um)
    self.frame_interval_s = float(frame_interval_s)
    self.label = label
    self.group_id = group_id
    self.split = split


def _select_channel(data, path):
  """Reduce an RGB(A) stack to its green plane"""
  if data.ndim == 4 and data.shape[-1] in (3, 4):
    return data[..., 1]
  # Planar RGB pages are stored channel-first per frame
  if data.ndim == 4 and data.shape[1] in (3, 4):
    return data[:, 1]
  if data.ndim == 3:
    return data
  dims = "x".join(str(d) for d in data.shape)
  if data.ndim == 2:
    dims = "1x" + dims
  raise ShapeError("%s: cannot interpret image of shape %s as a frame stack" % (path, dims))


def load_patch(path, patch_id = None, **metadata):
  """Load a video-patch from a multi-page grayscale or RGB TIFF

  Args:
    path     : TIFF file
    patch_id : identifier, defaults to the file stem
    metadata : label, group_id, split, pixel_size_um, frame_interval_s

  Returns:
    VideoPatch with the green channel for RGB input
  """
  if patch_id is None:
    patch_id = os.path.splitext(os.path.basename(path))[0]
  if not os.path.isfile(path):
    raise FormatError("Cannot find patch file %s" % path)
  try:
    data = tifffile.imread(path)
  except (tifffile.TiffFileError, ValueError, OSError) as exc:
    raise FormatError("Malformed TIFF %s: %s" % (path, exc))
  if data.ndim == 2:
    raise ShapeError("%s: stack has 1 frames of %dx%d, expected %d frames of %dx%d" %
                     (path, data.shape[0], data.shape[1], N_FRAMES, PATCH_SIZE, PATCH_SIZE))
  frames = _select_channel(np.asarray(data), path)
  if frames.shape != (N_FRAMES, PATCH_SIZE, PATCH_SIZE):
    raise ShapeError("%s: stack has %d frames of %dx%d, expected %d frames of %dx%d" %
                     (path, frames.shape[0], frames.shape[1], frames.shape[2],
                      N_FRAMES, PATCH_SIZE, PATCH_SIZE))
  logging.debug("Loaded patch %s from %s" % (patch_id, path))
  return VideoPatch(patch_id, frames, **metadata)


def save_patch(patch, path):
  """Write a video-patch as a 20-page 8-bit grayscale TIFF"""
  data = np.clip(np.rint(patch.frames), 0, 255).astype(np.uint8)
  tifffile.imwrite(path, data, photometric="minisblack")
