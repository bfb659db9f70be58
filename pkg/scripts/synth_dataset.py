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

Synthetic video-patch generator with scripted cell motion
"""

import argparse
import logging
import math
import os
import sys

from collections import namedtuple

import numpy as np

from scripts.cell_track_csv import Track, save_tracks
from scripts.dataset_manifest import DatasetManifest, ManifestEntry, save_manifest
from scripts.lib import (MID_FRAME, N_FRAMES, PATCH_CENTER, PATCH_SIZE, RET_CTRL_C, RET_SUCCESS,
                         CbvccError, ConfigError, InfeasibleError, create_output, derive_seed,
                         run_parallel, setup_logging, write_yaml)
from scripts.track_annotation import (CLASS0_BACKGROUND, CLASS0_STATIONARY, CLASS0_STRAIGHT,
                                      CLASS1_TURN, annotate_tracks, save_annotations)
from scripts.video_patch import PIXEL_SIZE_UM, SPLITS, VideoPatch, save_patch
from scripts.video_quality import fg_bg_masks

SPOT_SIGMA_PX = 3.0
BACKGROUND_LEVEL = 40.0
NOISE_SIGMA = 8.0
TRACK_JITTER_PX = 0.1
STATIONARY_JITTER_PX = 0.6
DISTRACTOR_JITTER_PX = 0.5

# Distractors sit near the corners, away from the focal cell
DISTRACTOR_ANCHORS = [(8.0, 8.0), (42.0, 8.0), (8.0, 42.0), (42.0, 42.0)]
MAX_CELLS = 1 + len(DISTRACTOR_ANCHORS)
MAX_ATTEMPTS = 200
SPLIT_FRACTIONS = {"train": 0.7, "validation": 0.1, "test": 0.2}

CLASS0_MOTIONS = ("straight", "stationary", "empty")
CLASS0_MOTION_WEIGHTS = (0.4, 0.4, 0.2)


class SynthParams(namedtuple("SynthParams", ["n_patches", "class_mix", "snr_min", "snr_max",
                                             "cells_min", "cells_max", "pad_frames", "seed"])):
  """Generator settings, validated on construction"""
  __slots__ = ()

  def __new__(cls, n_patches = 10, class_mix = 0.5, snr_min = 6.0, snr_max = 6.0,
              cells_min = 1, cells_max = 1, pad_frames = 0, seed = 0):
    if int(n_patches) < 1:
      raise ConfigError("n_patches must be positive, got %s" % n_patches)
    if not 0.0 <= class_mix <= 1.0:
      raise ConfigError("class_mix must be in [0, 1], got %s" % class_mix)
    if not 0 < snr_min <= snr_max:
      raise ConfigError("SNR target range must satisfy 0 < min <= max, got %s, %s" %
                        (snr_min, snr_max))
    if not 0 <= int(cells_min) <= int(cells_max):
      raise ConfigError("Cell count range must satisfy 0 <= min <= max, got %s, %s" %
                        (cells_min, cells_max))
    if int(cells_max) > MAX_CELLS:
      raise ConfigError("At most %d cells fit in a %dx%d patch, got %s" %
                        (MAX_CELLS, PATCH_SIZE, PATCH_SIZE, cells_max))
    if not 0 <= int(pad_frames) < MID_FRAME:
      raise ConfigError("pad_frames must be in [0, %d], got %s" % (MID_FRAME - 1, pad_frames))
    return super(SynthParams, cls).__new__(cls, int(n_patches), float(class_mix),
                                           float(snr_min), float(snr_max), int(cells_min),
                                           int(cells_max), int(pad_frames), int(seed))

  @property
  def n_class1(self):
    return int(math.floor(self.n_patches * self.class_mix + 0.5))


def render_spots(centroids, shape = (PATCH_SIZE, PATCH_SIZE), sigma = SPOT_SIGMA_PX):
  """Sum of unit-amplitude isotropic Gaussian spots"""
  rows, cols = np.indices(shape, dtype=np.float64)
  unit = np.zeros(shape)
  for x, y in centroids:
    unit += np.exp(-((cols - x) ** 2 + (rows - y) ** 2) / (2.0 * sigma ** 2))
  return unit


def _nominal_contrast():
  centroid = [PATCH_CENTER]
  unit = render_spots(centroid)
  fg, _ = fg_bg_masks(unit.shape, centroid, PIXEL_SIZE_UM)
  return float(unit[fg].mean())


def spot_amplitude(unit, centroids, snr_target, pixel_size_um = PIXEL_SIZE_UM):
  """Amplitude giving an expected frame SNR of snr_target

  The contrast of the unit render is measured on the same foreground and
  background masks the quality metric uses. Frames without a background
  fall back to the contrast of a single centered spot.
  """
  fg, bg = fg_bg_masks(unit.shape, centroids, pixel_size_um)
  if fg.any() and bg.any():
    contrast = float(unit[fg].mean() - unit[bg].mean())
  else:
    contrast = _nominal_contrast()
  return snr_target * NOISE_SIGMA / contrast


def render_frame(centroids, snr_target, rng):
  """One 8-bit frame: background, Gaussian noise and calibrated spots"""
  shape = (PATCH_SIZE, PATCH_SIZE)
  frame = BACKGROUND_LEVEL + rng.normal(0.0, NOISE_SIGMA, shape)
  if centroids:
    unit = render_spots(centroids, shape)
    frame += spot_amplitude(unit, centroids, snr_target) * unit
  return np.clip(np.rint(frame), 0, 255)


def _direction(angle):
  return np.array([math.cos(angle), math.sin(angle)])


def focal_path(motion, rng):
  """Centroids of the cell at the patch center, one row per frame

  turn and straight paths are two straight segments meeting at the middle
  frame; a stationary cell jitters around its anchor.
  """
  p_mid = np.array(PATCH_CENTER) + rng.uniform(-3.0, 3.0, 2)
  if motion == "stationary":
    return p_mid + rng.normal(0.0, STATIONARY_JITTER_PX, (N_FRAMES, 2))
  if motion == "turn":
    alpha = math.radians(rng.uniform(110.0, 170.0))
  elif motion == "straight":
    alpha = math.radians(rng.uniform(0.0, 60.0))
  else:
    raise ConfigError("Unknown focal motion %s" % motion)
  speed = rng.uniform(0.8, 1.2)
  theta = rng.uniform(0.0, 2.0 * math.pi)
  sign = 1.0 if rng.random() < 0.5 else -1.0
  d_before = _direction(theta)
  d_after = _direction(theta + sign * alpha)
  path = np.empty((N_FRAMES, 2))
  for t in range(N_FRAMES):
    if t <= MID_FRAME:
      path[t] = p_mid - speed * (MID_FRAME - t) * d_before
    else:
      path[t] = p_mid + speed * (t - MID_FRAME) * d_after
  return path + rng.normal(0.0, TRACK_JITTER_PX, (N_FRAMES, 2))


def distractor_path(anchor, rng):
  """A cell jittering near the patch border"""
  base = np.array(anchor) + rng.normal(0.0, 1.5, 2)
  return base + rng.normal(0.0, DISTRACTOR_JITTER_PX, (N_FRAMES, 2))


def intended_category(motion, n_cells):
  if motion == "turn":
    return CLASS1_TURN
  if motion == "straight":
    return CLASS0_STRAIGHT
  if motion == "stationary":
    return CLASS0_STATIONARY
  # Without a focal cell the nearest distractor is picked, and it barely moves
  return CLASS0_STATIONARY if n_cells > 0 else CLASS0_BACKGROUND


def _inside(path):
  return bool(np.all(path >= 0.0) and np.all(path <= PATCH_SIZE - 1))


def synth_patch(task):
  """Generate one patch

  Args:
    task : (patch_id, label, SynthParams)

  Returns:
    dict with frames (uint8), tracks, annotation, snr_target, n_cells,
    motion and seed
  """
  patch_id, label, params = task
  seed = derive_seed(params.seed, patch_id)
  rng = np.random.default_rng(seed)
  snr_target = float(rng.uniform(params.snr_min, params.snr_max))
  if label == 1:
    n_cells = int(rng.integers(max(1, params.cells_min), params.cells_max + 1))
    motion = "turn"
  else:
    n_cells = int(rng.integers(params.cells_min, params.cells_max + 1))
    motion = "empty"
    if n_cells > 0:
      motion = str(rng.choice(CLASS0_MOTIONS, p=CLASS0_MOTION_WEIGHTS))
  intended = intended_category(motion, n_cells)

  for attempt in range(MAX_ATTEMPTS):
    paths = []
    if motion != "empty":
      paths.append(focal_path(motion, rng))
    for a in rng.permutation(len(DISTRACTOR_ANCHORS))[:n_cells - len(paths)]:
      paths.append(distractor_path(DISTRACTOR_ANCHORS[a], rng))
    if not all(_inside(p) for p in paths):
      continue
    tracks = [Track(i + 1, [(t, p[t, 0], p[t, 1]) for t in range(params.pad_frames, N_FRAMES)])
              for i, p in enumerate(paths)]
    annotation = annotate_tracks(tracks)
    if annotation.category == intended:
      break
    logging.debug("Patch %s: attempt %d annotated %s, wanted %s" %
                  (patch_id, attempt, annotation.category, intended))
  else:
    raise InfeasibleError("Patch %s: no %s motion found in %d attempts" %
                          (patch_id, intended, MAX_ATTEMPTS))

  frames = np.zeros((N_FRAMES, PATCH_SIZE, PATCH_SIZE))
  for t in range(N_FRAMES):
    frame = render_frame([(p[t, 0], p[t, 1]) for p in paths], snr_target, rng)
    if t >= params.pad_frames:
      frames[t] = frame
  return {"patch_id"   : patch_id,
          "frames"     : frames.astype(np.uint8),
          "tracks"     : tracks,
          "annotation" : annotation,
          "snr_target" : snr_target,
          "n_cells"    : n_cells,
          "motion"     : motion,
          "seed"       : seed}


def assign_splits(group_sizes, seed):
  """Deal groups to splits, each group to the split furthest below its share

  Returns:
    dict group_id -> split
  """
  total = sum(group_sizes.values())
  counts = dict((s, 0) for s in SPLITS)
  rng = np.random.default_rng(derive_seed(seed, "splits"))
  groups = sorted(group_sizes)
  assignment = {}
  for i in rng.permutation(len(groups)):
    g = groups[i]
    split = max(SPLITS, key=lambda s: (SPLIT_FRACTIONS[s] * total - counts[s], -SPLITS.index(s)))
    assignment[g] = split
    counts[split] += group_sizes[g]
  return assignment


def label_quotas(split_sizes, n_class1):
  """Class-1 count per split

  Largest-remainder share of n_class1, then adjusted so that every split
  with two or more patches holds both classes when the totals allow it.
  """
  total = sum(split_sizes.values())
  quotas = dict((s, 0) for s in SPLITS)
  if total == 0:
    return quotas
  remainders = []
  for s in SPLITS:
    share = split_sizes[s] * n_class1 / float(total)
    quotas[s] = int(math.floor(share))
    remainders.append((-(share - quotas[s]), SPLITS.index(s), s))
  for _, _, s in sorted(remainders)[:n_class1 - sum(quotas.values())]:
    quotas[s] += 1

  def spare_pos(s):
    return quotas[s] - (1 if split_sizes[s] >= 2 else 0)

  def spare_neg(s):
    return split_sizes[s] - quotas[s] - (1 if split_sizes[s] >= 2 else 0)

  for s in SPLITS:
    if split_sizes[s] < 2:
      continue
    if quotas[s] == 0:
      donors = [d for d in SPLITS if d != s and spare_pos(d) > 0]
      if donors:
        donor = max(donors, key=spare_pos)
        quotas[donor] -= 1
        quotas[s] += 1
    elif quotas[s] == split_sizes[s]:
      takers = [d for d in SPLITS if d != s and spare_neg(d) > 0]
      if takers:
        taker = max(takers, key=spare_neg)
        quotas[taker] += 1
        quotas[s] -= 1
  return quotas


def spread_labels(size, n_ones):
  """size labels with n_ones class-1 entries spread evenly"""
  return [((j + 1) * n_ones * 2 + size) // (2 * size) - (j * n_ones * 2 + size) // (2 * size)
          for j in range(size)]


def plan_dataset(params):
  """Patch ids, groups, splits and labels of a synthetic dataset

  Returns:
    list of (patch_id, group_id, split, label) in patch id order
  """
  n = params.n_patches
  n_groups = min(n, max(5, n // 10))
  width = max(4, len(str(n - 1)))
  patch_ids = ["p%0*d" % (width, i) for i in range(n)]
  group_ids = ["v%02d" % (i % n_groups) for i in range(n)]
  sizes = {}
  for g in group_ids:
    sizes[g] = sizes.get(g, 0) + 1
  group_split = assign_splits(sizes, params.seed)
  splits = [group_split[g] for g in group_ids]
  split_sizes = dict((s, splits.count(s)) for s in SPLITS)
  if params.n_class1 > 0 and params.cells_max == 0:
    raise ConfigError("Class-1 patches need at least one cell, cells_max is 0")
  quotas = label_quotas(split_sizes, params.n_class1)
  labels = [None] * n
  for s in SPLITS:
    members = [i for i in range(n) if splits[i] == s]
    for i, label in zip(members, spread_labels(len(members), quotas[s])):
      labels[i] = label
  return [(patch_ids[i], group_ids[i], splits[i], labels[i]) for i in range(n)]


def cmd_synth(output, params, jobs = 1):
  """Write a synthetic labeled dataset

  Layout of the output directory:
    manifest.csv, patches/<id>.tif, tracks/<id>.csv,
    annotations_truth.csv, seed.yaml, synth.yaml

  Args:
    output : dataset directory
    params : SynthParams
    jobs   : worker count

  Returns:
    DatasetManifest
  """
  plan = plan_dataset(params)
  logging.info("Generating %d synthetic patches (%d class 1)" %
               (params.n_patches, params.n_class1))
  create_output(output)
  patch_dir = create_output(os.path.join(output, "patches"))
  track_dir = create_output(os.path.join(output, "tracks"))
  results = run_parallel(synth_patch, [(pid, label, params) for pid, _, _, label in plan], jobs)

  entries = []
  truth = []
  seeds = {}
  details = {}
  for (patch_id, group_id, split, label), res in zip(plan, results):
    path = os.path.join(patch_dir, "%s.tif" % patch_id)
    save_patch(VideoPatch(patch_id, res["frames"], label=label, group_id=group_id, split=split),
               path)
    save_tracks(res["tracks"], os.path.join(track_dir, "%s.csv" % patch_id))
    entries.append(ManifestEntry(patch_id, path, label, group_id, split))
    truth.append((patch_id, res["annotation"]))
    seeds[patch_id] = res["seed"]
    details[patch_id] = {"snr_target" : res["snr_target"],
                         "n_cells"    : res["n_cells"],
                         "motion"     : res["motion"]}
  manifest = DatasetManifest(entries, track_dir)
  save_manifest(manifest, os.path.join(output, "manifest.csv"))
  save_annotations(truth, os.path.join(output, "annotations_truth.csv"))
  write_yaml(seeds, os.path.join(output, "seed.yaml"))
  write_yaml({"params"  : dict(params._asdict()),
              "patches" : details}, os.path.join(output, "synth.yaml"))
  logging.info("Synthetic dataset written to : %s %s" % (output, dict(manifest.split_counts())))
  return manifest


def _range_arg(values, name, cast):
  if len(values) == 1:
    return cast(values[0]), cast(values[0])
  if len(values) == 2:
    return cast(values[0]), cast(values[1])
  raise ConfigError("%s takes one value or a min max pair" % name)


def add_synth_arguments(parser):
  """Generator options, shared with the synth command of run.py"""
  parser.add_argument("--n_patches", type=int, default=None,
                      help="Number of video-patches to generate")
  parser.add_argument("--class_mix", type=float, default=None,
                      help="Fraction of class-1 patches")
  parser.add_argument("--snr", type=float, nargs="+", default=None,
                      help="Target SNR, or a min max range drawn per patch")
  parser.add_argument("--cells", type=int, nargs="+", default=None,
                      help="Cells per patch, or a min max range drawn per patch")
  parser.add_argument("--pad_frames", type=int, default=None,
                      help="Replace the first N frames with black frames")


def params_from_args(args):
  snr = _range_arg(args.snr or [6.0], "--snr", float)
  cells = _range_arg(args.cells or [1], "--cells", int)
  return SynthParams(n_patches=args.n_patches if args.n_patches is not None else 10,
                     class_mix=args.class_mix if args.class_mix is not None else 0.5,
                     snr_min=snr[0], snr_max=snr[1], cells_min=cells[0], cells_max=cells[1],
                     pad_frames=args.pad_frames or 0,
                     seed=args.seed if args.seed is not None else 0)


def main(argv = None):
  """Standalone entry point of the generator"""
  parser = argparse.ArgumentParser(description="Synthetic video-patch generator")
  add_synth_arguments(parser)
  parser.add_argument("-o", "--output", type=str, default="synth_data",
                      help="Output directory", dest="o")
  parser.add_argument("--seed", type=int, default=0,
                      help="Run seed; every patch derives its own stream from it")
  parser.add_argument("--jobs", type=int, default=1,
                      help="Worker processes")
  parser.add_argument("-v", "--verbose", action="store_true", default=False,
                      help="Verbose logging")
  args = parser.parse_args(argv)
  setup_logging(args.verbose)
  try:
    cmd_synth(args.o, params_from_args(args), args.jobs)
  except CbvccError as exc:
    logging.error(str(exc))
    sys.stderr.write(exc.to_json() + "\n")
    sys.exit(exc.ret_code)
  except KeyboardInterrupt:
    logging.info("\nExited Ctrl-C from user request.")
    sys.exit(RET_CTRL_C)
  sys.exit(RET_SUCCESS)


if __name__ == "__main__":
  main()
