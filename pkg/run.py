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

Command line driver of the track-based cell behavior pipeline
"""

import argparse
import glob
import logging
import os
import sys

from collections import namedtuple, OrderedDict

import numpy as np

from scripts.blob_detector import DetectionParams
from scripts.cell_track_csv import load_track_dir, save_tracks
from scripts.challenge_eval import (cell_count_bins, evaluate_predictions, grouped_kfold,
                                    run_cross_validation, save_cv_results, save_replicates,
                                    save_report, save_roc, save_strata, snr_bins,
                                    stratified_scores)
from scripts.dataset_manifest import (Prediction, load_manifest, load_predictions,
                                      save_predictions)
from scripts.lib import (RET_CTRL_C, RET_SUCCESS, CbvccError, ConfigError, DataError,
                         create_output, derive_seed, read_config, run_parallel,
                         setup_logging, write_json, write_yaml)
from scripts.logistic_model import (load_model, predict_label, predict_proba, save_model, train,
                                    variant_by_name)
from scripts.motility_features import (FEATURE_SETS, feature_schema, load_features,
                                       patch_features, save_features)
from scripts.synth_dataset import add_synth_arguments, cmd_synth, params_from_args
from scripts.track_annotation import annotate_tracks, save_annotations
from scripts.track_linker import LinkParams, track_patch
from scripts.video_patch import SPLITS, load_patch
from scripts.video_quality import load_quality, patch_snr, save_quality

LOGGER = logging.getLogger()

ROOT = os.path.dirname(os.path.realpath(__file__))
DEFAULT_CONFIG = os.path.join(ROOT, "yaml", "cbvcc.yaml")
LOCAL_CONFIGS = ("cbvcc.yaml", "cbvcc.toml")

BUILTIN_DEFAULTS = {"o"             : "out",
                    "seed"          : 0,
                    "jobs"          : 1,
                    "variant"       : "manual-all",
                    "eval_split"    : "test",
                    "c_reg"         : 200.0,
                    "threshold"     : 0.5,
                    "standardize"   : False,
                    "cv_k"          : 5,
                    "cv_repeats"    : 5,
                    "snr_bin_width" : 1.0,
                    "max_snr"       : 12.0,
                    "replicates"    : 25}
BUILTIN_DEFAULTS.update(DetectionParams()._asdict())
BUILTIN_DEFAULTS.update(LinkParams()._asdict())
CONFIG_KEYS = set(BUILTIN_DEFAULTS) - set(["o"])


class PipelineConfig(namedtuple("PipelineConfig",
                                ["manifest", "tracks", "output", "model", "variant",
                                 "detection", "link", "c_reg", "threshold", "standardize",
                                 "seed", "jobs", "eval_split"])):
  """Resolved settings of the end-to-end pipeline"""
  __slots__ = ()

  @classmethod
  def from_cfg(cls, cfg):
    manifest = require(cfg, "manifest", "pipeline")
    if not os.path.isfile(manifest):
      raise ConfigError("Cannot find manifest %s" % manifest)
    if cfg["eval_split"] not in SPLITS:
      raise ConfigError("Unknown eval split %s" % cfg["eval_split"])
    return cls(manifest, cfg.get("tracks"), cfg["o"], cfg.get("model"),
               variant_by_name(cfg["variant"]), detection_params(cfg), link_params(cfg),
               float(cfg["c_reg"]), float(cfg["threshold"]), bool(cfg["standardize"]),
               int(cfg["seed"]), int(cfg["jobs"]), cfg["eval_split"])


def require(cfg, key, command):
  if cfg.get(key) is None:
    raise ConfigError("Command %s needs --%s" % (command, key))
  return cfg[key]


def detection_params(cfg):
  return DetectionParams(**dict((k, cfg[k]) for k in DetectionParams._fields))


def link_params(cfg):
  return LinkParams(**dict((k, cfg[k]) for k in LinkParams._fields))


def resolve_feature_set(cfg):
  """--feature_set when given, else the feature set of --variant"""
  if cfg.get("feature_set"):
    return cfg["feature_set"]
  return variant_by_name(cfg["variant"]).features


def resolve_track_dir(cfg, manifest, command):
  track_dir = cfg.get("tracks") or (manifest.track_dir if manifest is not None else None)
  if track_dir is None or not os.path.isdir(track_dir):
    raise ConfigError("Command %s needs an existing tracks directory, got %s" %
                      (command, track_dir))
  return track_dir


def _track_task(task):
  patch_id, path, detection, link, seed = task
  patch = load_patch(path, patch_id)
  tracks, summary = track_patch(patch, detection, link, seed)
  return patch_id, tracks, summary


def run_tracking(manifest, detection, link, seed, jobs, output):
  """Detect and link every patch, write tracks/, tracking_report.json, seed.yaml

  Returns:
    dict patch_id -> list of Track
  """
  missing = [e.patch_id for e in manifest if not e.path or not os.path.isfile(e.path)]
  if missing:
    raise ConfigError("Automated tracking needs the patch files, %d missing (first: %s)" %
                      (len(missing), missing[0]))
  seeds = OrderedDict((e.patch_id, derive_seed(seed, e.patch_id)) for e in manifest)
  logging.info("Tracking %d patches" % len(manifest))
  tasks = [(e.patch_id, e.path, detection, link, seeds[e.patch_id]) for e in manifest]
  results = run_parallel(_track_task, tasks, jobs)
  track_dir = create_output(os.path.join(output, "tracks"))
  tracks_by_patch = OrderedDict()
  summaries = OrderedDict()
  for patch_id, tracks, summary in results:
    save_tracks(tracks, os.path.join(track_dir, "%s.csv" % patch_id))
    tracks_by_patch[patch_id] = tracks
    summaries[patch_id] = summary
  write_json({"patches"  : summaries,
              "n_patches": len(summaries),
              "n_tracks" : sum(s["n_tracks"] for s in summaries.values()),
              "n_gaps"   : sum(s["n_gaps"] for s in summaries.values())},
             os.path.join(output, "tracking_report.json"))
  write_yaml(dict(seeds), os.path.join(output, "seed.yaml"))
  return tracks_by_patch


def feature_rows(patch_ids, tracks_by_patch, feature_set):
  return [(pid, patch_features(tracks_by_patch.get(pid, []), feature_set)) for pid in patch_ids]


def training_matrix(entries, rows):
  """Stack the features of labeled entries

  Returns:
    (X, y, entries used)
  """
  X, y, used = [], [], []
  for e in entries:
    if e.label is None:
      continue
    if e.patch_id not in rows:
      raise DataError("No features for patch %s" % e.patch_id)
    X.append(rows[e.patch_id].as_array())
    y.append(e.label)
    used.append(e)
  if not used:
    raise DataError("No labeled patches to train on")
  return np.array(X), np.array(y, dtype=int), used


def predict_rows(model, rows):
  """Predictions for a list of (patch_id, FeatureVector)"""
  if not rows:
    raise DataError("No patches to predict")
  X = np.array([vec.as_array() for _, vec in rows])
  probs = predict_proba(model, X)
  labels = predict_label(model, X)
  return [Prediction(pid, probs[i], int(labels[i])) for i, (pid, _) in enumerate(rows)]


def _model_feature_set(model):
  for feature_set in FEATURE_SETS:
    if model.feature_schema == feature_schema(feature_set):
      return feature_set
  raise ConfigError("Model schema %s matches no feature set" % ",".join(model.feature_schema))


def evaluate_if_labeled(preds, labels, output):
  """Write report.json and roc.csv when some prediction has a known label

  Returns:
    EvalReport, None for an unlabeled split
  """
  if not any(labels.get(p.patch_id) is not None for p in preds):
    logging.info("No labels for the %d predicted patches, skipping evaluation" % len(preds))
    return None
  report = evaluate_predictions(preds, labels)
  save_report(report, os.path.join(output, "report.json"))
  save_roc(report, os.path.join(output, "roc.csv"))
  return report


def cmd_track(cfg):
  manifest = load_manifest(require(cfg, "manifest", "track"))
  output = create_output(cfg["o"])
  run_tracking(manifest, detection_params(cfg), link_params(cfg), cfg["seed"], cfg["jobs"],
               output)
  return RET_SUCCESS


def cmd_features(cfg):
  manifest = load_manifest(require(cfg, "manifest", "features"), cfg.get("tracks"))
  track_dir = resolve_track_dir(cfg, manifest, "features")
  feature_set = resolve_feature_set(cfg)
  output = create_output(cfg["o"])
  tracks = load_track_dir(track_dir, manifest.patch_ids)
  save_features(feature_rows(manifest.patch_ids, tracks, feature_set),
                os.path.join(output, "features.csv"))
  return RET_SUCCESS


def cmd_annotate(cfg):
  manifest = None
  if cfg.get("manifest"):
    manifest = load_manifest(cfg["manifest"], cfg.get("tracks"))
  track_dir = resolve_track_dir(cfg, manifest, "annotate")
  if manifest is not None:
    patch_ids = manifest.patch_ids
  else:
    patch_ids = sorted(os.path.splitext(os.path.basename(p))[0]
                       for p in glob.glob(os.path.join(track_dir, "*.csv")))
  output = create_output(cfg["o"])
  tracks = load_track_dir(track_dir, patch_ids)
  save_annotations([(pid, annotate_tracks(tracks[pid])) for pid in patch_ids],
                   os.path.join(output, "annotations.csv"))
  return RET_SUCCESS


def cmd_train(cfg):
  manifest = load_manifest(require(cfg, "manifest", "train"))
  feature_set = resolve_feature_set(cfg)
  rows = load_features(require(cfg, "features", "train"), feature_set)
  X, y, _ = training_matrix(manifest.select(cfg.get("split") or "train"), rows)
  output = create_output(cfg["o"])
  model = train(X, y, cfg["c_reg"], feature_schema=feature_schema(feature_set),
                threshold=cfg["threshold"], standardize=cfg["standardize"])
  save_model(model, os.path.join(output, "model.json"))
  return RET_SUCCESS


def cmd_predict(cfg):
  model = load_model(require(cfg, "model", "predict"))
  rows = load_features(require(cfg, "features", "predict"), _model_feature_set(model))
  patch_ids = list(rows)
  if cfg.get("manifest") and cfg.get("split"):
    patch_ids = [e.patch_id for e in load_manifest(cfg["manifest"]).select(cfg["split"])
                 if e.patch_id in rows]
  output = create_output(cfg["o"])
  save_predictions(predict_rows(model, [(pid, rows[pid]) for pid in patch_ids]),
                   os.path.join(output, "predictions.csv"))
  return RET_SUCCESS


def cmd_evaluate(cfg):
  manifest = load_manifest(require(cfg, "manifest", "evaluate"))
  preds = load_predictions(require(cfg, "predictions", "evaluate"))
  output = create_output(cfg["o"])
  report = evaluate_predictions(preds, manifest.labels())
  save_report(report, os.path.join(output, "report.json"))
  save_roc(report, os.path.join(output, "roc.csv"))
  logging.info("AUC %.3f precision %.3f recall %.3f balanced accuracy %.3f score %.3f" %
               (report.auc, report.precision, report.recall, report.balanced_accuracy,
                report.score))
  return RET_SUCCESS


def cmd_cv(cfg):
  manifest = load_manifest(require(cfg, "manifest", "cv"))
  feature_set = resolve_feature_set(cfg)
  rows = load_features(require(cfg, "features", "cv"), feature_set)
  X, y, used = training_matrix(manifest.select(cfg.get("split") or "train"), rows)
  plan = grouped_kfold(used, cfg["cv_k"], cfg["cv_repeats"], cfg["seed"])
  output = create_output(cfg["o"])
  _, fold_rows = run_cross_validation(X, y, [e.group_id for e in used], plan, cfg["c_reg"],
                                      cfg["threshold"], cfg["standardize"], cfg["jobs"])
  save_cv_results(fold_rows, os.path.join(output, "cv_results.csv"))
  write_yaml({"seed"  : plan.seed,
              "folds" : dict((r, dict((f, groups) for f, groups in enumerate(folds)))
                             for r, folds in enumerate(plan.folds))},
             os.path.join(output, "cv_folds.yaml"))
  accs = [row["balanced_accuracy"] for row in fold_rows if row["balanced_accuracy"] is not None]
  if accs:
    logging.info("CV balanced accuracy: mean %.3f, min %.3f, max %.3f" %
                 (np.mean(accs), np.min(accs), np.max(accs)))
  return RET_SUCCESS


def _snr_task(task):
  patch_id, path, tracks = task
  return patch_snr(load_patch(path, patch_id), tracks)


def cmd_snr(cfg):
  manifest = load_manifest(require(cfg, "manifest", "snr"), cfg.get("tracks"))
  track_dir = resolve_track_dir(cfg, manifest, "snr")
  tracks = load_track_dir(track_dir, manifest.patch_ids)
  output = create_output(cfg["o"])
  tasks = [(e.patch_id, e.path, tracks[e.patch_id]) for e in manifest]
  save_quality(run_parallel(_snr_task, tasks, cfg["jobs"]), os.path.join(output, "quality.csv"))
  return RET_SUCCESS


def cmd_stratify(cfg):
  manifest = load_manifest(require(cfg, "manifest", "stratify"))
  preds = load_predictions(require(cfg, "predictions", "stratify"))
  quality = list(load_quality(require(cfg, "quality", "stratify")).values())
  output = create_output(cfg["o"])
  labels = manifest.labels()
  strata = [("n_cells", stratified_scores(preds, labels, cell_count_bins(quality))),
            ("snr", stratified_scores(preds, labels,
                                      snr_bins(quality, cfg["snr_bin_width"], cfg["max_snr"])))]
  save_strata(strata, os.path.join(output, "strata.csv"))
  return RET_SUCCESS


def cmd_synth_data(cfg):
  cmd_synth(cfg["o"], params_from_args(argparse.Namespace(**cfg)), cfg["jobs"])
  return RET_SUCCESS


def cmd_pipeline(config):
  """track -> select -> features -> train or load model -> predict -> evaluate

  Args:
    config : PipelineConfig

  Returns:
    exit status
  """
  manifest = load_manifest(config.manifest, config.tracks)
  variant = config.variant
  output = create_output(config.output)
  logging.info("Running variant %s on %s" % (variant.name, config.manifest))
  if variant.tracks == "automated":
    tracks = run_tracking(manifest, config.detection, config.link, config.seed, config.jobs,
                          output)
  else:
    track_dir = config.tracks or manifest.track_dir
    if track_dir is None or not os.path.isdir(track_dir):
      raise ConfigError("Variant %s needs a tracks directory" % variant.name)
    tracks = load_track_dir(track_dir, manifest.patch_ids)

  rows = feature_rows(manifest.patch_ids, tracks, variant.features)
  save_features(rows, os.path.join(output, "features.csv"))
  by_id = OrderedDict(rows)

  if config.model:
    model = load_model(config.model)
    if model.feature_schema != feature_schema(variant.features):
      raise ConfigError("Model %s was trained on another feature set than %s" %
                        (config.model, variant.features))
  else:
    X, y, _ = training_matrix(manifest.select("train"), by_id)
    model = train(X, y, config.c_reg, feature_schema=feature_schema(variant.features),
                  threshold=config.threshold, standardize=config.standardize)
    save_model(model, os.path.join(output, "model.json"))

  eval_ids = [e.patch_id for e in manifest.select(config.eval_split)]
  if not eval_ids:
    raise DataError("Split %s has no patches" % config.eval_split)
  preds = predict_rows(model, [(pid, by_id[pid]) for pid in eval_ids])
  save_predictions(preds, os.path.join(output, "predictions.csv"))
  report = evaluate_if_labeled(preds, manifest.labels(), output)
  if report is not None:
    logging.info("%s on %s: balanced accuracy %.3f, score %.3f" %
                 (variant.name, config.eval_split, report.balanced_accuracy, report.score))
  return RET_SUCCESS


def cmd_replicates(cfg):
  """Score a fixed model on repeated automated tracking runs

  Every replicate re-tracks all patches with a seed derived from --seed and
  the replicate index, then predicts and scores the eval split.

  Returns:
    exit status
  """
  manifest = load_manifest(require(cfg, "manifest", "replicates"), cfg.get("tracks"))
  model = load_model(require(cfg, "model", "replicates"))
  feature_set = _model_feature_set(model)
  n_replicates = int(cfg["replicates"])
  if n_replicates < 1:
    raise ConfigError("Need at least one replicate, got %d" % n_replicates)
  if cfg["eval_split"] not in SPLITS:
    raise ConfigError("Unknown eval split %s" % cfg["eval_split"])
  eval_ids = [e.patch_id for e in manifest.select(cfg["eval_split"])]
  if not eval_ids:
    raise DataError("Split %s has no patches" % cfg["eval_split"])
  output = create_output(cfg["o"])
  labels = manifest.labels()
  rows = []
  for r in range(n_replicates):
    seed = derive_seed(cfg["seed"], "replicate", r)
    rep_dir = create_output(os.path.join(output, "replicate_%02d" % r))
    tracks = run_tracking(manifest, detection_params(cfg), link_params(cfg), seed, cfg["jobs"],
                          rep_dir)
    preds = predict_rows(model, feature_rows(eval_ids, tracks, feature_set))
    save_predictions(preds, os.path.join(rep_dir, "predictions.csv"))
    report = evaluate_if_labeled(preds, labels, rep_dir)
    rows.append({"replicate" : r,
                 "seed"      : seed,
                 "n_tracks"  : sum(len(t) for t in tracks.values()),
                 "report"    : report})
  save_replicates(rows, os.path.join(output, "replicates.csv"))
  accs = [row["report"].balanced_accuracy for row in rows if row["report"] is not None]
  if accs:
    logging.info("Replicate balanced accuracy: mean %.3f, min %.3f, max %.3f" %
                 (np.mean(accs), np.min(accs), np.max(accs)))
  return RET_SUCCESS


COMMANDS = OrderedDict([
    ("track",    cmd_track),
    ("features", cmd_features),
    ("annotate", cmd_annotate),
    ("train",    cmd_train),
    ("predict",  cmd_predict),
    ("evaluate", cmd_evaluate),
    ("cv",       cmd_cv),
    ("snr",      cmd_snr),
    ("stratify", cmd_stratify),
    ("synth",    cmd_synth_data),
    ("pipeline", lambda cfg: cmd_pipeline(PipelineConfig.from_cfg(cfg))),
    ("replicates", cmd_replicates),
])


def _add_detection_link(parser):
  parser.add_argument("--sigma_min_px", type=float, default=None,
                      help="Smallest LoG scale")
  parser.add_argument("--sigma_max_px", type=float, default=None,
                      help="Largest LoG scale")
  parser.add_argument("--n_sigma", type=int, default=None,
                      help="Number of LoG scales")
  parser.add_argument("--log_threshold", type=float, default=None,
                      help="Minimum normalized LoG response of a blob")
  parser.add_argument("--noise_floor_cutoff", type=float, default=None,
                      help="Intensities at or below this are replaced by noise")
  parser.add_argument("--noise_sigma", type=float, default=None,
                      help="Standard deviation of the replacement noise")
  parser.add_argument("--search_range_px", type=float, default=None,
                      help="Longest frame-to-frame link")
  parser.add_argument("--memory_frames", type=int, default=None,
                      help="Frames a track may stay unmatched")


def _add_classifier(parser):
  parser.add_argument("--c_reg", type=float, default=None,
                      help="Weight of the data term of the logistic objective")
  parser.add_argument("--threshold", type=float, default=None,
                      help="Decision threshold on the class-1 probability")
  parser.add_argument("--standardize", action="store_true", default=None,
                      help="Z-score features with training statistics")


def setup_parser():
  """Create a command line parser.

  Returns: The created parser.
  """
  common = argparse.ArgumentParser(add_help=False)
  common.add_argument("-o", "--output", type=str, default=None,
                      help="Output directory name", dest="o")
  common.add_argument("--config", type=str, default=None,
                      help="YAML or TOML configuration, flags win over it")
  common.add_argument("--seed", type=int, default=None,
                      help="Run seed; per-patch streams are derived from it")
  common.add_argument("--jobs", type=int, default=None,
                      help="Worker processes for per-patch stages")
  common.add_argument("-v", "--verbose", dest="verbose", action="store_true", default=False,
                      help="Verbose logging")
  common.add_argument("--manifest", type=str, default=None,
                      help="Dataset manifest CSV")
  common.add_argument("--tracks", type=str, default=None,
                      help="Tracks directory, defaults to tracks/ next to the manifest")
  common.add_argument("--variant", type=str, default=None,
                      help="Model variant from yaml/variants.yaml")

  parser = argparse.ArgumentParser(description="Track-based cell behavior classification")
  subparsers = parser.add_subparsers(dest="command")
  subparsers.required = True

  p = subparsers.add_parser("track", parents=[common], help="Detect and link cells")
  _add_detection_link(p)

  p = subparsers.add_parser("features", parents=[common], help="Extract motility features")
  p.add_argument("--feature_set", choices=FEATURE_SETS, default=None,
                 help="Feature set, defaults to the one of --variant")

  subparsers.add_parser("annotate", parents=[common], help="Pre-screen tracks into categories")

  for name, text in (("train", "Train the logistic model"),
                     ("cv", "Grouped repeated cross-validation")):
    p = subparsers.add_parser(name, parents=[common], help=text)
    p.add_argument("--features", type=str, default=None, help="features.csv")
    p.add_argument("--feature_set", choices=FEATURE_SETS, default=None,
                   help="Feature set, defaults to the one of --variant")
    p.add_argument("--split", choices=SPLITS, default=None,
                   help="Training split, default train")
    _add_classifier(p)
    if name == "cv":
      p.add_argument("--cv_k", type=int, default=None, help="Fold count")
      p.add_argument("--cv_repeats", type=int, default=None, help="Repeat count")

  p = subparsers.add_parser("predict", parents=[common], help="Predict with a saved model")
  p.add_argument("--features", type=str, default=None, help="features.csv")
  p.add_argument("--model", type=str, default=None, help="model.json")
  p.add_argument("--split", choices=SPLITS, default=None,
                 help="Only predict the patches of this manifest split")

  p = subparsers.add_parser("evaluate", parents=[common], help="Score predictions")
  p.add_argument("--predictions", type=str, default=None, help="predictions.csv")

  subparsers.add_parser("snr", parents=[common], help="Cell count and SNR per patch")

  p = subparsers.add_parser("stratify", parents=[common], help="Scores per cell count and SNR")
  p.add_argument("--predictions", type=str, default=None, help="predictions.csv")
  p.add_argument("--quality", type=str, default=None, help="quality.csv")
  p.add_argument("--snr_bin_width", type=float, default=None, help="SNR bin width")
  p.add_argument("--max_snr", type=float, default=None, help="Patches above are left out")

  p = subparsers.add_parser("synth", parents=[common], help="Generate a synthetic dataset")
  add_synth_arguments(p)

  p = subparsers.add_parser("pipeline", parents=[common], help="Run the end-to-end pipeline")
  _add_detection_link(p)
  _add_classifier(p)
  p.add_argument("--model", type=str, default=None,
                 help="Predict with this model instead of training one")
  p.add_argument("--eval_split", choices=SPLITS, default=None,
                 help="Split to evaluate, default test")

  p = subparsers.add_parser("replicates", parents=[common],
                            help="Score a saved model over repeated tracking runs")
  _add_detection_link(p)
  p.add_argument("--model", type=str, default=None, help="model.json")
  p.add_argument("--replicates", type=int, default=None, help="Tracking runs")
  p.add_argument("--eval_split", choices=SPLITS, default=None,
                 help="Split to evaluate, default test")
  return parser


def flatten_config(data, path):
  """Merge the sections of a configuration file into one flat dictionary"""
  if data is None:
    return {}
  if not isinstance(data, dict):
    raise ConfigError("Configuration %s must be a mapping" % path)
  flat = {}
  for key, val in data.items():
    items = val.items() if isinstance(val, dict) else [(key, val)]
    for k, v in items:
      if k not in CONFIG_KEYS:
        raise ConfigError("Unknown configuration key %s in %s" % (k, path))
      flat[k] = v
  return flat


def load_config(args):
  """
  Load configuration from the command line and the configuration file.
  Args:
      args:   Parsed command-line configuration
  Returns:
      Loaded configuration dictionary, flags over file over built-in defaults
  """
  path = args.config
  if path is None:
    local = [p for p in LOCAL_CONFIGS if os.path.isfile(p)]
    path = local[0] if local else DEFAULT_CONFIG
  cfg = dict(BUILTIN_DEFAULTS)
  cfg.update(flatten_config(read_config(path), path))
  for key, val in vars(args).items():
    if val is not None or key not in cfg:
      cfg[key] = val
  logging.debug("Configuration from %s: %s" % (path, cfg))
  return cfg


def main(argv = None):
  """This is the main entry point."""
  try:
    parser = setup_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    cfg = load_config(args)
    sys.exit(COMMANDS[args.command](cfg))
  except CbvccError as exc:
    logging.error(str(exc))
    sys.stderr.write(exc.to_json() + "\n")
    sys.exit(exc.ret_code)
  except KeyboardInterrupt:
    logging.info("\nExited Ctrl-C from user request.")
    sys.exit(RET_CTRL_C)

if __name__ == "__main__":
  main()
