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

L2-regularized logistic regression trained by damped Newton steps
"""

import logging
import os

from collections import namedtuple

import numpy as np

from scipy.special import expit

from scripts.lib import (ConfigError, DegenerateError, FormatError, NumericError, ShapeError,
                         read_json, read_yaml, write_json)

DEFAULT_C_REG = 200.0
DEFAULT_THRESHOLD = 0.5
VARIANTS_YAML = os.path.join(os.path.dirname(os.path.dirname(os.path.realpath(__file__))),
                             "yaml", "variants.yaml")

ModelVariant = namedtuple("ModelVariant", ["name", "tracks", "features"])


def load_variants(yaml_file = VARIANTS_YAML):
  """Read the model variant list

  Returns:
    list of ModelVariant
  """
  variants = []
  for entry in read_yaml(yaml_file):
    if entry.get("tracks") not in ("automated", "manual") or \
       entry.get("features") not in ("all", "basic"):
      raise ConfigError("Invalid variant entry in %s: %s" % (yaml_file, entry))
    variants.append(ModelVariant(entry["variant"], entry["tracks"], entry["features"]))
  return variants


def variant_by_name(name, yaml_file = VARIANTS_YAML):
  for variant in load_variants(yaml_file):
    if variant.name == name:
      return variant
  raise ConfigError("Cannot find variant %s in %s" % (name, yaml_file))


class LogisticModel(object):
  """Trained weights with their feature schema

  scaler is None or a (mean, scale) pair applied to inputs before the
  linear term.
  """
  def __init__(self, weights, intercept, c_reg = DEFAULT_C_REG, feature_schema = None,
               threshold = DEFAULT_THRESHOLD, converged = True, scaler = None):
    weights = np.array(weights, dtype=np.float64).reshape(-1)
    if feature_schema is None:
      feature_schema = ["x%d" % i for i in range(len(weights))]
    if len(weights) != len(feature_schema):
      raise ShapeError("Model has %d weights for %d schema columns" %
                       (len(weights), len(feature_schema)))
    if not c_reg > 0:
      raise ConfigError("c_reg must be positive, got %s" % c_reg)
    if not (np.all(np.isfinite(weights)) and np.isfinite(intercept)):
      raise NumericError("Model parameters are not finite")
    weights.setflags(write=False)
    self.weights = weights
    self.intercept = float(intercept)
    self.c_reg = float(c_reg)
    self.feature_schema = list(feature_schema)
    self.threshold = float(threshold)
    self.converged = bool(converged)
    self.scaler = scaler

  def to_json(self):
    data = {"schema"    : self.feature_schema,
            "weights"   : [float(w) for w in self.weights],
            "intercept" : self.intercept,
            "c_reg"     : self.c_reg,
            "threshold" : self.threshold,
            "converged" : self.converged}
    if self.scaler is not None:
      data["scaler"] = {"mean"  : [float(v) for v in self.scaler[0]],
                        "scale" : [float(v) for v in self.scaler[1]]}
    return data

  @classmethod
  def from_json(cls, data):
    try:
      scaler = None
      if data.get("scaler"):
        scaler = (np.array(data["scaler"]["mean"], dtype=np.float64),
                  np.array(data["scaler"]["scale"], dtype=np.float64))
      return cls(data["weights"], data["intercept"], data["c_reg"], data["schema"],
                 data.get("threshold", DEFAULT_THRESHOLD), data.get("converged", True), scaler)
    except (KeyError, TypeError) as exc:
      raise FormatError("Malformed model JSON: missing %s" % exc)


def save_model(model, path):
  write_json(model.to_json(), path)
  logging.info("Model saved to : %s" % path)


def load_model(path):
  return LogisticModel.from_json(read_json(path))


def _signed(y):
  return np.where(np.asarray(y) > 0, 1.0, -1.0)


def objective(w, b, X, y, c_reg):
  """J(w, b) = 1/2 |w|^2 + C * sum log(1 + exp(-y~ (w.x + b)))"""
  margin = _signed(y) * (X @ w + b)
  return 0.5 * float(w @ w) + c_reg * float(np.sum(np.logaddexp(0.0, -margin)))


def gradient(w, b, X, y, c_reg):
  """Gradient of the objective, returned as (dJ/dw, dJ/db)"""
  ys = _signed(y)
  margin = ys * (X @ w + b)
  coef = -c_reg * ys * expit(-margin)
  return w + X.T @ coef, float(np.sum(coef))


def _hessian(w, b, X, c_reg):
  p = expit(X @ w + b)
  d = c_reg * p * (1.0 - p)
  Xa = np.hstack([X, np.ones((X.shape[0], 1))])
  H = Xa.T @ (Xa * d[:, None])
  H[:-1, :-1] += np.eye(X.shape[1])
  return H


def fit_scaler(X):
  """Column mean and standard deviation, zero-variance columns scaled by 1"""
  mean = X.mean(axis=0)
  scale = X.std(axis=0)
  scale[scale == 0] = 1.0
  return mean, scale


def train(X, y, c_reg = DEFAULT_C_REG, tol = 1e-8, max_iter = 1000, feature_schema = None,
          threshold = DEFAULT_THRESHOLD, standardize = False):
  """Minimize the L2-regularized logistic objective

  Newton directions with Armijo backtracking, starting from zero. The
  intercept is not penalized. Convergence is declared when the infinity
  norm of the gradient is at most tol.

  Args:
    X              : (n, d) finite feature matrix
    y              : n labels in {0, 1}
    c_reg          : weight of the data term
    tol            : gradient tolerance
    max_iter       : Newton iteration limit
    feature_schema : column names
    threshold      : decision threshold stored in the model
    standardize    : z-score columns with statistics of X

  Returns:
    LogisticModel, converged flag set False when tol was not reached
  """
  X = np.asarray(X, dtype=np.float64)
  y = np.asarray(y).reshape(-1)
  if X.ndim != 2 or X.shape[0] != len(y):
    raise ShapeError("Feature matrix %s does not match %d labels" % (X.shape, len(y)))
  if not np.all(np.isfinite(X)):
    raise NumericError("Feature matrix has non-finite values")
  if not c_reg > 0:
    raise ConfigError("c_reg must be positive, got %s" % c_reg)
  classes = set(np.unique(y).tolist())
  if not classes <= {0, 1}:
    raise DegenerateError("Labels must be 0 or 1, got %s" % sorted(classes))
  if len(classes) < 2:
    raise DegenerateError("Training labels contain a single class %s" % sorted(classes))
  scaler = None
  if standardize:
    scaler = fit_scaler(X)
    X = (X - scaler[0]) / scaler[1]

  n, d = X.shape
  w = np.zeros(d)
  b = 0.0
  J = objective(w, b, X, y, c_reg)
  converged = False
  for it in range(max_iter):
    gw, gb = gradient(w, b, X, y, c_reg)
    g = np.append(gw, gb)
    if np.max(np.abs(g)) <= tol:
      converged = True
      break
    H = _hessian(w, b, X, c_reg)
    try:
      step = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
      step = -np.linalg.lstsq(H, g, rcond=None)[0]
    slope = float(g @ step)
    if slope >= 0:
      step = -g
      slope = -float(g @ g)
    t = 1.0
    while True:
      w_new = w + t * step[:-1]
      b_new = b + t * step[-1]
      J_new = objective(w_new, b_new, X, y, c_reg)
      if J_new <= J + 1e-4 * t * slope or t < 1e-12:
        break
      # Close to the optimum J only moves by rounding; a full step that
      # shrinks the gradient is still progress
      if t == 1.0 and J_new - J <= 1e-12 * max(1.0, abs(J)):
        gw_new, gb_new = gradient(w_new, b_new, X, y, c_reg)
        if max(np.max(np.abs(gw_new)), abs(gb_new)) < np.max(np.abs(g)):
          J_new = min(J_new, J)
          break
      t *= 0.5
    if J_new > J:
      logging.warning("Line search stalled at iteration %d, |g|inf=%.3e" % (it, np.max(np.abs(g))))
      break
    w, b, J = w_new, b_new, J_new
  else:
    gw, gb = gradient(w, b, X, y, c_reg)
    converged = max(np.max(np.abs(gw)), abs(gb)) <= tol
  if not converged:
    logging.warning("Logistic regression did not reach tol %g within %d iterations" %
                    (tol, max_iter))
  logging.debug("Trained logistic model on %d rows, J=%.6f" % (n, J))
  return LogisticModel(w, b, c_reg, feature_schema, threshold, converged, scaler)


def decision_function(model, X):
  """Linear term w.x + b for one vector or a matrix of rows"""
  X = np.asarray(X, dtype=np.float64)
  if X.shape[-1] != len(model.weights):
    raise ShapeError("Input has %d features, model schema has %d" %
                     (X.shape[-1], len(model.weights)))
  if model.scaler is not None:
    X = (X - model.scaler[0]) / model.scaler[1]
  return X @ model.weights + model.intercept


def predict_proba(model, x):
  """P(class 1 | x); expit saturates to 0 or 1 without overflow"""
  z = decision_function(model, x)
  if np.ndim(z) == 0:
    return float(expit(z))
  return expit(z)


def predict_label(model, x):
  """1 when the probability reaches the threshold, ties included"""
  p = predict_proba(model, x)
  if np.ndim(p) == 0:
    return int(p >= model.threshold)
  return (p >= model.threshold).astype(int)
