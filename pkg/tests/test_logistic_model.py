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

import logging
import math

import numpy as np
import pytest

from scripts.lib import ConfigError, DegenerateError, ShapeError
from scripts.logistic_model import (LogisticModel, gradient, load_model, load_variants,
                                    objective, predict_label, predict_proba, save_model, train,
                                    variant_by_name)


def _problem(seed, n = 20, d = 5):
  rng = np.random.default_rng(seed)
  X = rng.normal(size=(n, d))
  w_true = rng.normal(size=d)
  y = (X @ w_true + rng.normal(scale=1.0, size=n) > 0).astype(int)
  y[0], y[1] = 0, 1
  return X, y


def _data_loss(model, X, y):
  ys = np.where(y > 0, 1.0, -1.0)
  return float(np.sum(np.logaddexp(0.0, -ys * (X @ model.weights + model.intercept))))


def test_gradient_matches_finite_differences():
  X, y = _problem(0)
  rng = np.random.default_rng(1)
  h = 1e-5
  for _ in range(10):
    w = rng.normal(size=X.shape[1])
    b = float(rng.normal())
    gw, gb = gradient(w, b, X, y, 200.0)
    analytic = np.append(gw, gb)
    numeric = np.zeros(len(analytic))
    for i in range(len(analytic)):
      dw = np.zeros(len(w))
      db = 0.0
      if i < len(w):
        dw[i] = h
      else:
        db = h
      numeric[i] = (objective(w + dw, b + db, X, y, 200.0) -
                    objective(w - dw, b - db, X, y, 200.0)) / (2 * h)
    assert np.linalg.norm(numeric - analytic) / np.linalg.norm(analytic) < 1e-5


def test_separable_problem():
  X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
  y = np.array([0, 0, 1, 1])
  weak = train(X, y, c_reg=1.0)
  strong = train(X, y, c_reg=1000.0)
  assert np.array_equal(predict_label(strong, X), y)
  assert abs(strong.weights[0]) > abs(weak.weights[0])
  assert strong.converged


def test_symmetric_data_has_zero_intercept():
  rng = np.random.default_rng(2)
  pos = rng.normal(size=(30, 3))
  X = np.vstack([pos, -pos])
  y = np.array([1] * 30 + [0] * 30)
  model = train(X, y)
  assert model.intercept == pytest.approx(0.0, abs=1e-6)


def test_optimum_beats_perturbations():
  X, y = _problem(3)
  model = train(X, y)
  best = objective(model.weights, model.intercept, X, y, model.c_reg)
  rng = np.random.default_rng(4)
  for _ in range(100):
    scale = 10.0 ** rng.uniform(-4, 0)
    w = model.weights + scale * rng.normal(size=len(model.weights))
    b = model.intercept + scale * rng.normal()
    assert best <= objective(w, b, X, y, model.c_reg)


def test_doubling_c_reduces_data_loss():
  X, y = _problem(5, n=40, d=3)
  loose = train(X, y, c_reg=1.0)
  tight = train(X, y, c_reg=2.0)
  assert _data_loss(tight, X, y) <= _data_loss(loose, X, y) + 1e-9


def test_training_is_deterministic():
  X, y = _problem(6)
  first = train(X, y)
  second = train(X, y)
  assert np.array_equal(first.weights, second.weights)
  assert first.intercept == second.intercept


def test_single_class_rejected():
  with pytest.raises(DegenerateError):
    train(np.zeros((4, 2)), [1, 1, 1, 1])


def test_bad_shapes_rejected():
  with pytest.raises(ShapeError):
    train(np.zeros((4, 2)), [0, 1, 0])
  with pytest.raises(ConfigError):
    train(np.zeros((2, 1)), [0, 1], c_reg=0.0)


def test_iteration_limit_flags_model(caplog):
  X, y = _problem(7)
  with caplog.at_level(logging.WARNING):
    model = train(X, y, max_iter=1, tol=1e-14)
  assert not model.converged
  assert "did not reach tol" in caplog.text


def test_standardized_training():
  X, y = _problem(8)
  X = X * np.array([1.0, 100.0, 1e-3, 5.0, 1.0]) + 7.0
  model = train(X, y, standardize=True)
  assert model.scaler is not None
  probs = predict_proba(model, X)
  assert probs.shape == (len(y),)
  assert np.all((probs >= 0) & (probs <= 1))


def test_zero_model_gives_half():
  model = LogisticModel([0.0, 0.0], 0.0)
  assert predict_proba(model, [3.0, -8.0]) == 0.5
  assert predict_label(model, [3.0, -8.0]) == 1


def test_probability_examples():
  assert predict_proba(LogisticModel([1.0], 0.0), [math.log(3.0)]) == pytest.approx(0.75)
  assert predict_proba(LogisticModel([800.0], 0.0), [1.0]) == 1.0
  assert predict_proba(LogisticModel([800.0], 0.0), [-1.0]) == 0.0


@pytest.mark.parametrize("p,label", [(0.49, 0), (0.51, 1)])
def test_label_threshold(p, label):
  model = LogisticModel([0.0], math.log(p / (1.0 - p)))
  assert predict_label(model, [1.0]) == label


def test_negated_parameters_are_complementary():
  rng = np.random.default_rng(9)
  w = rng.normal(size=4)
  model = LogisticModel(w, 0.3)
  negated = LogisticModel(-w, -0.3)
  X = rng.normal(size=(25, 4))
  assert np.allclose(predict_proba(model, X) + predict_proba(negated, X), 1.0)


def test_schema_mismatch():
  with pytest.raises(ShapeError):
    predict_proba(LogisticModel([1.0, 2.0], 0.0), [1.0])


def test_model_json_round_trip(tmp_path):
  X, y = _problem(10)
  model = train(X, y, feature_schema=["a", "b", "c", "d", "e"], standardize=True)
  path = str(tmp_path / "model.json")
  save_model(model, path)
  loaded = load_model(path)
  assert np.array_equal(loaded.weights, model.weights)
  assert loaded.intercept == model.intercept
  assert loaded.feature_schema == ["a", "b", "c", "d", "e"]
  assert np.array_equal(predict_proba(loaded, X), predict_proba(model, X))


def test_four_variants():
  names = [v.name for v in load_variants()]
  assert names == ["auto-all", "auto-basic", "manual-all", "manual-basic"]
  variant = variant_by_name("auto-basic")
  assert (variant.tracks, variant.features) == ("automated", "basic")
  with pytest.raises(ConfigError):
    variant_by_name("auto-none")


def test_invalid_variant_file(tmp_path):
  path = tmp_path / "variants.yaml"
  path.write_text("- variant: odd\n  tracks: drawn\n  features: all\n")
  with pytest.raises(ConfigError):
    load_variants(str(path))
