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

Shared helpers: logging, config files, return codes, errors, seeds, workers
"""

import hashlib
import json
import logging
import os
import shutil

import yaml

from concurrent.futures import ProcessPoolExecutor

try:
  import tomllib
except ImportError:
  import tomli as tomllib

RET_SUCCESS = 0
RET_CONFIG  = 2
RET_DATA    = 3
RET_NUMERIC = 4
RET_CTRL_C  = 130

# Geometry shared by every video-patch of the challenge
N_FRAMES   = 20
PATCH_SIZE = 50
MID_FRAME  = 10
PATCH_CENTER = (25.0, 25.0)


class CbvccError(Exception):
  """Base class of all pipeline errors, carries the process return code"""
  ret_code = RET_DATA

  def to_json(self):
    return json.dumps({"error"    : self.__class__.__name__,
                       "message"  : str(self),
                       "ret_code" : self.ret_code}, sort_keys=True)


class ConfigError(CbvccError):
  ret_code = RET_CONFIG


class DataError(CbvccError):
  ret_code = RET_DATA


class FormatError(DataError):
  pass


class ShapeError(DataError):
  pass


class DuplicateRowError(DataError):
  pass


class RangeError(DataError):
  pass


class TooShortError(DataError):
  pass


class DegenerateError(DataError):
  pass


class InfeasibleError(DataError):
  pass


class NumericError(CbvccError):
  ret_code = RET_NUMERIC


def setup_logging(verbose):
  """Setup the root logger.

  Args:
    verbose: Verbose logging
  """
  if verbose:
    logging.basicConfig(format="%(asctime)s %(filename)s:%(lineno)-5s %(levelname)-8s %(message)s",
                        datefmt='%a, %d %b %Y %H:%M:%S',
                        level=logging.DEBUG)
  else:
    logging.basicConfig(format="%(asctime)s %(levelname)-8s %(message)s",
                        datefmt='%a, %d %b %Y %H:%M:%S',
                        level=logging.INFO)


def read_yaml(yaml_file):
  """ Read YAML file to a dictionary

  Args:
    yaml_file : YAML file

  Returns:
    yaml_data : data read from YAML in dictionary format
  """
  if not os.path.isfile(yaml_file):
    raise ConfigError("Cannot find YAML file %s" % yaml_file)
  with open(yaml_file, "r") as f:
    try:
      yaml_data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
      raise ConfigError("Malformed YAML file %s: %s" % (yaml_file, exc))
  return yaml_data


def read_toml(toml_file):
  """Read a TOML file to a dictionary"""
  if not os.path.isfile(toml_file):
    raise ConfigError("Cannot find TOML file %s" % toml_file)
  with open(toml_file, "rb") as f:
    try:
      return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
      raise ConfigError("Malformed TOML file %s: %s" % (toml_file, exc))


def read_config(config_file):
  """Read a configuration file, TOML for a .toml suffix and YAML otherwise"""
  if os.path.splitext(config_file)[1].lower() == ".toml":
    return read_toml(config_file)
  return read_yaml(config_file)


def write_yaml(yaml_data, yaml_file):
  """Dump a dictionary to a YAML file with stable key order"""
  with open(yaml_file, "w") as outfile:
    yaml.dump(yaml_data, outfile, default_flow_style=False, sort_keys=True)


def write_json(data, json_file):
  """Dump data to a JSON file, keys sorted so reruns are byte-identical"""
  with open(json_file, "w") as outfile:
    json.dump(data, outfile, indent=2, sort_keys=True)
    outfile.write("\n")


def read_json(json_file):
  """Read a JSON file"""
  try:
    with open(json_file, "r") as f:
      return json.load(f)
  except OSError as exc:
    raise ConfigError("Cannot read %s: %s" % (json_file, exc))
  except ValueError as exc:
    raise FormatError("Malformed JSON file %s: %s" % (json_file, exc))


def derive_seed(seed, *keys):
  """Derive an independent 31-bit seed from the run seed and a key path

  Args:
    seed : run seed given by --seed
    keys : stream keys, e.g. patch id and frame index

  Returns:
    derived seed
  """
  text = "/".join([str(seed)] + [str(k) for k in keys])
  digest = hashlib.sha256(text.encode("utf-8")).digest()
  return int.from_bytes(digest[:4], "big") & 0x7fffffff


def create_output(output, noclean = True):
  """ Create output directory

  Args:
    output : Name of specified output directory
    noclean: Do not clean the output of the previous runs

  Returns:
    Output directory
  """
  if output is None:
    raise ConfigError("Output directory is not specified")
  if noclean is False and os.path.isdir(output):
    shutil.rmtree(output)
  logging.info("Creating output directory: %s" % output)
  os.makedirs(output, exist_ok=True)
  return output


def run_parallel(func, items, jobs = 1):
  """Apply func to every item, in a process pool when jobs > 1

  Results come back in input order whatever the pool schedules, so output
  files do not depend on the worker count.

  Args:
    func  : picklable top-level function
    items : list of arguments, one call per item
    jobs  : worker count

  Returns:
    list of results
  """
  items = list(items)
  if jobs is None or jobs <= 1 or len(items) <= 1:
    return [func(item) for item in items]
  logging.debug("Running %d tasks on %d workers" % (len(items), jobs))
  with ProcessPoolExecutor(max_workers=jobs) as pool:
    return list(pool.map(func, items))


def format_float(val):
  """Round-trip exact text of a float, empty for None"""
  if val is None:
    return ""
  return repr(float(val))


def parse_optional_float(text):
  """Parse a CSV cell, an empty cell meaning None"""
  text = text.strip() if text is not None else ""
  if text == "":
    return None
  return float(text)
