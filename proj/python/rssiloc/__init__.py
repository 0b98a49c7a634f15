"""RSSI fingerprint localisation: segmentation, models and evaluation."""

import csv
import io
import json

from ._rssiloc import (
    MAX_LABEL_GAP_MS,
    RSSI_FLOOR_DBM,
    Error,
    Model,
    aggregate_window,
    build_feature_frame,
    interpolate_label,
    parse_epoch_ms,
    px_to_mm,
    score_estimates,
    sub_windows,
    write_synthetic,
)
from ._rssiloc import evaluate as _evaluate
from ._rssiloc import floorplan_json as _floorplan_json


def load_floorplan(path):
    return json.loads(_floorplan_json(str(path)))


def evaluate(flat, **kwargs):
    """Runs an experiment matrix; one dict per report row."""
    text = _evaluate(str(flat), **kwargs)
    return list(csv.DictReader(io.StringIO(text)))


__all__ = [
    "MAX_LABEL_GAP_MS",
    "RSSI_FLOOR_DBM",
    "Error",
    "Model",
    "aggregate_window",
    "build_feature_frame",
    "evaluate",
    "interpolate_label",
    "load_floorplan",
    "parse_epoch_ms",
    "px_to_mm",
    "score_estimates",
    "sub_windows",
    "write_synthetic",
]
