"""
writers for the CSV and JSON outputs. Every file carries the resolved run
configuration on a `# config=` line (CSV) or under a "config" key (JSON)
so that it can be replayed.
"""

__copyright__ = "Copyright (C) 2026 switchq developers"

import csv
import dataclasses
import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from switchq.constants import CSV_FLOAT_FORMAT
from switchq.exceptions import InvalidOverride

logger = logging.getLogger(__name__)

CONFIG_PREFIX = "# config="


def to_jsonable(obj):
    """numpy scalars and arrays, dataclasses and tuples as plain JSON"""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def config_dict(config) -> Optional[dict]:
    if config is None:
        return None
    if hasattr(config, "to_dict"):
        return config.to_dict()
    return dict(config)


def config_line(config) -> str:
    return CONFIG_PREFIX + json.dumps(
        to_jsonable(config_dict(config)), sort_keys=True
    )


def format_value(value, integer: bool = False) -> str:
    if integer:
        return str(int(value))
    return CSV_FLOAT_FORMAT.format(float(value))


def write_csv(
    path: Union[str, Path],
    columns: Sequence[str],
    rows: Iterable,
    comments: Sequence[str] = (),
    config=None,
    integer_columns: int = 0,
) -> Path:
    """
    write numeric rows with 17 significant digits
    @param comments: header lines written as `# <text>` before the config
    @param integer_columns: number of leading columns printed as integers
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in comments:
            f.write(f"# {line}\n")
        if config is not None:
            f.write(config_line(config) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [
                    value
                    if isinstance(value, str)
                    else format_value(value, i < integer_columns)
                    for i, value in enumerate(row)
                ]
            )
    logger.info("wrote %s", path)
    return path


def write_json(path: Union[str, Path], payload: dict, config=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(to_jsonable(payload))
    if config is not None:
        doc["config"] = to_jsonable(config_dict(config))
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def read_config(path: Union[str, Path]) -> dict:
    """the embedded configuration of a file written by this module"""
    path = Path(path)
    if not path.exists():
        raise InvalidOverride(str(path), "replay file does not exist")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            raise InvalidOverride(str(path), "replay file is not valid JSON")
        if isinstance(doc, dict) and isinstance(doc.get("config"), dict):
            return doc["config"]
    else:
        for line in text.splitlines():
            if line.startswith(CONFIG_PREFIX):
                return json.loads(line[len(CONFIG_PREFIX) :])
            if not line.startswith("#"):
                break
    raise InvalidOverride(str(path), "no embedded config found")
