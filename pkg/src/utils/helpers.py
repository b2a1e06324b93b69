# Module: helpers.py
# Purpose: Output formatting and deterministic random streams

import csv
import json
import os
from typing import Any, Iterable, List, Sequence

import numpy as np

FLOAT_DIGITS = 17


def format_float(value: float) -> str:
    """Lossless text form of a float (17 significant digits)"""
    return format(float(value), f".{FLOAT_DIGITS}g")


def _format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Write rows with a fixed float format; returns the path"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])
    return path


def read_csv(path: str) -> List[dict]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays nested in dicts and lists to plain JSON types"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_json(path: str, data: Any) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Counter-based generator (Philox) keyed by (seed, *keys).
    The same key always yields the same stream, independent of call order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))
