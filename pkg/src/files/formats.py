# Module: formats.py
# Purpose: JSON file formats for channels, density matrices and generators

import json
import logging
import os
from typing import Any, Dict, Optional, Sequence

import numpy as np

from channels.covariant import CovariantChannel, TransferBlock
from lattice.box import BoxLattice, flat_index, unflatten
from lindblad.generator import LindbladGenerator, LindbladTerm
from states.density import DensityMatrix
from utils.errors import ValidationError
from utils.helpers import write_json

logger = logging.getLogger(__name__)

CHANNEL_FORMAT = "covariant-channel"
STATE_FORMAT = "density-matrix"
GENERATOR_FORMAT = "lindblad-generator"


def _read(path: str, expected: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"Cannot read {path}: {e}")
    if not isinstance(data, dict) or data.get("format") != expected:
        raise ValidationError(f"{path} is not a '{expected}' file")
    if "lattice" not in data:
        raise ValidationError(f"{path} has no lattice header")
    return data


def _entries(lat: BoxLattice, values: np.ndarray, sources: Optional[Sequence[int]] = None) -> list:
    """[[n-vector, re, im], ...] for the non-zero entries (or the given sources)"""
    indices = sources if sources is not None else np.nonzero(values)[0]
    return [[list(unflatten(lat, i)), float(values[i].real), float(values[i].imag)] for i in indices]


def _values(lat: BoxLattice, entries: list) -> np.ndarray:
    out = np.zeros(lat.size, dtype=complex)
    for n, re, im in entries:
        out[flat_index(lat, n)] = complex(float(re), float(im))
    return out


def channel_to_dict(ch: CovariantChannel, sources: Optional[Sequence[Sequence[int]]] = None) -> Dict[str, Any]:
    lat = ch.lattice
    flat = None if sources is None else [flat_index(lat, n) for n in sources]
    return {
        "format": CHANNEL_FORMAT,
        "lattice": lat.to_dict(),
        "blocks": [{"kraus_id": b.kraus_id, "q": list(b.q), "gains": _entries(lat, b.gains, flat)}
                   for b in ch.blocks],
    }


def save_channel(ch: CovariantChannel, path: str) -> str:
    return write_json(path, channel_to_dict(ch))


def load_channel(path: str, validate: bool = True) -> CovariantChannel:
    """With validate=False an incomplete channel loads so it can be verified"""
    data = _read(path, CHANNEL_FORMAT)
    lat = BoxLattice.from_dict(data["lattice"])
    try:
        blocks = [TransferBlock.build(lat, b["kraus_id"], b["q"], _values(lat, b["gains"]))
                  for b in data.get("blocks", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"Malformed block in {path}: {e}")
    logger.info(f"Loaded channel with {len(blocks)} blocks from {path}")
    return CovariantChannel(lat, blocks, validate=validate, prune=validate)


def save_golden_table(ch: CovariantChannel, n: Sequence[int], path: str) -> str:
    """Channel file restricted to one source n, gains = sqrt(P)"""
    transfers, probs = ch.transfer_table()
    i = flat_index(ch.lattice, n)
    blocks = [TransferBlock.build(ch.lattice, 0, q, np.where(np.arange(ch.lattice.size) == i,
                                                               np.sqrt(probs[j, i]), 0.0))
              for j, q in enumerate(transfers) if probs[j, i] > 0]
    golden = CovariantChannel(ch.lattice, blocks, validate=False, prune=False)
    return write_json(path, channel_to_dict(golden, sources=[n]))


def load_golden_table(path: str) -> Dict[tuple, float]:
    """{transfer q: P(q, n)} for the single recorded source"""
    data = _read(path, CHANNEL_FORMAT)
    table = {}
    for block in data["blocks"]:
        for _, re, im in block["gains"]:
            table[tuple(int(v) for v in block["q"])] = float(re) ** 2 + float(im) ** 2
    return table


def state_to_dict(rho: DensityMatrix) -> Dict[str, Any]:
    lat = rho.lattice
    rows, cols = np.nonzero(rho.matrix)
    entries = [[list(unflatten(lat, r)), list(unflatten(lat, c)),
                float(rho.matrix[r, c].real), float(rho.matrix[r, c].imag)] for r, c in zip(rows, cols)]
    return {"format": STATE_FORMAT, "lattice": lat.to_dict(), "entries": entries}


def save_state(rho: DensityMatrix, path: str) -> str:
    return write_json(path, state_to_dict(rho))


def load_state(path: str, validate: bool = True) -> DensityMatrix:
    data = _read(path, STATE_FORMAT)
    lat = BoxLattice.from_dict(data["lattice"])
    matrix = np.zeros((lat.size, lat.size), dtype=complex)
    for n, m, re, im in data.get("entries", []):
        matrix[flat_index(lat, n), flat_index(lat, m)] = complex(float(re), float(im))
    return DensityMatrix(lat, matrix, validate=validate)


def save_generator(gen: LindbladGenerator, path: str) -> str:
    lat = gen.lattice
    data: Dict[str, Any] = {
        "format": GENERATOR_FORMAT,
        "lattice": lat.to_dict(),
        "terms": [{"label": t.label, "q": list(t.q), "values": _entries(lat, t.values)} for t in gen.terms],
    }
    if gen.hamiltonian is not None:
        data["hamiltonian"] = state_to_dict(DensityMatrix(lat, gen.hamiltonian, validate=False))["entries"]
    return write_json(path, data)


def load_generator(path: str) -> LindbladGenerator:
    data = _read(path, GENERATOR_FORMAT)
    lat = BoxLattice.from_dict(data["lattice"])
    try:
        terms = [LindbladTerm.build(lat, t.get("label", ""), t["q"], _values(lat, t["values"]))
                 for t in data.get("terms", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"Malformed term in {path}: {e}")

    hamiltonian = None
    if data.get("hamiltonian") is not None:
        hamiltonian = np.zeros((lat.size, lat.size), dtype=complex)
        for n, m, re, im in data["hamiltonian"]:
            hamiltonian[flat_index(lat, n), flat_index(lat, m)] = complex(float(re), float(im))
    return LindbladGenerator(lat, terms, hamiltonian)


def resolve_path(path: str, base_dir: str) -> str:
    """Relative paths in configs are taken relative to the config file"""
    if os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))
