# Module: manager.py
# Purpose: Experiment config validation and construction of the objects it describes

import hashlib
import json
import os
import logging
from typing import Dict, List, Any, Optional, Tuple

import numpy as np

from channels.covariant import CovariantChannel
from channels.families import (build_boost, build_boost_family, build_free_evolution, build_grw,
                               build_identity, build_momentum_diagonal)
from channels.sampling import random_covariant, random_momentum_diagonal
from files.formats import load_channel, load_generator, resolve_path
from lattice.box import BoxLattice
from lindblad.generator import (LindbladGenerator, csl_like, free_hamiltonian,
                                momentum_diagonal_generator, zero_generator)
from states.density import DensityMatrix, PureState, from_pure, mix, plane_wave, superposition
from utils.errors import ConfigError
from utils.helpers import make_rng

SCHEMA: Dict[str, set] = {
    "lattice": {"dim", "n_max", "box_length", "hbar"},
    "channel": {"kind", "a", "t", "mass", "r_c", "strength", "c", "phi", "n_kraus", "gamma", "mode",
                "out_of_window", "phases", "max_transfer", "symmetric", "path"},
    "lindblad": {"kind", "r_c", "rate", "rates", "phases", "n_kraus", "path"},
    "hamiltonian": {"kind", "mass"},
    "state": {"plane_wave", "superposition", "mixture"},
    "ensemble": {"mixture"},
    "run": {"n_steps", "dt", "t_final", "seed", "tolerance", "n_trajectories", "n_momentum_diagonal",
            "n_diffusive", "n_kraus", "max_transfer", "displacements", "trace_distance_tol",
            "record_outcomes", "equivalent_ensemble", "path"},
    "output": {"dir"},
}

CHANNEL_KINDS = ("identity", "boost", "free", "grw", "momentum_diagonal", "boost_family", "random", "file")
LINDBLAD_KINDS = ("zero", "csl_like", "momentum_diagonal", "file")

# Blocks each command cannot run without
REQUIRED_BLOCKS = {
    "verify-channel": ("lattice", "channel"),
    "diffuse": ("lattice", "channel", "state"),
    "theorem-scan": ("lattice",),
    "lindblad-evolve": ("lattice", "lindblad", "state"),
    "unravel": ("lattice", "channel"),
}

MAX_CONFIG_SIZE = 1024 * 1024


class ExperimentFileManager:
    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def validate_config_file(self, file_path: str, command: Optional[str] = None) -> Tuple[bool, str, Optional[Dict]]:
        """
        Validate an experiment config file
        Returns: (is_valid, error_message, parsed_data)
        """
        try:
            # Check file exists and size
            if not os.path.exists(file_path):
                return False, "File does not exist", None

            file_size = os.path.getsize(file_path)
            if file_size > MAX_CONFIG_SIZE:
                return False, "File size exceeds 1MB limit", None

            if file_size == 0:
                return False, "File is empty", None

            # Parse JSON
            with open(file_path, 'r', encoding='utf-8') as f:
                data = json.load(f)

            ok, message = self.validate_config(data, command)
            if not ok:
                return False, message, None

            self.logger.info(f"Config validation successful: {file_path}")
            return True, "", data

        except json.JSONDecodeError as e:
            return False, f"Invalid JSON format: {e}", None
        except Exception as e:
            return False, f"Config validation error: {e}", None

    def validate_config(self, data: Any, command: Optional[str] = None) -> Tuple[bool, str]:
        """Structural checks: known keys only, required blocks present, kinds recognised"""
        if not isinstance(data, dict):
            return False, "Root element must be an object"

        for key, value in data.items():
            if key not in SCHEMA:
                return False, f"Unknown top-level key '{key}'"
            if not isinstance(value, dict):
                return False, f"'{key}' must be an object"
            unknown = sorted(set(value) - SCHEMA[key])
            if unknown:
                return False, f"Unknown key(s) in '{key}': {', '.join(unknown)}"

        if command is not None:
            for block in REQUIRED_BLOCKS.get(command, ()):
                if block not in data:
                    return False, f"Command '{command}' needs a '{block}' block"

        if "channel" in data and data["channel"].get("kind") not in CHANNEL_KINDS:
            return False, f"channel.kind must be one of {', '.join(CHANNEL_KINDS)}"
        if "lindblad" in data and data["lindblad"].get("kind") not in LINDBLAD_KINDS:
            return False, f"lindblad.kind must be one of {', '.join(LINDBLAD_KINDS)}"
        if "hamiltonian" in data and data["hamiltonian"].get("kind") != "free":
            return False, "hamiltonian.kind must be 'free'"

        if "state" in data:
            present = [k for k in ("plane_wave", "superposition", "mixture") if k in data["state"]]
            if len(present) != 1:
                return False, "state must hold exactly one of plane_wave, superposition, mixture"
        if "ensemble" in data and "mixture" not in data["ensemble"]:
            return False, "ensemble needs a 'mixture' list"
        return True, ""

    def config_digest(self, file_path: str) -> str:
        """SHA-256 of the raw config bytes"""
        with open(file_path, 'rb') as f:
            return hashlib.sha256(f.read()).hexdigest()


def _require(block: Dict[str, Any], key: str, where: str) -> Any:
    if key not in block:
        raise ConfigError(f"{where} needs '{key}'")
    return block[key]


def build_lattice(config: Dict[str, Any]) -> BoxLattice:
    block = config["lattice"]
    return BoxLattice(dim=int(_require(block, "dim", "lattice")),
                      n_max=int(_require(block, "n_max", "lattice")),
                      box_length=float(_require(block, "box_length", "lattice")),
                      hbar=float(block.get("hbar", 1.0)))


def build_channel(config: Dict[str, Any], lat: BoxLattice, base_dir: str = ".", seed: int = 0) -> CovariantChannel:
    """Channel described by the 'channel' block; files load without completeness validation"""
    block = config["channel"]
    kind = block["kind"]
    where = f"channel '{kind}'"

    if kind == "identity":
        return build_identity(lat)
    if kind == "boost":
        return build_boost(lat, _require(block, "a", where))
    if kind == "free":
        return build_free_evolution(lat, float(_require(block, "t", where)), float(_require(block, "mass", where)))
    if kind == "grw":
        return build_grw(lat, float(_require(block, "r_c", where)), float(block.get("strength", 1.0)))
    if kind == "momentum_diagonal":
        if "c" in block:
            return build_momentum_diagonal(lat, np.asarray(block["c"], dtype=float),
                                           None if "phi" not in block else np.asarray(block["phi"], dtype=float))
        return random_momentum_diagonal(lat, int(_require(block, "n_kraus", where)), make_rng(seed, 4))
    if kind == "boost_family":
        phases = block.get("phases")
        return build_boost_family(lat, _require(block, "gamma", where), block.get("mode", "constant"),
                                  block.get("out_of_window", "reject"),
                                  None if phases is None else np.asarray(phases, dtype=float))
    if kind == "random":
        return random_covariant(lat, int(block.get("n_kraus", 2)), int(block.get("max_transfer", 1)),
                                make_rng(seed, 5), symmetric=bool(block.get("symmetric", False)))
    if kind == "file":
        ch = load_channel(resolve_path(_require(block, "path", where), base_dir), validate=False)
        if ch.lattice != lat:
            raise ConfigError("Channel file lattice differs from the config lattice")
        return ch
    raise ConfigError(f"Unknown channel kind '{kind}'")


def build_generator(config: Dict[str, Any], lat: BoxLattice, base_dir: str = ".", seed: int = 0) -> LindbladGenerator:
    block = config["lindblad"]
    kind = block["kind"]
    where = f"lindblad '{kind}'"

    hamiltonian = None
    if "hamiltonian" in config:
        hamiltonian = free_hamiltonian(lat, float(_require(config["hamiltonian"], "mass", "hamiltonian")))

    if kind == "zero":
        gen = zero_generator(lat)
        return gen if hamiltonian is None else LindbladGenerator(lat, gen.terms, hamiltonian)
    if kind == "csl_like":
        return csl_like(lat, float(_require(block, "r_c", where)), float(_require(block, "rate", where)),
                        hamiltonian)
    if kind == "momentum_diagonal":
        if "rates" in block:
            rates = np.asarray(block["rates"], dtype=float)
            phases = None if "phases" not in block else np.asarray(block["phases"], dtype=float)
        else:
            rng = make_rng(seed, 6)
            n_kraus = int(block.get("n_kraus", 2))
            rates = rng.uniform(0.0, 1.0, size=(n_kraus, lat.size)) * float(block.get("rate", 1.0))
            phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_kraus, lat.size))
        return momentum_diagonal_generator(lat, rates, phases, hamiltonian)
    if kind == "file":
        gen = load_generator(resolve_path(_require(block, "path", where), base_dir))
        if gen.lattice != lat:
            raise ConfigError("Generator file lattice differs from the config lattice")
        return gen if hamiltonian is None else LindbladGenerator(lat, gen.terms, hamiltonian)
    raise ConfigError(f"Unknown lindblad kind '{kind}'")


def _pure_from_block(block: Dict[str, Any], lat: BoxLattice) -> PureState:
    if "plane_wave" in block:
        return plane_wave(lat, block["plane_wave"])
    if "superposition" in block:
        terms = [(complex(float(t.get("amp_re", 0.0)), float(t.get("amp_im", 0.0))), t["n"])
                 for t in block["superposition"]]
        return superposition(lat, terms)
    raise ConfigError("Mixture members must be plane_wave or superposition states")


def build_ensemble(block: Dict[str, Any], lat: BoxLattice) -> List[Tuple[float, PureState]]:
    """Weighted pure states of a state block (a single member unless it is a mixture)"""
    if "mixture" not in block:
        return [(1.0, _pure_from_block(block, lat))]
    members = []
    for item in block["mixture"]:
        if not isinstance(item, dict) or "weight" not in item or "state" not in item:
            raise ConfigError("Mixture items need 'weight' and 'state'")
        members.append((float(item["weight"]), _pure_from_block(item["state"], lat)))
    return members


def build_state(block: Dict[str, Any], lat: BoxLattice) -> DensityMatrix:
    members = build_ensemble(block, lat)
    if len(members) == 1 and "mixture" not in block:
        return from_pure(members[0][1])
    return mix(members)


def config_base_dir(file_path: str) -> str:
    return os.path.dirname(os.path.abspath(file_path))
