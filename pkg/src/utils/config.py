# Module: config.py
# Purpose: Application settings loaded from config/settings.ini

import configparser
import logging
import os
from dataclasses import dataclass
from typing import Optional

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = os.path.abspath(
    os.path.join(os.path.dirname(__file__), '..', '..', 'config', 'settings.ini')
)


@dataclass(frozen=True)
class AppSettings:
    output_dir: str = "data/results"
    log_dir: str = "logs"
    history_db: str = "data/history.db"
    tolerance: float = 1e-9
    seed: int = 0
    displacements: int = 16
    random_states: int = 20
    trace_distance_tol: float = 0.05


def load_settings(path: Optional[str] = None) -> AppSettings:
    """
    Read settings.ini; missing file or keys fall back to the built-in defaults
    """
    path = path or DEFAULT_SETTINGS_PATH
    defaults = AppSettings()
    parser = configparser.ConfigParser()

    if not os.path.exists(path):
        logger.warning(f"Settings file not found, using defaults: {path}")
        return defaults

    try:
        parser.read(path, encoding='utf-8')
        return AppSettings(
            output_dir=parser.get("Paths", "output_dir", fallback=defaults.output_dir),
            log_dir=parser.get("Paths", "log_dir", fallback=defaults.log_dir),
            history_db=parser.get("Paths", "history_db", fallback=defaults.history_db),
            tolerance=parser.getfloat("Defaults", "tolerance", fallback=defaults.tolerance),
            seed=parser.getint("Defaults", "seed", fallback=defaults.seed),
            displacements=parser.getint("Defaults", "displacements", fallback=defaults.displacements),
            random_states=parser.getint("Defaults", "random_states", fallback=defaults.random_states),
            trace_distance_tol=parser.getfloat(
                "Defaults", "trace_distance_tol", fallback=defaults.trace_distance_tol
            ),
        )
    except (configparser.Error, ValueError) as e:
        logger.warning(f"Invalid settings file {path}, using defaults: {e}")
        return defaults
