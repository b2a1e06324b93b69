# Module: interface.py
# Purpose: Config-driven experiment runner behind the command line

import json
import logging
import os
import time
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from channels.covariant import (CovariantChannel, ancilla_min_eigenvalue, apply, covariance_check,
                                uniform_displacements)
from channels.sampling import random_covariant, random_momentum_diagonal
from diagnostics.classify import (ChannelClass, classify_channel, delta_tolerance, probe_reports,
                                  probe_suite)
from diagnostics.diffusion import bulk_transfer_variance, diffusion_report, transfer_sums
from files.formats import state_to_dict
from files.manager import (ExperimentFileManager, build_channel, build_ensemble, build_generator,
                           build_lattice, build_state, config_base_dir)
from lindblad.evolve import evolve, fit_second_moment_slope
from lindblad.generator import moment_rates, zero_diffusion_reduce
from states.density import mix, momentum_moments, trace_distance
from states.sampling import equivalent_ensemble, random_density
from storage.database import RunDatabase
from unraveling.trajectories import (TrajectoryConfig, ensemble_average, equivalence_check,
                                     exact_evolution)
from utils.config import AppSettings, load_settings
from utils.errors import (CollapseLabError, ConfigError, DegenerateSamplingError, InvariantError,
                          LatticeRangeError, PositivityError, ValidationError)
from utils.helpers import make_rng, write_csv, write_json


class RunnerConfig:
    CPTP_RANDOM_STATES = 50
    TRACE_TOL = 1e-12
    HERMITIAN_TOL = 1e-12
    POSITIVITY_TOL = -1e-10
    COMPLETENESS_TOL = 1e-10
    COVARIANCE_TOL = 1e-10
    ANCILLA_MAX_BASIS = 9
    MEASURE_TOL = 1e-9
    DEGENERATE_TOL = 1e-3
    DIFFUSE_DELTA_TOL = 1e-9
    VARIANCE_STEP_TOL = 1e-10
    SLOPE_REL_TOL = 1e-6
    SPREAD_CONST_TOL = 1e-9
    EVOLVE_TRACE_TOL = 1e-8
    EQUIVALENCE_FACTOR = 5.0


COMMANDS = ("verify-channel", "diffuse", "theorem-scan", "lindblad-evolve", "unravel")

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def setup_logging(log_dir: str, verbose: bool = False):
    """Log to <log_dir>/collapse_lab.log and the console"""
    os.makedirs(log_dir, exist_ok=True)

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(log_dir, 'collapse_lab.log')),
            logging.StreamHandler()
        ]
    )


def _check(name: str, passed: bool, value: Optional[float] = None) -> Dict[str, Any]:
    return {"name": name, "passed": bool(passed), "value": None if value is None else float(value)}


class ExperimentRunner:
    def __init__(self, settings: Optional[AppSettings] = None, history_path: Optional[str] = None,
                 use_history: bool = True):
        self.settings = settings or load_settings()
        self.logger = logging.getLogger(__name__)
        self.file_manager = ExperimentFileManager()
        self.history_path = history_path or self.settings.history_db
        self.use_history = use_history

    def run(self, command: str, config_path: str, out_dir: Optional[str] = None,
            seed: Optional[int] = None, tol: Optional[float] = None) -> int:
        """
        Validate the config, run one command and record it in the history.
        Returns the exit code (0 pass, 1 check failure, 2 usage/config error).
        """
        start_time = time.time()
        self.logger.info(f"Starting {command} with config {config_path}")

        # 1. Validate config
        if command not in COMMANDS:
            self.logger.error(f"Unknown command '{command}'")
            return EXIT_USAGE
        is_valid, error_msg, config = self.file_manager.validate_config_file(config_path, command)
        if not is_valid:
            self.logger.error(f"Invalid config {config_path}: {error_msg}")
            return EXIT_USAGE

        run_block = config.get("run", {})
        seed = int(seed if seed is not None else run_block.get("seed", self.settings.seed))
        tol = float(tol if tol is not None else run_block.get("tolerance", self.settings.tolerance))
        out_dir = out_dir or config.get("output", {}).get("dir") or self.settings.output_dir

        # 2. Build objects and execute
        handler = {
            "verify-channel": self.cmd_verify_channel,
            "diffuse": self.cmd_diffuse,
            "theorem-scan": self.cmd_theorem_scan,
            "lindblad-evolve": self.cmd_lindblad_evolve,
            "unravel": self.cmd_unravel,
        }[command]
        try:
            summary = handler(config, config_base_dir(config_path), out_dir, seed, tol)
            exit_code = EXIT_PASS if summary["passed"] else EXIT_FAIL
        except (ConfigError, ValidationError, LatticeRangeError, KeyError, TypeError, ValueError) as e:
            self.logger.error(f"Config error in {config_path}: {e}")
            summary, exit_code = {"passed": False, "error": str(e), "checks": []}, EXIT_USAGE
        except CollapseLabError as e:
            self.logger.error(f"{command} aborted: {e}")
            summary, exit_code = {"passed": False, "error": str(e), "checks": []}, EXIT_FAIL

        execution_time = time.time() - start_time
        status = "passed" if exit_code == EXIT_PASS else "failed"
        self.logger.info(f"{command} {status} (exit {exit_code}) in {execution_time:.2f}s")

        # 3. Record history
        self.record_history(command, config_path, seed, exit_code, summary, execution_time)
        return exit_code

    def record_history(self, command: str, config_path: str, seed: int, exit_code: int,
                       summary: Dict[str, Any], execution_time: float):
        """History failures are logged only; they never change the exit code"""
        if not self.use_history:
            return
        checks = summary.get("checks", [])
        outcome: Dict[str, Any] = {
            "passed": bool(summary.get("passed", False)),
            "checks": {c["name"]: "pass" if c["passed"] else "fail" for c in checks},
        }
        if "error" in summary:
            outcome["error"] = summary["error"]
        try:
            db = RunDatabase(self.history_path)
            run_id = db.save_run(command, os.path.abspath(config_path),
                                 self.file_manager.config_digest(config_path), seed, exit_code,
                                 json.dumps(outcome, sort_keys=True), execution_time)
            if run_id > 0:
                db.save_check_results(run_id, checks)
            if exit_code != EXIT_USAGE:
                db.save_setting(f"last_config.{command}", os.path.abspath(config_path))
        except Exception as e:
            self.logger.error(f"Could not record run history: {e}")

    def last_config(self, command: str) -> Optional[str]:
        """Config path of the last recorded run of command, if any"""
        if not self.use_history:
            return None
        return RunDatabase(self.history_path).get_setting(f"last_config.{command}") or None

    # ------------------------------------------------------------------ verify-channel

    def cmd_verify_channel(self, config: Dict, base_dir: str, out_dir: str, seed: int, tol: float) -> Dict:
        """CPTP, completeness, covariance and classification checks of one channel"""
        lat = build_lattice(config)
        ch = build_channel(config, lat, base_dir, seed)
        run_block = config.get("run", {})
        checks: List[Dict[str, Any]] = []

        # 1. Completeness
        completeness = ch.completeness_deviation()
        checks.append(_check("completeness", completeness <= RunnerConfig.COMPLETENESS_TOL, completeness))

        # 2. CPTP on random states
        rng = make_rng(seed, 3)
        worst_trace = worst_herm = 0.0
        worst_eig = np.inf
        for _ in range(RunnerConfig.CPTP_RANDOM_STATES):
            out = apply(ch, random_density(lat, rng))
            worst_trace = max(worst_trace, abs(out.trace() - 1.0))
            worst_herm = max(worst_herm, float(np.max(np.abs(out.matrix - out.matrix.conj().T))))
            worst_eig = min(worst_eig, out.min_eigenvalue())
        cptp = (worst_trace <= RunnerConfig.TRACE_TOL and worst_herm <= RunnerConfig.HERMITIAN_TOL
                and worst_eig >= RunnerConfig.POSITIVITY_TOL)
        checks.append(_check("cptp", cptp, worst_eig))

        # 3. Covariance under translations
        count = int(run_block.get("displacements", self.settings.displacements))
        covariance = covariance_check(ch, uniform_displacements(lat, count))
        checks.append(_check("covariance", covariance <= RunnerConfig.COVARIANCE_TOL, covariance))

        # 4. Complete positivity with an ancilla (small bases only)
        cp_min = None
        if lat.size <= RunnerConfig.ANCILLA_MAX_BASIS:
            cp_min = ancilla_min_eigenvalue(ch, lat.size, make_rng(seed, 7))
            checks.append(_check("cp_extension", cp_min >= RunnerConfig.POSITIVITY_TOL, cp_min))

        # 5. Classification against the probe suite
        probes = probe_suite(lat, seed, self.settings.random_states)
        classification = classify_channel(ch, tol, probes)
        checks.append(_check("classification_consistent", classification.consistent,
                             classification.max_abs_delta))

        channel_id = config["channel"]["kind"]
        d, big_d, delta = probe_reports(ch, probes)
        rows = [[channel_id, probe.state_id, axis, d[i, axis], big_d[i, axis], delta[i, axis],
                 classification.label.value]
                for i, probe in enumerate(probes) for axis in range(lat.dim)]
        write_csv(os.path.join(out_dir, "diffusion_report.csv"),
                  ["channel_id", "state_id", "axis", "d", "D", "delta", "class"], rows)

        passed = all(c["passed"] for c in checks)
        report = {
            "cptp": "pass" if cptp else "fail",
            "completeness_max_dev": completeness,
            "covariance_max_dev": covariance,
            "cp_extension_min_eig": cp_min,
            "class": classification.label.value,
            "boost_branches": classification.branches,
            "max_abs_delta": classification.max_abs_delta,
            "checks": checks,
            "passed": passed,
        }
        write_json(os.path.join(out_dir, "report.json"), report)
        self.logger.info(f"Wrote verify-channel report to {out_dir}")
        return report

    # ------------------------------------------------------------------ diffuse

    def cmd_diffuse(self, config: Dict, base_dir: str, out_dir: str, seed: int, tol: float) -> Dict:
        """Repeated application with per-step moments and diffusion diagnostics"""
        lat = build_lattice(config)
        ch = build_channel(config, lat, base_dir, seed)
        rho = build_state(config["state"], lat)
        run_block = config.get("run", {})
        if "n_steps" not in run_block:
            raise ConfigError("diffuse needs run.n_steps")
        n_steps = int(run_block["n_steps"])
        path = run_block.get("path", "general")

        means, spreads = momentum_moments(rho)
        rows = [[0] + means + spreads + [0.0] * (3 * lat.dim)]
        all_spreads = [spreads]
        all_deltas = []
        worst_mismatch = 0.0
        off_diagonal = rho.matrix - np.diag(np.diag(rho.matrix))
        diagonal_start = float(np.max(np.abs(off_diagonal), initial=0.0)) <= RunnerConfig.HERMITIAN_TOL

        for step in range(1, n_steps + 1):
            report = diffusion_report(ch, rho, path)
            rho = apply(ch, rho)
            new_means, new_spreads = momentum_moments(rho)
            for j in range(lat.dim):
                change = new_spreads[j] - all_spreads[-1][j]
                scale = max(1.0, abs(new_spreads[j]))
                worst_mismatch = max(worst_mismatch, abs(report.delta[j] - change) / scale)
            rows.append([step] + new_means + new_spreads + report.d + report.D + report.delta)
            all_spreads.append(new_spreads)
            all_deltas.append(report.delta)

        header = (["step"] + [f"mean_p_{j}" for j in range(lat.dim)] + [f"spread_p_{j}" for j in range(lat.dim)]
                  + [f"d_{j}" for j in range(lat.dim)] + [f"D_{j}" for j in range(lat.dim)]
                  + [f"delta_{j}" for j in range(lat.dim)])
        write_csv(os.path.join(out_dir, "diffuse.csv"), header, rows)

        label = classify_channel(ch, tol, check_consistency=False).label
        drift = max(float(np.max(np.abs(transfer_sums(ch, j)[0]))) for j in range(lat.dim))
        mean_conserving = drift <= RunnerConfig.COMPLETENESS_TOL

        checks = [_check("delta_matches_spread", worst_mismatch <= RunnerConfig.DIFFUSE_DELTA_TOL, worst_mismatch)]
        monotone = None
        if label == ChannelClass.DIFFUSIVE and mean_conserving:
            steps = np.diff(np.array(all_spreads), axis=0)
            monotone = bool(np.all(steps >= -RunnerConfig.DIFFUSE_DELTA_TOL))
            checks.append(_check("spread_monotone", monotone, float(np.min(steps, initial=0.0))))
            if not monotone:
                self.logger.warning("Spread decreased under a mean-conserving diffusive channel")

        # Diagonal states stay diagonal, so on a homogeneous bulk every step adds Var_P(0)
        variance = bulk_transfer_variance(ch, RunnerConfig.VARIANCE_STEP_TOL) if diagonal_start else None
        if variance is not None and all_deltas:
            step_dev = float(np.max(np.abs(np.array(all_deltas) - np.array(variance))))
            checks.append(_check("step_matches_transfer_variance",
                                 step_dev <= RunnerConfig.VARIANCE_STEP_TOL, step_dev))
            if step_dev > RunnerConfig.VARIANCE_STEP_TOL:
                self.logger.warning(f"Spread increment differs from Var_P by {step_dev:.3e}; "
                                    f"the window is too small for {n_steps} steps")

        summary = {
            "class": label.value,
            "mean_conserving": mean_conserving,
            "spread_monotone": monotone,
            "transfer_variance": variance,
            "n_steps": n_steps,
            "path": path,
            "checks": checks,
            "passed": all(c["passed"] for c in checks),
        }
        write_json(os.path.join(out_dir, "diffuse_summary.json"), summary)
        self.logger.info(f"Wrote {n_steps} diffusion steps to {out_dir}")
        return summary

    # ------------------------------------------------------------------ theorem-scan

    def cmd_theorem_scan(self, config: Dict, base_dir: str, out_dir: str, seed: int, tol: float) -> Dict:
        """Random momentum-diagonal and diffusive channels: label vs measured Delta"""
        lat = build_lattice(config)
        run_block = config.get("run", {})
        n_diag = int(run_block.get("n_momentum_diagonal", 0))
        n_diff = int(run_block.get("n_diffusive", 0))
        n_kraus = int(run_block.get("n_kraus", 3))
        max_transfer = min(int(run_block.get("max_transfer", 2)), 2 * lat.n_max)

        warnings: List[str] = []
        if tol > RunnerConfig.DEGENERATE_TOL:
            warnings.append(f"Tolerance {tol} is large enough to make the classification degenerate")
            self.logger.warning(warnings[-1])

        measure_tol = delta_tolerance(lat, RunnerConfig.MEASURE_TOL)
        probes = probe_suite(lat, seed, self.settings.random_states) if n_diag + n_diff else []
        confusion: Dict[str, Dict[str, int]] = {}
        misclassified = 0
        family_mismatch = 0

        samples: List[Tuple[str, CovariantChannel]] = []
        for i in range(n_diag):
            samples.append(("momentum_diagonal", random_momentum_diagonal(lat, n_kraus, make_rng(seed, 10, i))))
        if n_diff and lat.n_max == 0:
            raise ConfigError("Diffusive channels need n_max >= 1")
        for i in range(n_diff):
            samples.append(("diffusive", random_covariant(lat, n_kraus, max_transfer, make_rng(seed, 11, i))))

        for family, ch in samples:
            result = classify_channel(ch, tol, probes, delta_tol=measure_tol)
            measured = "zero" if result.max_abs_delta <= measure_tol else "nonzero"
            row = confusion.setdefault(result.label.value, {"zero": 0, "nonzero": 0})
            row[measured] += 1
            if not result.consistent:
                misclassified += 1
                warnings.append(result.message)
            expected = ChannelClass.MOMENTUM_DIAGONAL if family == "momentum_diagonal" else ChannelClass.DIFFUSIVE
            if result.label != expected:
                family_mismatch += 1

        summary = {
            "n_momentum_diagonal": n_diag,
            "n_diffusive": n_diff,
            "tolerance": tol,
            "confusion": confusion,
            "misclassifications": misclassified,
            "family_mismatches": family_mismatch,
            "warnings": warnings,
            "warning_count": len(warnings),
            "checks": [_check("no_misclassification", misclassified == 0, misclassified)],
            "passed": misclassified == 0,
        }
        write_json(os.path.join(out_dir, "theorem_scan.json"), summary)
        self.logger.info(f"Scanned {len(samples)} channels, {misclassified} misclassified")
        return summary

    # ------------------------------------------------------------------ lindblad-evolve

    def cmd_lindblad_evolve(self, config: Dict, base_dir: str, out_dir: str, seed: int, tol: float) -> Dict:
        """RK4 trajectory with the rate and zero-diffusion checks"""
        lat = build_lattice(config)
        gen = build_generator(config, lat, base_dir, seed)
        rho0 = build_state(config["state"], lat)
        run_block = config.get("run", {})
        if "dt" not in run_block or "t_final" not in run_block:
            raise ConfigError("lindblad-evolve needs run.dt and run.t_final")

        dp0, dp2_0 = moment_rates(gen, rho0)
        reduction = zero_diffusion_reduce(gen, RunnerConfig.MEASURE_TOL)
        checks: List[Dict[str, Any]] = []
        error = None

        try:
            traj = evolve(gen, rho0, float(run_block["t_final"]), float(run_block["dt"]))
        except PositivityError as e:
            self.logger.warning(f"Evolution stopped: {e}")
            traj, error = None, str(e)
            checks.append(_check("positivity", False, e.min_eigenvalue))
        except InvariantError as e:
            self.logger.warning(f"Evolution stopped: {e}")
            traj, error = None, str(e)
            checks.append(_check("trace", False, e.deviation))

        slopes = None
        if traj is not None:
            write_csv(os.path.join(out_dir, "trajectory.csv"), traj.header(), traj.rows())
            trace_dev = max(abs(t - 1.0) for t in traj.traces)
            checks.append(_check("trace", trace_dev <= RunnerConfig.EVOLVE_TRACE_TOL, trace_dev))

            if reduction.is_momentum_diagonal:
                spreads = np.array(traj.spread_p)
                drift = float(np.max(np.abs(spreads - spreads[0])))
                checks.append(_check("spread_constant", drift <= RunnerConfig.SPREAD_CONST_TOL, drift))
            elif len(traj.times) >= 2:
                slopes = []
                for axis in range(lat.dim):
                    slope, _, _ = fit_second_moment_slope(traj, axis)
                    rel = abs(slope - dp2_0[axis]) / max(abs(dp2_0[axis]), 1e-300)
                    slopes.append(slope)
                    checks.append(_check(f"slope_axis_{axis}", rel <= RunnerConfig.SLOPE_REL_TOL, rel))

        summary = {
            "dp_rate": dp0,
            "dp2_rate": dp2_0,
            "fitted_slope": slopes,
            "is_momentum_diagonal": reduction.is_momentum_diagonal,
            "witness": None if reduction.witness is None else list(reduction.witness),
            "error": error,
            "checks": checks,
            "passed": all(c["passed"] for c in checks),
        }
        write_json(os.path.join(out_dir, "lindblad_summary.json"), summary)
        self.logger.info(f"Wrote Lindblad trajectory to {out_dir}")
        return summary

    # ------------------------------------------------------------------ unravel

    def cmd_unravel(self, config: Dict, base_dir: str, out_dir: str, seed: int, tol: float) -> Dict:
        """Trajectory average against the exact channel power"""
        lat = build_lattice(config)
        ch = build_channel(config, lat, base_dir, seed)
        run_block = config.get("run", {})
        if "ensemble" in config:
            initial = build_ensemble(config["ensemble"], lat)
        elif "state" in config:
            initial = build_ensemble(config["state"], lat)
        else:
            raise ConfigError("unravel needs a 'state' or an 'ensemble' block")

        cfg = TrajectoryConfig(seed=seed, n_steps=int(run_block.get("n_steps", 1)),
                               n_trajectories=int(run_block.get("n_trajectories", 1000)), channel=ch)
        threshold = float(run_block.get("trace_distance_tol", self.settings.trace_distance_tol))
        record = bool(run_block.get("record_outcomes", False))

        rho0 = mix(initial)
        exact = exact_evolution(ch, rho0, cfg.n_steps)
        try:
            result = ensemble_average(cfg, initial, record_outcomes=record)
        except DegenerateSamplingError as e:
            self.logger.warning(f"Unraveling stopped: {e}")
            summary = {"error": str(e), "checks": [_check("sampling", False)], "passed": False}
            write_json(os.path.join(out_dir, "unravel_report.json"), summary)
            return summary

        distance = trace_distance(result.state, exact)
        checks = [_check("trace_distance", distance <= threshold, distance)]

        equivalence = None
        if run_block.get("equivalent_ensemble", False):
            second = equivalent_ensemble(rho0, make_rng(seed, 20))
            eq, _, _ = equivalence_check(cfg, initial, second, RunnerConfig.EQUIVALENCE_FACTOR)
            equivalence = {"distance": eq.distance, "bound": eq.bound, "members": len(second)}
            checks.append(_check("equivalent_ensembles", eq.passed, eq.distance))

        write_json(os.path.join(out_dir, "aggregate_state.json"), state_to_dict(result.state))
        if record:
            write_csv(os.path.join(out_dir, "outcomes.csv"),
                      ["trajectory", "step", "k"] + [f"q_{j}" for j in range(lat.dim)],
                      [o.row() for o in result.outcomes])

        summary = {
            "n_trajectories": cfg.n_trajectories,
            "n_steps": cfg.n_steps,
            "trace_distance": distance,
            "threshold": threshold,
            "error_estimate": result.error_estimate,
            "equivalence": equivalence,
            "checks": checks,
            "passed": all(c["passed"] for c in checks),
        }
        write_json(os.path.join(out_dir, "unravel_report.json"), summary)
        self.logger.info(f"Wrote unravel report to {out_dir}")
        return summary
