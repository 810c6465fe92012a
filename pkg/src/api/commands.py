import argparse
import logging
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.models.config_models import RunConfig
from src.models.radial_models import OperatorBranch
from src.models.tfdw_models import MinimizeMode, SpectralGrid
from src.services.config_service import load_config
from src.services.energy_service import effective_lower_bound
from src.services.exceptions import (
    BisectionCollapseError, ConfigError, DomainError, GridMismatchError, InvalidBracketError,
    MassOutOfReachError, NonConvergenceError,
)
from src.services.minimizer_service import MinimizerService, uniqueness_certificate
from src.services.radial_service import (
    RadialService, default_mu_grid, fit_mass_exponent, linearized_spectrum, mu_star, s_lambda,
)
from src.services.results_service import ResultsWriter, file_stem
from src.services.scan_service import ScanService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2

SUBCOMMANDS = ("periodic-min", "radial", "mass-curve", "scan-symmetry", "critical-c", "asymptotics")

Outcome = Tuple[Dict[str, Any], bool]

SCAN_COLUMNS = {
    "c": "Dirac constant",
    "e_single": "E_{K,lambda}(c), unit cell",
    "e_super": "E_{NK,N^3 lambda}(c), supercell",
    "gain": "(e_super - N^3 e_single) / (N^3 |e_single|), negative when the supercell wins",
    "periodicity_defect": "min over unit-cell translations of ||w - w(. - R)|| / ||w||",
    "center_x": "density concentration center, x",
    "center_y": "density concentration center, y",
    "center_z": "density concentration center, z",
    "nearest_nucleus_distance": "distance from the center to the nearest nucleus",
    "broken": "1 when gain < -tol_sym",
    "converged": "1 when both minimizations met tol_residual",
}


class CommandParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(prog="tfdw", description="Periodic TFDW minimization and radial analysis")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override one key")
    parser.add_argument("--seed", type=int, help="Seed of the random starts")
    parser.add_argument("--output-dir", help="Directory of the result files (default: $TFDW_OUTPUT_DIR or results)")
    parser.add_argument("--workers", type=int, help="Worker processes for sweeps (default: $TFDW_WORKERS or 1)")
    return parser


def _scan_frame(rows) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "c": row.c,
            "e_single": row.e_single,
            "e_super": row.e_super,
            "gain": row.gain,
            "periodicity_defect": row.periodicity_defect,
            "center_x": row.concentration_center[0],
            "center_y": row.concentration_center[1],
            "center_z": row.concentration_center[2],
            "nearest_nucleus_distance": row.nearest_nucleus_distance,
            "broken": int(row.is_broken()),
            "converged": int(row.converged),
        }
        for row in rows
    ], columns=list(SCAN_COLUMNS))


def periodic_min(config: RunConfig, writer: ResultsWriter) -> Outcome:
    cell = config.cell
    grid = SpectralGrid(n=config.n * cell.multiplier, cell=cell)
    result = MinimizerService(config.opts).minimize(config.params, cell, grid, config.opts, config.mode)

    starts = pd.DataFrame([
        {"label": s.label, "energy": s.energy, "residual": s.residual,
         "iterations": s.iterations, "converged": int(s.converged)}
        for s in result.starts
    ])
    writer.write_table("periodic_min_starts.csv", starts, config, {
        "label": "initialization", "energy": "final energy", "residual": "Euler-Lagrange residual",
        "iterations": "accepted descent steps", "converged": "1 when residual <= tol_residual",
    })
    writer.write_density("periodic_min_density.csv", result.field, config.params, config)

    results = {
        "energy": result.energy,
        "breakdown": result.breakdown.model_dump(),
        "mu": result.mu,
        "residual": result.residual,
        "iterations": result.iterations,
        "start_label": result.start_label,
        "periodicity_defect": result.periodicity_defect,
        "certificate": uniqueness_certificate(result, config.params).value,
    }
    if config.mode is MinimizeMode.EFFECTIVE:
        results["effective_lower_bound"] = effective_lower_bound(config.params, config.params.lam * cell.multiplier ** 3)
    return results, result.converged


def radial(config: RunConfig, writer: ResultsWriter) -> Outcome:
    c_tf = config.params.c_tf
    service = RadialService(config.radial)
    if config.mass is not None:
        solution = service.solve_for_mass(config.mass, c_tf)
    elif config.mu is not None:
        solution = service.shoot(config.mu, c_tf)
    else:
        raise ConfigError("radial needs 'mu' or 'mass'")

    spectra = {
        f"{which.value}_l{ell}": linearized_spectrum(solution, ell, which, config.spectrum_count)
        for ell in (0, 1, 2)
        for which in OperatorBranch
    }
    profile = pd.DataFrame({"r": solution.r_grid, "q": solution.q_values, "q_prime": solution.q_prime})
    writer.write_table("radial_profile.csv", profile, config, {
        "r": "radius", "q": "Q_mu(r)", "q_prime": "Q_mu'(r)",
    })
    results = {
        "mu": solution.mu,
        "mu_star": mu_star(c_tf),
        "q0": solution.q0,
        "mass": solution.mass,
        "energy_j": solution.energy_j,
        "s_lambda": s_lambda(solution, config.z),
        "pohozaev_residual": solution.pohozaev_residual,
        "nehari_residual": solution.nehari_residual,
        "decay_rate": solution.decay_rate,
        "match_radius": solution.match_radius,
        "r_max": solution.r_max,
        "bisections": solution.bisections,
        "mass_curve_anomaly": solution.mass_curve_anomaly,
        "spectra": spectra,
    }
    return results, True


def mass_curve(config: RunConfig, writer: ResultsWriter) -> Outcome:
    c_tf = config.params.c_tf
    mus = config.mu_list or default_mu_grid(c_tf, config.mu_points)
    points = RadialService(config.radial).mass_curve(c_tf, mus, workers=config.workers)
    frame = pd.DataFrame([p.model_dump() for p in points], columns=["mu", "mass", "energy_j"])
    writer.write_table("mass_curve.csv", frame, config, {
        "mu": "Lagrange multiplier", "mass": "M(mu) = int Q_mu^2", "energy_j": "J_R3(Q_mu)",
    })

    fits = {}
    for end in ("low", "high"):
        try:
            fits[end] = fit_mass_exponent(points, c_tf, end).model_dump()
        except DomainError as e:
            logger.warning(f"Exponent fit at the {end} end skipped: {e}")
    masses = frame["mass"].to_numpy()
    results = {
        "mu_star": mu_star(c_tf),
        "points": len(points),
        "requested": len(mus),
        "monotone": bool(np.all(np.diff(masses) > 0)),
        "fits": fits,
    }
    return results, len(points) == len(mus)


def scan_symmetry(config: RunConfig, writer: ResultsWriter) -> Outcome:
    grid = SpectralGrid(n=config.n, cell=config.cell)
    service = ScanService(MinimizerService(config.opts), RadialService(config.radial))
    rows = service.symmetry_scan(
        config.params, config.cell, grid, config.c_list, config.supercell, config.opts, config.workers
    )
    writer.write_table("scan_symmetry.csv", _scan_frame(rows), config, SCAN_COLUMNS)
    results = {
        "rows": len(rows),
        "broken": [row.c for row in rows if row.is_broken(config.tol_sym)],
        "max_gain": max((row.gain for row in rows if row.converged), default=None),
    }
    return results, all(row.converged for row in rows)


def critical_c(config: RunConfig, writer: ResultsWriter) -> Outcome:
    grid = SpectralGrid(n=config.n, cell=config.cell)
    service = ScanService(MinimizerService(config.opts), RadialService(config.radial))
    result = service.critical_c(
        config.params, config.cell, grid, config.bracket, config.tol_c,
        config.supercell, config.opts, config.tol_sym,
    )
    writer.write_table("critical_c_trace.csv", _scan_frame(result.trace), config, SCAN_COLUMNS)
    results = {
        "c_star": result.c_star,
        "three_quarter_c_star": 0.75 * result.c_star,
        "bracket": list(result.bracket),
        "evaluations": len(result.trace),
    }
    return results, all(row.converged for row in result.trace)


def asymptotics(config: RunConfig, writer: ResultsWriter) -> Outcome:
    service = ScanService(MinimizerService(config.opts), RadialService(config.radial))
    rows = service.asymptotics_check(
        config.params, config.cell, config.c_list, config.n_max, config.opts, config.radial
    )
    frame = pd.DataFrame([row.model_dump() for row in rows])
    writer.write_table("asymptotics.csv", frame, config, {
        "c": "Dirac constant",
        "n": "grid points per axis",
        "energy": "E_{K,lambda}(c)",
        "scaled_energy": "E / c^2",
        "j_value": "J_R3(lambda)",
        "residual": "|E / c^2 - J_R3(lambda)|",
        "first_order": "(E - c^2 J) / c",
        "s_value": "S(lambda) with the largest charge",
        "scaling_gap": "relative gap of the dilation identity",
        "under_resolved": "grid capped by n_max",
        "converged": "minimizer met tol_residual",
    })
    residuals = [row.residual for row in rows]
    results = {
        "rows": len(rows),
        "residual_decreasing": bool(all(b < a for a, b in zip(residuals, residuals[1:]))),
        "j_value": rows[0].j_value if rows else None,
        "s_value": rows[0].s_value if rows else None,
    }
    return results, len(rows) == len(config.c_list) and all(row.converged for row in rows)


HANDLERS: Dict[str, Callable[[RunConfig, ResultsWriter], Outcome]] = {
    "periodic-min": periodic_min,
    "radial": radial,
    "mass-curve": mass_curve,
    "scan-symmetry": scan_symmetry,
    "critical-c": critical_c,
    "asymptotics": asymptotics,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit code"""
    try:
        args = build_parser().parse_args(argv)
        config = load_config(args.config, args.set, {
            "seed": args.seed, "output_dir": args.output_dir, "workers": args.workers,
        })
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    subcommand = args.subcommand
    writer = ResultsWriter(config.output_dir)
    logger.info(f"Running {subcommand} (seed={config.seed}, output={config.output_dir})")

    try:
        results, converged = HANDLERS[subcommand](config, writer)
    except (ConfigError, DomainError, GridMismatchError, InvalidBracketError) as e:
        logger.error(f"{subcommand}: {e}")
        writer.write_summary(subcommand, config, {}, converged=False, error=str(e))
        return EXIT_CONFIG
    except (NonConvergenceError, BisectionCollapseError, MassOutOfReachError) as e:
        logger.error(f"{subcommand} solver failure: {e}")
        writer.write_summary(subcommand, config, {}, converged=False, error=str(e))
        return EXIT_SOLVER
    except Exception as e:
        logger.error(f"Unexpected error in {subcommand}: {e}")
        writer.write_summary(subcommand, config, {}, converged=False, error=f"unexpected: {e}")
        return EXIT_SOLVER

    writer.write_summary(subcommand, config, results, converged=converged)
    if not converged:
        logger.warning(f"{subcommand} finished without meeting its tolerances")
        return EXIT_SOLVER
    logger.info(f"{subcommand} completed; results in {config.output_dir}/{file_stem(subcommand)}*")
    return EXIT_OK
