import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.models.tfdw_models import (
    CellSpec, Certificate, CoulombKernel, MinimizeMode, MinimizeOptions, MinimizeResult,
    ModelParams, RealField, SpectralGrid, StartOutcome,
)
from src.services import spectral_service as spectral
from src.services.energy_service import EnergyModel
from src.services.exceptions import AllStartsFailedError, GridMismatchError

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-10
# energy increments this small (relative) are rounding noise of the quadrature
NOISE_FLOOR = 1e-13
ARMIJO = 1e-4
CURVATURE = 0.1
# largest rotation on the sphere per line-search trial
MAX_ANGLE = 0.25 * np.pi


class _Descent:
    """Preconditioned conjugate gradients along great circles of the mass sphere for one start"""

    def __init__(self, model: EnergyModel, mass: float, opts: MinimizeOptions):
        self.model = model
        self.mass = mass
        self.radius = np.sqrt(mass)
        self.opts = opts
        grid = model.grid
        self.dv = grid.dv
        self.preconditioner = 1.0 / (
            opts.preconditioner_shift + model.params.c_w * spectral.squared_wavenumbers(grid)
        )

    def _inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(a * b)) * self.dv

    def _project(self, values: np.ndarray) -> np.ndarray:
        return spectral.normalize(self.model.grid, np.abs(values), self.mass)

    def _tangent(self, w: np.ndarray, v: np.ndarray) -> np.ndarray:
        return v - self._inner(v, w) / self.mass * w

    def _state(self, w: np.ndarray):
        """Energy and tangent gradient 2 (H_w + mu) w"""
        hw = self.model.hamiltonian(w)
        return self.model.energy(w), 2.0 * self._tangent(w, hw), hw

    def _geodesic(self, w: np.ndarray, d: np.ndarray, length: float, t: float):
        """Point and velocity at time t of the great circle leaving w with velocity d"""
        angle = length * t / self.radius
        unit = d / length
        point = np.cos(angle) * w + np.sin(angle) * self.radius * unit
        velocity = length * (np.cos(angle) * unit - np.sin(angle) / self.radius * w)
        return point, velocity

    def _line_search(self, w, d, energy, slope0, t):
        """
        Step along the great circle meeting a sufficient-decrease and a curvature condition

        The curvature test uses the directional derivative, which stays accurate once
        energy differences sink below rounding noise.
        """
        opts = self.opts
        length = np.sqrt(self._inner(d, d))
        cap = MAX_ANGLE * self.radius / length
        lo, slope_lo, best = 0.0, slope0, None
        hi = slope_hi = None
        for _ in range(opts.line_search_steps):
            t = min(t, cap)
            point, velocity = self._geodesic(w, d, length, t)
            trial_energy, gradient, hw = self._state(point)
            slope = self._inner(gradient, velocity)
            allowed = energy + ARMIJO * t * slope0 + NOISE_FLOOR * abs(energy)
            if not np.isfinite(trial_energy) or trial_energy > allowed:
                hi, slope_hi = t, None
                t = lo + opts.backtrack * (t - lo)
            else:
                best = (t, point, trial_energy, gradient, hw)
                if abs(slope) <= CURVATURE * abs(slope0):
                    return best
                if slope < 0:
                    lo, slope_lo = t, slope
                else:
                    hi, slope_hi = t, slope
                if hi is None:
                    if t >= cap:
                        return best
                    t *= 2.0
                elif slope_hi is not None and slope_hi > slope_lo:
                    # secant root of the slope, kept inside the bracket
                    t = lo - slope_lo * (hi - lo) / (slope_hi - slope_lo)
                    t = min(max(t, lo + 0.1 * (hi - lo)), hi - 0.1 * (hi - lo))
                else:
                    t = 0.5 * (lo + hi)
            if t < opts.min_step:
                break
        return best

    def run(self, start: np.ndarray, label: str):
        opts = self.opts
        model = self.model
        w = self._project(start)
        energy, gradient, hw = self._state(w)
        residual = model.residual(w, hw)
        trace = [energy]
        iterations = 0
        converged = residual <= opts.tol_residual
        step = opts.step0
        direction = previous_gradient = previous_preconditioned = None

        while not converged and iterations < opts.max_iters:
            iterations += 1
            preconditioned = self._tangent(w, spectral.apply_multiplier(gradient, self.preconditioner))
            descent = -preconditioned
            if direction is not None:
                # Polak-Ribiere+ with transport by projection onto the new tangent space
                beta = self._inner(gradient - self._tangent(w, previous_gradient), preconditioned)
                beta = max(0.0, beta / self._inner(previous_gradient, previous_preconditioned))
                candidate = descent + beta * self._tangent(w, direction)
                if self._inner(candidate, gradient) < 0:
                    descent = candidate
            slope0 = self._inner(gradient, descent)

            found = self._line_search(w, descent, energy, slope0, step)
            if found is None and direction is not None:
                descent = -preconditioned
                slope0 = self._inner(gradient, descent)
                found = self._line_search(w, descent, energy, slope0, opts.step0)
            if found is None:
                logger.debug(f"Start {label}: line search stalled at residual {residual:.3e}")
                break

            step, w, energy, new_gradient, hw = found
            w = spectral.normalize(model.grid, w, self.mass)
            previous_gradient, previous_preconditioned = gradient, preconditioned
            gradient, direction = new_gradient, descent
            trace.append(energy)
            residual = model.residual(w, hw)
            converged = residual <= opts.tol_residual

            if iterations % 100 == 0:
                logger.debug(f"Start {label}: iter {iterations}, E={energy:.12f}, residual={residual:.3e}")

        if np.any(w < 0):
            w = np.abs(w)
            residual = model.residual(w)
            converged = residual <= opts.tol_residual
        return w, model.energy(w), residual, iterations, converged, trace


class MinimizerService:
    """Minimize the TFDW energy over the mass sphere with multi-start descent"""

    def __init__(self, options: Optional[MinimizeOptions] = None):
        self.options = options or MinimizeOptions()

    def initial_guesses(
        self,
        params: ModelParams,
        grid: SpectralGrid,
        opts: MinimizeOptions,
        extra_starts: Sequence[Tuple[str, RealField]] = (),
    ) -> List[Tuple[str, np.ndarray]]:
        """Constant, one Gaussian bump per nucleus of the first unit cell, extras, seeded random fields"""
        cell = grid.cell
        mass = params.lam * cell.multiplier ** 3
        width = cell.edge / 8.0
        starts = [("constant", np.full(grid.shape, np.sqrt(mass / grid.volume)))]
        for index, position in enumerate(cell.unit_positions()):
            distance = spectral.distance_to(grid, position)
            starts.append((f"bump-{index}", np.exp(-0.5 * (distance / width) ** 2)))
        for label, field in extra_starts:
            if not field.grid.same_as(grid):
                raise GridMismatchError(f"start '{label}' lives on another grid")
            starts.append((label, np.asarray(field.values, dtype=float)))

        k2 = spectral.squared_wavenumbers(grid)
        smoothing = np.exp(-0.5 * k2 * width ** 2)
        for index in range(max(0, opts.n_starts - len(starts))):
            rng = np.random.default_rng([opts.seed, index])
            noise = spectral.apply_multiplier(rng.standard_normal(grid.shape), smoothing)
            noise = (noise - noise.mean()) / (noise.std() + 1e-300)
            starts.append((f"random-{index}", np.exp(noise)))
        return [(label, spectral.normalize(grid, values, mass)) for label, values in starts]

    def minimize(
        self,
        params: ModelParams,
        cell: CellSpec,
        grid: SpectralGrid,
        opts: Optional[MinimizeOptions] = None,
        mode: MinimizeMode = MinimizeMode.FULL,
        kernel: Optional[CoulombKernel] = None,
        extra_starts: Sequence[Tuple[str, RealField]] = (),
        include_defaults: bool = True,
        keep_fields: bool = True,
    ) -> MinimizeResult:
        """
        Minimize the energy on the sphere ||w||^2 = N^3 lambda

        Args:
            params: physical constants
            cell: the (super)cell; must be the grid's cell
            grid: collocation grid
            opts: descent options, defaults to the service options
            mode: full TFDW energy or the effective model without Coulomb terms
            kernel: prebuilt Coulomb kernel of `grid`
            extra_starts: labelled additional initial fields
            include_defaults: run the constant/bump/random starts as well

        Returns:
            The lowest-energy result; `converged` is False when no start met the tolerance
        """
        opts = opts or self.options
        if cell != grid.cell:
            raise GridMismatchError("cell does not match the grid")
        model = EnergyModel(params, grid, kernel, mode)
        mass = params.lam * cell.multiplier ** 3

        if include_defaults:
            starts = self.initial_guesses(params, grid, opts, extra_starts)
        else:
            starts = [(label, spectral.normalize(grid, np.asarray(f.values, dtype=float), mass))
                      for label, f in extra_starts]

        logger.info(
            f"Minimizing ({MinimizeMode(mode).value}) c={params.c_dirac:g}, lambda={params.lam:g}, "
            f"N={cell.multiplier}, n={grid.n}, starts={[label for label, _ in starts]}"
        )

        outcomes = []
        runs = []
        for label, start in starts:
            descent = _Descent(model, mass, opts)
            w, energy, residual, iterations, converged, trace = descent.run(start, label)
            if not np.isfinite(energy):
                logger.warning(f"Start {label} produced a non-finite energy")
                continue
            runs.append((label, w, energy, residual, iterations, converged, trace))
            outcomes.append(StartOutcome(
                label=label, energy=energy, residual=residual, iterations=iterations,
                converged=converged, field=RealField(grid=grid, values=w) if keep_fields else None,
            ))
            logger.info(
                f"Start {label}: E={energy:.12f}, residual={residual:.3e}, "
                f"iterations={iterations}, converged={converged}"
            )

        if not runs:
            raise AllStartsFailedError("every start of the minimization failed")

        pool = [run for run in runs if run[5]] or runs
        best = pool[0]
        for run in pool[1:]:
            # earlier labels win ties
            if run[2] < best[2] - TIE_TOLERANCE * max(1.0, abs(best[2])):
                best = run

        label, w, energy, residual, iterations, converged, trace = best
        field = RealField(grid=grid, values=w)
        defect = spectral.periodicity_defect(field) if cell.multiplier >= 2 else None
        if not converged:
            logger.warning(f"Minimization did not converge: best residual {residual:.3e} > {opts.tol_residual:.1e}")

        return MinimizeResult(
            field=field,
            breakdown=model.breakdown(w),
            mu=model.multiplier(w),
            residual=residual,
            iterations=iterations,
            start_label=label,
            converged=converged,
            periodicity_defect=defect,
            energy_trace=trace,
            starts=outcomes,
        )


def uniqueness_certificate(result: MinimizeResult, params: ModelParams) -> Certificate:
    """Certified iff min w > (c / c_TF)^{3/2}"""
    threshold = (params.c_dirac / params.c_tf) ** 1.5
    if float(result.field.values.min()) > threshold:
        return Certificate.CERTIFIED
    return Certificate.NOT_CERTIFIED


# Global minimizer service instance
minimizer_service = MinimizerService()
