import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.models.radial_models import RadialControls
from src.models.scan_models import (
    SYMMETRY_TOLERANCE, AsymptoticsRow, ConcentrationReport, CriticalResult, ScanRow, TranslateFamily,
)
from src.models.tfdw_models import CellSpec, MinimizeOptions, MinimizeResult, ModelParams, RealField, SpectralGrid
from src.services import coulomb_service as coulomb
from src.services import spectral_service as spectral
from src.services.energy_service import scaling_identity
from src.services.exceptions import DomainError, GridMismatchError, InvalidBracketError, NonConvergenceError
from src.services.minimizer_service import MinimizerService
from src.services.radial_service import RadialService, s_lambda

logger = logging.getLogger(__name__)

TRANSLATE_TOLERANCE = 1e-4


def grid_policy(c: float, n_max: int) -> Tuple[int, bool]:
    """n = ceil(8c) rounded up to even (at least 16), capped at n_max; True when capped"""
    n = max(16, math.ceil(8.0 * c))
    n += n % 2
    if n > n_max:
        return n_max - n_max % 2, True
    return n, False


def concentration_report(result: MinimizeResult, cell: CellSpec) -> ConcentrationReport:
    """
    Weighted centroid of the densest points around the density maximum and its nearest nucleus

    Only points within half a unit-cell edge of the maximum take part, so a periodic
    state that peaks at every nucleus still reports the peak it started from.
    """
    grid = result.field.grid
    if cell != grid.cell:
        raise GridMismatchError("cell does not match the minimizer grid")
    rho = result.field.values ** 2
    peak = np.array(np.unravel_index(np.argmax(rho), rho.shape), dtype=float) * grid.spacing

    x = grid.axis()
    coords = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
    offsets = spectral.minimum_image(grid, coords - peak)
    window = np.all(np.abs(offsets) < 0.5 * cell.edge, axis=-1)
    top = window & (rho >= np.quantile(rho[window], 0.99))
    weights = rho[top]
    center = np.mod(peak + weights @ offsets[top] / weights.sum(), cell.length)

    nuclei = cell.all_positions()
    distances = np.linalg.norm(spectral.minimum_image(grid, nuclei - center), axis=1)
    # nearest nucleus; the larger charge wins an exact tie
    charges = cell.all_charges()
    nearest = min(range(len(nuclei)), key=lambda i: (distances[i], -charges[i]))
    return ConcentrationReport(
        center=tuple(float(v) for v in center),
        distance_to_nearest_nucleus=float(distances[nearest]),
        nearest_nucleus=tuple(float(v) for v in nuclei[nearest]),
        nearest_charge=float(charges[nearest]),
    )


def relative_gain(e_single: float, e_super: float, multiplier: int) -> float:
    """(e_super - N^3 e_single) / (N^3 |e_single|); negative when the supercell wins"""
    extensive = multiplier ** 3 * e_single
    return (e_super - extensive) / max(abs(extensive), np.finfo(float).tiny)


def _bump(grid: SpectralGrid, position, width: float) -> np.ndarray:
    return np.exp(-0.5 * (spectral.distance_to(grid, position) / width) ** 2)


class ScanService:
    """Sweeps over the Dirac constant: symmetry breaking, critical c, asymptotics"""

    def __init__(self, minimizer: Optional[MinimizerService] = None, radial: Optional[RadialService] = None):
        self.minimizer = minimizer or MinimizerService()
        self.radial = radial or RadialService()

    def scan_row(
        self,
        params: ModelParams,
        cell: CellSpec,
        grid: SpectralGrid,
        c: float,
        multiplier: int,
        opts: Optional[MinimizeOptions] = None,
    ) -> ScanRow:
        """Unit-cell and supercell minimization at one Dirac constant"""
        params_c = params.with_dirac(c)
        try:
            single = self.minimizer.minimize(params_c, cell, grid, opts, kernel=coulomb.build_gk(grid))
            super_grid = grid.supercell(multiplier)
            extension = spectral.periodic_extension(single.field, super_grid)
            sup = self.minimizer.minimize(
                params_c, super_grid.cell, super_grid, opts,
                kernel=coulomb.build_gk(super_grid),
                extra_starts=[("extension", extension)],
                keep_fields=False,
            )
        except NonConvergenceError as e:
            logger.error(f"Scan row c={c}: {e}")
            nan = float("nan")
            return ScanRow(
                c=c, e_single=nan, e_super=nan, gain=nan, periodicity_defect=nan,
                concentration_center=(nan, nan, nan), nearest_nucleus_distance=nan, converged=False,
            )

        gain = relative_gain(single.energy, sup.energy, multiplier)
        if gain > SYMMETRY_TOLERANCE:
            logger.warning(f"c={c}: supercell energy exceeds the extended unit-cell energy (gain={gain:.3e})")
        report = concentration_report(sup, super_grid.cell)
        row = ScanRow(
            c=c,
            e_single=single.energy,
            e_super=sup.energy,
            gain=gain,
            periodicity_defect=sup.periodicity_defect,
            concentration_center=report.center,
            nearest_nucleus_distance=report.distance_to_nearest_nucleus,
            supercell_start=sup.start_label,
            converged=single.converged and sup.converged,
        )
        logger.info(
            f"Scan c={c:g}: E_K={single.energy:.12f}, E_NK={sup.energy:.12f}, gain={gain:.3e}, "
            f"defect={sup.periodicity_defect:.3e}, start={sup.start_label}"
        )
        return row

    def symmetry_scan(
        self,
        params: ModelParams,
        cell: CellSpec,
        grid: SpectralGrid,
        c_list: Sequence[float],
        multiplier: int = 2,
        opts: Optional[MinimizeOptions] = None,
        workers: int = 1,
    ) -> List[ScanRow]:
        """One ScanRow per c, in input order"""
        if multiplier < 2:
            raise DomainError("symmetry scans need a supercell multiplier N >= 2")
        if list(c_list) != sorted(c_list):
            raise DomainError("c_list must be sorted")
        if cell.multiplier != 1 or grid.cell != cell:
            raise GridMismatchError("symmetry scans start from a unit-cell grid")

        jobs = [(params, cell, grid, float(c), multiplier, opts) for c in c_list]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_scan_job, jobs))
        else:
            rows = [self.scan_row(*job) for job in jobs]

        _audit_transition(rows)
        return rows

    def critical_c(
        self,
        params: ModelParams,
        cell: CellSpec,
        grid: SpectralGrid,
        bracket: Tuple[float, float],
        tol_c: float,
        multiplier: int = 2,
        opts: Optional[MinimizeOptions] = None,
        tol_sym: float = SYMMETRY_TOLERANCE,
    ) -> CriticalResult:
        """Bisect on gain < -tol_sym until the bracket is narrower than tol_c"""
        lo, hi = float(bracket[0]), float(bracket[1])
        if not lo < hi:
            raise InvalidBracketError(f"bracket ({lo}, {hi}) is not ordered")
        trace = []

        def broken(c: float) -> bool:
            row = self.scan_row(params, cell, grid, c, multiplier, opts)
            trace.append(row)
            if np.isnan(row.gain):
                raise NonConvergenceError(f"scan row at c={c} failed")
            if not row.converged:
                logger.warning(f"Scan row c={c} did not reach the residual tolerance; classified anyway")
            return row.is_broken(tol_sym)

        if broken(lo) or not broken(hi):
            raise InvalidBracketError(
                f"gain must be ~0 at c={lo} and below -{tol_sym:g} at c={hi}; "
                f"got {trace[0].gain:.3e} and {trace[-1].gain:.3e}"
            )
        while hi - lo > tol_c:
            mid = 0.5 * (lo + hi)
            if broken(mid):
                hi = mid
            else:
                lo = mid
            logger.info(f"Critical c bracket: [{lo:.6f}, {hi:.6f}]")

        _audit_transition(sorted(trace, key=lambda r: r.c), tol_sym)
        return CriticalResult(c_star=0.5 * (lo + hi), bracket=(lo, hi), trace=trace, tol_sym=tol_sym)

    def asymptotics_check(
        self,
        params: ModelParams,
        cell: CellSpec,
        c_list: Sequence[float],
        n_max: int = 128,
        opts: Optional[MinimizeOptions] = None,
        controls: Optional[RadialControls] = None,
    ) -> List[AsymptoticsRow]:
        """Compare E_{K,lambda}(c) with c^2 J_R3(lambda) + c S(lambda) along increasing c"""
        if list(c_list) != sorted(c_list):
            raise DomainError("c_list must be increasing")
        if params.c_w != 1.0:
            raise DomainError("the effective R^3 model is normalized with c_w = 1")
        if cell.multiplier != 1:
            raise DomainError("asymptotics run on the unit cell")

        lam = params.lam
        limit = self.radial.solve_for_mass(lam, params.c_tf, controls)
        z_plus = float(cell.charges.max())
        j_value = limit.energy_j
        s_value = s_lambda(limit, z_plus)
        logger.info(f"Asymptotics: J_R3({lam:g})={j_value:.12f}, S={s_value:.12f} (z+={z_plus:g})")

        rows = []
        for c in c_list:
            n, under = grid_policy(c, n_max)
            if under:
                logger.warning(f"c={c:g}: grid capped at n={n_max}, row is under-resolved")
            grid = SpectralGrid(n=n, cell=cell)
            try:
                result = self.minimizer.minimize(params.with_dirac(c), cell, grid, opts, keep_fields=False)
            except NonConvergenceError as e:
                logger.error(f"Asymptotics row c={c}: {e}")
                continue
            energy = result.energy
            scaled = energy / c ** 2
            check = scaling_identity(result.field, params, c)
            rows.append(AsymptoticsRow(
                c=c,
                n=n,
                energy=energy,
                scaled_energy=scaled,
                j_value=j_value,
                residual=abs(scaled - j_value),
                first_order=(energy - c ** 2 * j_value) / c,
                s_value=s_value,
                scaling_gap=check.relative_gap,
                under_resolved=under,
                converged=result.converged,
            ))
        return rows

    def lattice_translates(
        self,
        params: ModelParams,
        cell: CellSpec,
        grid: SpectralGrid,
        multiplier: int = 2,
        opts: Optional[MinimizeOptions] = None,
    ) -> TranslateFamily:
        """Minimize from one bump at every image of the largest-charge nucleus and compare the translates"""
        super_grid = grid.supercell(multiplier)
        super_cell = super_grid.cell
        kernel = coulomb.build_gk(super_grid)
        anchor = cell.unit_positions()[int(np.argmax(cell.charges))]
        width = cell.edge / 8.0

        results = []
        offsets = []
        for i in range(multiplier):
            for j in range(multiplier):
                for k in range(multiplier):
                    position = anchor + cell.edge * np.array([i, j, k], dtype=float)
                    start = RealField(grid=super_grid, values=_bump(super_grid, position, width))
                    result = self.minimizer.minimize(
                        params, super_cell, super_grid, opts, kernel=kernel,
                        extra_starts=[(f"nucleus-{i}{j}{k}", start)],
                        include_defaults=False, keep_fields=False,
                    )
                    results.append(result)
                    offsets.append((i, j, k))

        first = results[0].field.values
        norm = np.linalg.norm(first)
        mismatch = 0.0
        for result, (i, j, k) in zip(results[1:], offsets[1:]):
            back = spectral.translate_values(super_grid, result.field.values, (-i, -j, -k))
            mismatch = max(mismatch, float(np.linalg.norm(back - first) / norm))

        representatives = []
        for result in results:
            values = result.field.values
            if all(np.linalg.norm(values - r) / np.linalg.norm(r) > TRANSLATE_TOLERANCE for r in representatives):
                representatives.append(values)

        centers = [concentration_report(r, super_cell).center for r in results]
        logger.info(f"Lattice translates: {len(representatives)} distinct minimizers, mismatch {mismatch:.3e}")
        return TranslateFamily(
            energies=[r.energy for r in results],
            centers=centers,
            max_mismatch=mismatch,
            distinct=len(representatives),
        )


def _scan_job(job) -> ScanRow:
    return ScanService().scan_row(*job)


def _audit_transition(rows: Sequence[ScanRow], tol_sym: float = SYMMETRY_TOLERANCE):
    classes = [row.is_broken(tol_sym) for row in rows if row.converged]
    flips = sum(1 for a, b in zip(classes, classes[1:]) if a != b)
    if flips > 1 or (flips == 1 and classes[0]):
        logger.warning(f"Gain classification is not monotone along c: {classes}")


# Global scan service instance
scan_service = ScanService()
