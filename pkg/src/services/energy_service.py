import logging
from typing import Optional

import numpy as np

from src.models.tfdw_models import (
    CellSpec, CoulombKernel, EnergyBreakdown, MinimizeMode, ModelParams, RealField,
    ScalingCheck, SpectralGrid,
)
from src.services import coulomb_service as coulomb
from src.services import spectral_service as spectral
from src.services.exceptions import DomainError, GridMismatchError

logger = logging.getLogger(__name__)


class EnergyModel:
    """TFDW energy and Hamiltonian on one grid, with the nuclear potential cached"""

    def __init__(
        self,
        params: ModelParams,
        grid: SpectralGrid,
        kernel: Optional[CoulombKernel] = None,
        mode: MinimizeMode = MinimizeMode.FULL,
    ):
        self.params = params
        self.grid = grid
        self.mode = MinimizeMode(mode)
        self.kernel = None
        self.potential = None
        if self.mode is MinimizeMode.FULL:
            if kernel is None:
                kernel = coulomb.build_gk(grid)
            if not kernel.grid.same_as(grid):
                raise GridMismatchError("kernel was built on another grid")
            self.kernel = kernel
            self.potential = coulomb.external_potential(kernel, grid.cell).values

    @property
    def coulomb(self) -> bool:
        return self.kernel is not None

    def _terms(self, values: np.ndarray):
        p = self.params
        grid = self.grid
        absw = np.abs(values)
        rho = values ** 2
        kinetic = p.c_w * spectral.kinetic_integral_values(grid, values)
        tf = 0.6 * p.c_tf * spectral.integrate(grid, absw ** (10.0 / 3.0))
        dirac = -0.75 * p.c_dirac * spectral.integrate(grid, absw ** (8.0 / 3.0))
        hartree = external = 0.0
        if self.coulomb:
            hartree = 0.5 * coulomb.d_k_values(self.kernel, rho, rho)
            external = -spectral.integrate(grid, self.potential * rho)
        return kinetic, tf, dirac, hartree, external

    def breakdown(self, values: np.ndarray) -> EnergyBreakdown:
        kinetic, tf, dirac, hartree, external = self._terms(values)
        return EnergyBreakdown(kinetic=kinetic, tf=tf, dirac=dirac, hartree=hartree, external=external)

    def energy(self, values: np.ndarray) -> float:
        kinetic, tf, dirac, hartree, external = self._terms(values)
        return kinetic + tf + dirac + hartree + external

    def hamiltonian(self, values: np.ndarray) -> np.ndarray:
        """H_w w; half the L^2 gradient of the energy"""
        p = self.params
        absw = np.abs(values)
        result = p.c_w * spectral.laplacian_values(self.grid, values)
        result += p.c_tf * absw ** (4.0 / 3.0) * values
        if p.c_dirac:
            result -= p.c_dirac * absw ** (2.0 / 3.0) * values
        if self.coulomb:
            hartree = coulomb.hartree_potential_values(self.kernel, values ** 2)
            result += (hartree - self.potential) * values
        return result

    def multiplier(self, values: np.ndarray, hw: Optional[np.ndarray] = None) -> float:
        mass = float(np.sum(values ** 2))
        if mass <= 0:
            raise DomainError("the Euler-Lagrange multiplier is undefined for a zero-mass field")
        if hw is None:
            hw = self.hamiltonian(values)
        return -float(np.sum(hw * values)) / mass

    def residual(self, values: np.ndarray, hw: Optional[np.ndarray] = None) -> float:
        if hw is None:
            hw = self.hamiltonian(values)
        mu = self.multiplier(values, hw)
        return float(np.linalg.norm(hw + mu * values) / np.linalg.norm(values))


def _model(w: RealField, params: ModelParams, kernel: Optional[CoulombKernel], cell: Optional[CellSpec],
           mode: MinimizeMode) -> EnergyModel:
    if cell is not None and cell != w.grid.cell:
        raise GridMismatchError("cell does not match the field grid")
    if kernel is not None and not kernel.grid.same_as(w.grid):
        raise GridMismatchError("field and kernel are defined on different grids")
    return EnergyModel(params, w.grid, kernel, mode)


def energy_breakdown(
    w: RealField,
    params: ModelParams,
    kernel: Optional[CoulombKernel] = None,
    cell: Optional[CellSpec] = None,
    mode: MinimizeMode = MinimizeMode.FULL,
) -> EnergyBreakdown:
    return _model(w, params, kernel, cell, mode).breakdown(w.values)


def apply_hamiltonian(
    w: RealField,
    params: ModelParams,
    kernel: Optional[CoulombKernel] = None,
    cell: Optional[CellSpec] = None,
    mode: MinimizeMode = MinimizeMode.FULL,
) -> RealField:
    return w.with_values(_model(w, params, kernel, cell, mode).hamiltonian(w.values))


def euler_multiplier(
    w: RealField,
    params: ModelParams,
    kernel: Optional[CoulombKernel] = None,
    cell: Optional[CellSpec] = None,
    mode: MinimizeMode = MinimizeMode.FULL,
) -> float:
    """mu with <(H_w + mu) w, w> = 0"""
    if w.mass <= 0:
        raise DomainError("the Euler-Lagrange multiplier is undefined for a zero-mass field")
    return _model(w, params, kernel, cell, mode).multiplier(w.values)


def effective_energy(w: RealField, params: ModelParams) -> float:
    """J_{K,c}(w): the TFDW energy without the Coulomb terms"""
    return EnergyModel(params, w.grid, mode=MinimizeMode.EFFECTIVE).energy(w.values)


def scaling_identity(v: RealField, params: ModelParams, c: float) -> ScalingCheck:
    """Compare J_{K,c}(v) with c^2 J_{K_c,1}(v_breve), v_breve(x) = c^{-3/2} v(x / c)"""
    if c <= 0:
        raise DomainError("dilation factor must be positive")
    cell_energy = effective_energy(v, params.with_dirac(c))
    dilated_grid = SpectralGrid(n=v.grid.n, cell=v.grid.cell.with_edge(v.grid.cell.edge * c))
    dilated = RealField(grid=dilated_grid, values=c ** -1.5 * v.values)
    dilated_energy = c ** 2 * effective_energy(dilated, params.with_dirac(1.0))
    return ScalingCheck(c=c, cell_energy=cell_energy, dilated_energy=dilated_energy)


def effective_lower_bound(params: ModelParams, mass: Optional[float] = None) -> float:
    """-(15/64)(lambda / c_TF) c^2"""
    lam = params.lam if mass is None else mass
    return -15.0 / 64.0 * lam / params.c_tf * params.c_dirac ** 2


def energy_lower_bound(params: ModelParams, c_fit: float, mass: Optional[float] = None) -> float:
    """-(15/64)(lambda / c_TF) c^2 - lambda * C_fit"""
    lam = params.lam if mass is None else mass
    return effective_lower_bound(params, lam) - lam * c_fit
