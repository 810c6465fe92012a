import logging

import numpy as np
from scipy import fft

from src.models.tfdw_models import CellSpec, CoulombKernel, RealField, SpectralGrid
from src.services import spectral_service as spectral
from src.services.exceptions import DomainError, GridMismatchError

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


def coulomb_multiplier(grid: SpectralGrid) -> np.ndarray:
    """4 pi / |k|^2 on the reciprocal lattice, zero at k = 0 (neutralizing background)"""
    k2 = spectral.squared_wavenumbers(grid)
    multiplier = np.zeros_like(k2)
    nonzero = k2 > 0
    multiplier[nonzero] = FOUR_PI / k2[nonzero]
    return multiplier


def _unit_lattice_mask(grid: SpectralGrid) -> np.ndarray:
    m = grid.cell.multiplier
    if grid.n % m:
        raise DomainError(f"grid size {grid.n} is not a multiple of the cell multiplier {m}")
    modes = np.rint(fft.fftfreq(grid.n) * grid.n).astype(int)
    on_lattice = modes % m == 0
    return on_lattice[:, None, None] & on_lattice[None, :, None] & on_lattice[None, None, :]


def _phases(grid: SpectralGrid, position) -> np.ndarray:
    k = spectral.axis_wavenumbers(grid)
    return (
        np.exp(-1j * k * position[0])[:, None, None]
        * np.exp(-1j * k * position[1])[None, :, None]
        * np.exp(-1j * k * position[2])[None, None, :]
    )


def _unit_kernel_values(grid: SpectralGrid, coefficients: np.ndarray) -> np.ndarray:
    # K-periodic series: (1/|K|) sum over the unit-cell reciprocal lattice
    return spectral.inverse(coefficients) * grid.n ** 3 / grid.cell.unit_volume


def build_gk(grid: SpectralGrid) -> CoulombKernel:
    """Build G_K on the grid, shifted so that its grid minimum is zero"""
    multiplier = coulomb_multiplier(grid)
    mask = _unit_lattice_mask(grid)
    bare = _unit_kernel_values(grid, multiplier * mask)
    shift = float(-bare.min())
    gk = RealField(grid=grid, values=bare + shift)
    logger.debug(f"Built G_K on {grid.n}^3 grid (N={grid.cell.multiplier}), shift={shift:.12f}")
    return CoulombKernel(grid=grid, multiplier=multiplier, unit_mask=mask, shift=shift, gk_field=gk)


def potential_at(kernel: CoulombKernel, positions, charges) -> RealField:
    """sum_i z_i G_K(x - R_i) for Cartesian positions R_i, by Fourier phase factors"""
    grid = kernel.grid
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    charges = np.asarray(charges, dtype=float)
    coefficients = np.zeros(grid.shape, dtype=complex)
    for position, charge in zip(positions, charges):
        if np.allclose(position, 0.0):
            coefficients += charge
        else:
            coefficients += charge * _phases(grid, position)
    values = _unit_kernel_values(grid, coefficients * kernel.multiplier * kernel.unit_mask)
    return RealField(grid=grid, values=values + kernel.shift * float(charges.sum()))


def external_potential(kernel: CoulombKernel, cell: CellSpec) -> RealField:
    """V = sum_i z_i G_K(. - R_i) over the nuclei of one unit cell (G_K is K-periodic)"""
    if cell != kernel.grid.cell:
        raise GridMismatchError("cell does not match the kernel grid")
    return potential_at(kernel, cell.unit_positions(), cell.charges)


def _check_grid(kernel: CoulombKernel, *fields: RealField):
    """Raise GridMismatchError unless every field lives on the kernel grid"""
    for field in fields:
        if not field.grid.same_as(kernel.grid):
            raise GridMismatchError("field and kernel are defined on different grids")


def hartree_potential_values(kernel: CoulombKernel, rho: np.ndarray) -> np.ndarray:
    """
    Hartree potential rho * G on raw samples, using the pair kernel of the N*K cell

    Args:
        kernel: kernel built on the grid of `rho`
        rho: density samples

    Returns:
        Potential samples, including the pair constant times the total charge
    """
    total = float(np.sum(rho) * kernel.grid.dv)
    return spectral.apply_multiplier(rho, kernel.multiplier) + kernel.pair_constant * total


def d_k_values(kernel: CoulombKernel, f: np.ndarray, g: np.ndarray) -> float:
    """
    D_K(f, g) evaluated by Parseval on raw samples

    Args:
        kernel: kernel built on the grid of the samples
        f: first density
        g: second density; passing `f` again reuses its transform

    Returns:
        The Fourier series plus the pair constant times both total charges
    """
    grid = kernel.grid
    ff = spectral.forward(f)
    gg = spectral.forward(g) if g is not f else ff
    series = np.sum(kernel.multiplier * np.conj(ff) * gg).real * grid.dv ** 2 / grid.volume
    return float(series + kernel.pair_constant * np.sum(f) * np.sum(g) * grid.dv ** 2)


def d_k(kernel: CoulombKernel, f: RealField, g: RealField) -> float:
    """D_K(f, g) = int int f(x) G(x - y) g(y)"""
    _check_grid(kernel, f, g)
    return d_k_values(kernel, f.values, g.values)


def hartree_energy(kernel: CoulombKernel, rho: RealField) -> float:
    """(1/2) D_K(rho, rho)"""
    _check_grid(kernel, rho)
    return 0.5 * d_k_values(kernel, rho.values, rho.values)


def pair_field(kernel: CoulombKernel) -> RealField:
    """Real-space samples of the pair kernel, origin at grid index 0"""
    grid = kernel.grid
    values = spectral.inverse(kernel.multiplier) * grid.n ** 3 / grid.volume + kernel.pair_constant
    return RealField(grid=grid, values=values)


def brute_force_d_k(kernel: CoulombKernel, f: RealField, g: RealField) -> float:
    """O(n^6) real-space double sum against the pair kernel samples"""
    _check_grid(kernel, f, g)
    grid = kernel.grid
    n = grid.n
    if n > 16:
        raise DomainError("brute-force oracle is limited to grids of at most 16^3 points")
    pair = pair_field(kernel).values
    index = np.arange(n)
    diff = (index[:, None] - index[None, :]) % n
    kernel6 = pair[
        diff[:, None, None, :, None, None],
        diff[None, :, None, None, :, None],
        diff[None, None, :, None, None, :],
    ]
    total = np.einsum("abc,abcxyz,xyz->", f.values, kernel6, g.values)
    return float(total * grid.dv ** 2)
