import logging
from functools import lru_cache

import numpy as np
from scipy import fft

from src.models.tfdw_models import RealField, SpectralGrid
from src.services.exceptions import DomainError

logger = logging.getLogger(__name__)


@lru_cache(maxsize=16)
def _axis_wavenumbers(n: int, length: float) -> np.ndarray:
    k = 2.0 * np.pi * fft.fftfreq(n, d=length / n)
    k.setflags(write=False)
    return k


@lru_cache(maxsize=16)
def _squared_wavenumbers(n: int, length: float) -> np.ndarray:
    k = _axis_wavenumbers(n, length)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    k2.setflags(write=False)
    return k2


def axis_wavenumbers(grid: SpectralGrid) -> np.ndarray:
    """k = 2 pi m / (N L) in FFT order"""
    return _axis_wavenumbers(grid.n, grid.cell.length)


def squared_wavenumbers(grid: SpectralGrid) -> np.ndarray:
    """|k|^2 on the full 3D grid, read-only and cached per (n, L)"""
    return _squared_wavenumbers(grid.n, grid.cell.length)


def forward(values: np.ndarray) -> np.ndarray:
    """
    Unnormalized forward FFT of real-space samples

    Args:
        values: samples on an n x n x n grid

    Returns:
        Complex coefficients in FFT order
    """
    return fft.fftn(values)


def inverse(coefficients: np.ndarray) -> np.ndarray:
    """
    Inverse FFT back to real samples

    Args:
        coefficients: output of `forward`, possibly multiplied

    Returns:
        Real part of the samples; the imaginary part is roundoff for Hermitian input
    """
    return fft.ifftn(coefficients).real


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Diagonal Fourier operator: inverse(forward(values) * multiplier)"""
    return inverse(forward(values) * multiplier)


def laplacian_values(grid: SpectralGrid, values: np.ndarray) -> np.ndarray:
    """-Delta on raw samples"""
    return apply_multiplier(values, squared_wavenumbers(grid))


def laplacian_apply(w: RealField) -> RealField:
    """Return -Delta w through the exact Fourier multiplier |k|^2"""
    return w.with_values(laplacian_values(w.grid, w.values))


def integrate(grid: SpectralGrid, values: np.ndarray) -> float:
    """
    Trapezoidal rule on the periodic grid, spectrally accurate for smooth fields

    Args:
        grid: grid the samples live on
        values: samples to integrate

    Returns:
        sum(values) * dV
    """
    return float(np.sum(values) * grid.dv)


def inner(u: RealField, v: RealField) -> float:
    """L^2 inner product"""
    return integrate(u.grid, u.values * v.values)


def lp_norm(w: RealField, p: float) -> float:
    """(sum |w|^p dV)^{1/p}"""
    if p < 1:
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    return integrate(w.grid, np.abs(w.values) ** p) ** (1.0 / p)


def kinetic_integral_values(grid: SpectralGrid, values: np.ndarray) -> float:
    """int |grad w|^2 = (dV / n^3) sum |k|^2 |w_k|^2"""
    coefficients = forward(values)
    weight = grid.dv / values.size
    return float(np.sum(squared_wavenumbers(grid) * np.abs(coefficients) ** 2) * weight)


def kinetic_integral(w: RealField) -> float:
    """int |grad w|^2 for a field"""
    return kinetic_integral_values(w.grid, w.values)


def fourier_mass(w: RealField) -> float:
    """Fourier-side quadrature of int |w|^2 (Parseval)"""
    coefficients = forward(w.values)
    return float(np.sum(np.abs(coefficients) ** 2) * w.grid.dv / w.values.size)


def normalize(grid: SpectralGrid, values: np.ndarray, mass: float) -> np.ndarray:
    """
    Rescale samples so that int values^2 = mass

    Raises:
        DomainError: if the samples have zero mass
    """
    current = np.sum(values ** 2) * grid.dv
    if current <= 0:
        raise DomainError("cannot normalize a field of zero mass")
    return values * np.sqrt(mass / current)


def dirac_reference_constant(q: int) -> float:
    """c_D = (6 / (q pi))^{1/3}"""
    if q < 1:
        raise DomainError(f"number of spin states must be >= 1, got {q}")
    return (6.0 / (q * np.pi)) ** (1.0 / 3.0)


def periodic_extension(w: RealField, grid_super: SpectralGrid) -> RealField:
    """Tile a unit-cell field onto the supercell grid with the same spacing"""
    reps = grid_super.cell.multiplier // w.grid.cell.multiplier
    if grid_super.n != w.grid.n * reps or not np.isclose(grid_super.spacing, w.grid.spacing):
        raise DomainError("supercell grid must refine the unit-cell grid by the cell multiplier")
    return RealField(grid=grid_super, values=np.tile(w.values, (reps, reps, reps)))


def translate_values(grid: SpectralGrid, values: np.ndarray, cells) -> np.ndarray:
    """Roll samples by whole unit cells, cells = (i, j, k)"""
    per_cell = grid.n // grid.cell.multiplier
    return np.roll(values, tuple(int(c) * per_cell for c in cells), axis=(0, 1, 2))


def periodicity_defect(w: RealField) -> float:
    """min over unit-cell translations R != 0 of ||w - w(. - R)|| / ||w||"""
    m = w.grid.cell.multiplier
    if m < 2:
        return 0.0
    if w.grid.n % m:
        raise DomainError("grid size must be a multiple of the cell multiplier")
    norm = np.sqrt(np.sum(w.values ** 2))
    defects = []
    for i in range(m):
        for j in range(m):
            for k in range(m):
                if (i, j, k) == (0, 0, 0):
                    continue
                shifted = translate_values(w.grid, w.values, (i, j, k))
                defects.append(np.sqrt(np.sum((w.values - shifted) ** 2)) / norm)
    return float(min(defects))


def minimum_image(grid: SpectralGrid, displacement: np.ndarray) -> np.ndarray:
    """Wrap displacements into [-L/2, L/2] of the grid cell"""
    length = grid.cell.length
    return displacement - length * np.round(displacement / length)


def distance_to(grid: SpectralGrid, point) -> np.ndarray:
    """Periodic distance of every grid point to `point`"""
    x = grid.axis()
    dx = minimum_image(grid, x - point[0])[:, None, None]
    dy = minimum_image(grid, x - point[1])[None, :, None]
    dz = minimum_image(grid, x - point[2])[None, None, :]
    return np.sqrt(dx ** 2 + dy ** 2 + dz ** 2)
