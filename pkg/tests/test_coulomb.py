import numpy as np
import pytest

from src.models.tfdw_models import CellSpec, Nucleus, RealField, SpectralGrid
from src.services import coulomb_service as coulomb
from src.services import spectral_service as spectral
from src.services.exceptions import DomainError, GridMismatchError


class TestPeriodicKernel:
    """Construction and normalization of G_K"""

    def setup_method(self):
        self.grid = SpectralGrid(n=16)
        self.kernel = coulomb.build_gk(self.grid)

    def test_minimum_is_zero(self):
        assert self.kernel.gk_field.values.min() == pytest.approx(0.0, abs=1e-12)
        assert self.kernel.shift > 0

    def test_peak_at_nucleus(self):
        values = self.kernel.gk_field.values
        assert np.unravel_index(np.argmax(values), values.shape) == (0, 0, 0)

    def test_inversion_symmetric(self):
        values = self.kernel.gk_field.values
        mirrored = np.roll(values[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
        assert np.allclose(values, mirrored, atol=1e-12)

    def test_multiplier_vanishes_at_zero_mode(self):
        assert self.kernel.multiplier[0, 0, 0] == 0.0
        assert self.kernel.pair_constant == pytest.approx(self.kernel.shift)

    def test_potential_at_origin_matches_gk_field(self):
        potential = coulomb.potential_at(self.kernel, [[0.0, 0.0, 0.0]], [1.0])
        assert np.allclose(potential.values, self.kernel.gk_field.values, atol=1e-12)

    def test_external_potential_is_shifted_kernel(self):
        potential = coulomb.external_potential(self.kernel, self.grid.cell)
        shifted = np.roll(self.kernel.gk_field.values, (8, 8, 8), axis=(0, 1, 2))
        assert np.allclose(potential.values, shifted, atol=1e-10)

    def test_external_potential_checks_cell(self):
        with pytest.raises(GridMismatchError):
            coulomb.external_potential(self.kernel, CellSpec(edge=2.0))

    def test_supercell_kernel_is_unit_periodic(self):
        super_grid = self.grid.supercell(2)
        kernel = coulomb.build_gk(super_grid)
        values = kernel.gk_field.values
        assert np.allclose(values[:16, :16, :16], values[16:, 16:, 16:], atol=1e-12)
        assert kernel.pair_constant == pytest.approx(kernel.shift / 8)

    def test_inverse_distance_bound_is_uniform_in_resolution(self):
        constants = []
        for n in (8, 16, 32):
            grid = SpectralGrid(n=n)
            kernel = coulomb.build_gk(grid)
            distance = spectral.distance_to(grid, (0.0, 0.0, 0.0))
            away = distance > 0
            constants.append(float(np.max(kernel.gk_field.values[away] * distance[away])))
        assert all(np.isfinite(constants)) and min(constants) > 0
        assert max(constants) <= 2.0 * min(constants)

    def test_grid_not_divisible_by_multiplier(self):
        grid = SpectralGrid(n=10, cell=CellSpec(multiplier=4))
        with pytest.raises(DomainError):
            coulomb.build_gk(grid)


class TestHartreeForm:
    """D_K against its brute-force real-space definition"""

    def setup_method(self):
        self.grid = SpectralGrid(n=8, cell=CellSpec(edge=1.5))
        self.kernel = coulomb.build_gk(self.grid)
        self.rng = np.random.default_rng(2024)

    def _density(self):
        return RealField(grid=self.grid, values=self.rng.random(self.grid.shape))

    @pytest.mark.parametrize("repeat", range(5))
    def test_matches_brute_force(self, repeat):
        f = self._density()
        g = self._density()
        spectral_value = coulomb.d_k(self.kernel, f, g)
        brute = coulomb.brute_force_d_k(self.kernel, f, g)
        assert spectral_value == pytest.approx(brute, rel=1e-10)

    def test_symmetric_and_positive(self):
        f = self._density()
        g = self._density()
        assert coulomb.d_k(self.kernel, f, g) == pytest.approx(coulomb.d_k(self.kernel, g, f), rel=1e-12)
        assert coulomb.d_k(self.kernel, f, f) > 0
        assert coulomb.hartree_energy(self.kernel, f) == pytest.approx(0.5 * coulomb.d_k(self.kernel, f, f))

    def test_potential_consistent_with_form(self):
        f = self._density()
        g = self._density()
        phi = coulomb.hartree_potential_values(self.kernel, f.values)
        assert spectral.integrate(self.grid, phi * g.values) == pytest.approx(
            coulomb.d_k(self.kernel, f, g), rel=1e-12
        )

    def test_mismatched_grids_rejected(self):
        other = RealField(grid=SpectralGrid(n=10), values=np.ones((10, 10, 10)))
        with pytest.raises(GridMismatchError):
            coulomb.d_k(self.kernel, self._density(), other)

    def test_brute_force_limited_to_small_grids(self):
        grid = SpectralGrid(n=18)
        kernel = coulomb.build_gk(grid)
        field = RealField(grid=grid, values=np.ones(grid.shape))
        with pytest.raises(DomainError):
            coulomb.brute_force_d_k(kernel, field, field)

    def test_extension_is_extensive(self):
        f = self._density()
        super_grid = self.grid.supercell(2)
        extended = spectral.periodic_extension(f, super_grid)
        super_kernel = coulomb.build_gk(super_grid)
        assert coulomb.d_k(super_kernel, extended, extended) == pytest.approx(
            8 * coulomb.d_k(self.kernel, f, f), rel=1e-10
        )

    def test_unequal_charges_weight_potential(self):
        cell = CellSpec(nuclei=(Nucleus(position=(0.25, 0.25, 0.25), charge=1.0),
                                Nucleus(position=(0.75, 0.75, 0.75), charge=2.0)))
        grid = SpectralGrid(n=8, cell=cell)
        kernel = coulomb.build_gk(grid)
        potential = coulomb.external_potential(kernel, cell).values
        assert potential[6, 6, 6] > potential[2, 2, 2]


class TestPublicHelpersDocumented:
    """Raw-sample Coulomb helpers carry Args/Returns docstrings"""

    @pytest.mark.parametrize("helper", [coulomb.d_k_values, coulomb.hartree_potential_values])
    def test_docstring_sections(self, helper):
        assert helper.__doc__ is not None
        assert "Args:" in helper.__doc__
        assert "Returns:" in helper.__doc__
