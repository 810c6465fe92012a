import numpy as np
import pytest

from src.models.tfdw_models import CellSpec, MinimizeMode, ModelParams, RealField, SpectralGrid
from src.services import coulomb_service as coulomb
from src.services import spectral_service as spectral
from src.services.energy_service import (
    EnergyModel, apply_hamiltonian, effective_energy, effective_lower_bound, energy_breakdown,
    energy_lower_bound, euler_multiplier, scaling_identity,
)
from src.services.exceptions import DomainError, GridMismatchError


def _smooth_positive(grid: SpectralGrid, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    k2 = spectral.squared_wavenumbers(grid)
    noise = spectral.apply_multiplier(rng.standard_normal(grid.shape), np.exp(-0.02 * k2))
    return np.exp(noise / (noise.std() + 1e-300))


class TestEnergyFunctional:
    """Energy terms, Hamiltonian and Euler-Lagrange multiplier"""

    def setup_method(self):
        self.params = ModelParams(c_tf=1.0, c_dirac=1.5, c_w=1.0, lam=1.0)
        self.grid = SpectralGrid(n=16)
        self.kernel = coulomb.build_gk(self.grid)
        self.model = EnergyModel(self.params, self.grid, self.kernel)

    def test_breakdown_total_matches_energy(self):
        w = _smooth_positive(self.grid, 0)
        breakdown = self.model.breakdown(w)
        assert breakdown.total == pytest.approx(self.model.energy(w), rel=1e-14)
        assert breakdown.kinetic > 0
        assert breakdown.tf > 0
        assert breakdown.dirac < 0
        assert breakdown.hartree > 0
        assert breakdown.external < 0

    def test_constant_field_breakdown(self):
        params = ModelParams(c_tf=1.0, c_dirac=1.0, c_w=1.0, lam=1.0)
        w = RealField(grid=self.grid, values=np.ones(self.grid.shape))
        breakdown = energy_breakdown(w, params, self.kernel)
        assert breakdown.kinetic == pytest.approx(0.0, abs=1e-12)
        assert breakdown.tf == pytest.approx(0.6, rel=1e-12)
        assert breakdown.dirac == pytest.approx(-0.75, rel=1e-12)
        gk_integral = spectral.integrate(self.grid, self.kernel.gk_field.values)
        assert breakdown.hartree + breakdown.external == pytest.approx(-0.5 * gk_integral, rel=1e-10)

    def test_effective_mode_drops_coulomb(self):
        w = RealField(grid=self.grid, values=_smooth_positive(self.grid, 1))
        breakdown = energy_breakdown(w, self.params, mode=MinimizeMode.EFFECTIVE)
        assert breakdown.hartree == 0.0
        assert breakdown.external == 0.0
        assert effective_energy(w, self.params) == pytest.approx(breakdown.total)

    @pytest.mark.parametrize("n", [16, 32])
    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_consistency(self, n, seed):
        grid = SpectralGrid(n=n)
        model = EnergyModel(self.params, grid, coulomb.build_gk(grid))
        w = _smooth_positive(grid, seed)
        delta = _smooth_positive(grid, seed + 100)
        predicted = 2.0 * spectral.integrate(grid, model.hamiltonian(w) * delta)

        errors = []
        for h in (1e-3, 1e-4, 1e-5, 1e-6):
            finite = (model.energy(w + h * delta) - model.energy(w - h * delta)) / (2.0 * h)
            errors.append(abs(finite - predicted) / abs(predicted))
        assert min(errors) <= 1e-6

    def test_multiplier_annihilates_projection(self):
        w = RealField(grid=self.grid, values=_smooth_positive(self.grid, 2))
        mu = euler_multiplier(w, self.params, self.kernel)
        hw = apply_hamiltonian(w, self.params, self.kernel)
        projection = spectral.inner(hw, w)
        assert projection + mu * w.mass == pytest.approx(0.0, abs=1e-10 * abs(projection))

    def test_multiplier_of_zero_field(self):
        w = RealField(grid=self.grid, values=np.zeros(self.grid.shape))
        with pytest.raises(DomainError):
            euler_multiplier(w, self.params, self.kernel)

    def test_kernel_from_other_grid_rejected(self):
        w = RealField(grid=SpectralGrid(n=8), values=np.ones((8, 8, 8)))
        with pytest.raises(GridMismatchError):
            energy_breakdown(w, self.params, self.kernel)

    def test_cell_mismatch_rejected(self):
        w = RealField(grid=self.grid, values=np.ones(self.grid.shape))
        with pytest.raises(GridMismatchError):
            energy_breakdown(w, self.params, cell=CellSpec(edge=3.0))

    def test_extension_energy_is_extensive(self):
        w = RealField(grid=self.grid, values=_smooth_positive(self.grid, 3))
        super_grid = self.grid.supercell(2)
        extended = spectral.periodic_extension(w, super_grid)
        unit = energy_breakdown(w, self.params, self.kernel).total
        sup = energy_breakdown(extended, self.params, coulomb.build_gk(super_grid)).total
        assert sup == pytest.approx(8 * unit, rel=1e-10)


class TestScalingAndBounds:
    """Dilation identity of the effective energy and a priori bounds"""

    def setup_method(self):
        self.params = ModelParams(c_tf=1.0, c_w=1.0, lam=1.0)
        self.grid = SpectralGrid(n=16, cell=CellSpec(edge=1.0))

    @pytest.mark.parametrize("c", [2.0, 4.0, 8.0])
    def test_scaling_identity(self, c):
        rng = np.random.default_rng(int(c))
        v = RealField(grid=self.grid, values=rng.random(self.grid.shape))
        check = scaling_identity(v, self.params, c)
        assert check.relative_gap <= 1e-10

    def test_scaling_identity_rejects_nonpositive_factor(self):
        v = RealField(grid=self.grid, values=np.ones(self.grid.shape))
        with pytest.raises(DomainError):
            scaling_identity(v, self.params, 0.0)

    @pytest.mark.parametrize("c", [0.5, 2.0, 6.0])
    def test_effective_energy_above_lower_bound(self, c):
        params = self.params.with_dirac(c)
        values = spectral.normalize(self.grid, _smooth_positive(self.grid, 7), params.lam)
        w = RealField(grid=self.grid, values=values)
        assert effective_energy(w, params) >= effective_lower_bound(params)

    def test_lower_bound_values(self):
        params = ModelParams(c_tf=2.0, c_dirac=4.0, lam=3.0)
        assert effective_lower_bound(params) == pytest.approx(-15.0 / 64.0 * 1.5 * 16.0)
        assert energy_lower_bound(params, 0.5) == pytest.approx(effective_lower_bound(params) - 1.5)
