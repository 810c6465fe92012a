import numpy as np
import pytest

from src.models.tfdw_models import (
    CellSpec, Certificate, EnergyBreakdown, MinimizeMode, MinimizeOptions, MinimizeResult, ModelParams,
    RealField, SpectralGrid,
)
from src.services import coulomb_service as coulomb
from src.services import spectral_service as spectral
from src.services.energy_service import EnergyModel, energy_lower_bound
from src.services.exceptions import AllStartsFailedError, GridMismatchError
from src.services.minimizer_service import MinimizerService, _Descent, uniqueness_certificate


class TestInitialGuesses:
    """Labelled starts of the multi-start descent"""

    def setup_method(self):
        self.service = MinimizerService()
        self.params = ModelParams(lam=2.0)
        self.grid = SpectralGrid(n=8)

    def test_default_labels(self):
        opts = MinimizeOptions(n_starts=4)
        labels = [label for label, _ in self.service.initial_guesses(self.params, self.grid, opts)]
        assert labels == ["constant", "bump-0", "random-0", "random-1"]

    def test_starts_are_normalized_and_positive(self):
        opts = MinimizeOptions(n_starts=5)
        for label, values in self.service.initial_guesses(self.params, self.grid, opts):
            assert np.all(values > 0), label
            assert np.sum(values ** 2) * self.grid.dv == pytest.approx(2.0, rel=1e-12)

    def test_random_starts_depend_on_seed(self):
        first = dict(self.service.initial_guesses(self.params, self.grid, MinimizeOptions(seed=1)))
        again = dict(self.service.initial_guesses(self.params, self.grid, MinimizeOptions(seed=1)))
        other = dict(self.service.initial_guesses(self.params, self.grid, MinimizeOptions(seed=2)))
        assert np.array_equal(first["random-0"], again["random-0"])
        assert not np.allclose(first["random-0"], other["random-0"])

    def test_extra_start_on_other_grid_rejected(self):
        foreign = RealField(grid=SpectralGrid(n=10), values=np.ones((10, 10, 10)))
        with pytest.raises(GridMismatchError):
            self.service.initial_guesses(self.params, self.grid, MinimizeOptions(), [("foreign", foreign)])


class TestMinimizerService:
    """Projected descent on the mass sphere"""

    def setup_method(self):
        self.service = MinimizerService()
        self.params = ModelParams(c_tf=1.0, c_dirac=0.0, c_w=1.0, lam=1.0)
        self.cell = CellSpec()
        self.grid = SpectralGrid(n=16, cell=self.cell)
        self.opts = MinimizeOptions(tol_residual=1e-8, n_starts=4)

    def test_cell_must_match_grid(self):
        with pytest.raises(GridMismatchError):
            self.service.minimize(self.params, CellSpec(edge=2.0), self.grid, self.opts)

    def test_all_starts_failed(self, mocker):
        values = np.ones(self.grid.shape)
        failed = (values, float("nan"), float("nan"), 1, False, [float("nan")])
        mocker.patch("src.services.minimizer_service._Descent.run", return_value=failed)
        with pytest.raises(AllStartsFailedError):
            self.service.minimize(self.params, self.cell, self.grid, self.opts)

    def test_lowest_converged_start_wins_ties_go_first(self, mocker):
        values = spectral.normalize(self.grid, np.ones(self.grid.shape), 1.0)
        mock_run = mocker.patch("src.services.minimizer_service._Descent.run", side_effect=[
            (values, -1.0, 1e-9, 3, True, [-1.0]),
            (values, -2.0, 1e-3, 3, False, [-2.0]),
            (values, -1.5, 1e-9, 3, True, [-1.5]),
            (values, -1.5, 1e-9, 3, True, [-1.5]),
        ])
        result = self.service.minimize(self.params, self.cell, self.grid, self.opts)
        assert result.start_label == "random-0"
        assert result.converged
        assert len(result.starts) == 4
        assert mock_run.call_count == 4

    @pytest.mark.integration
    def test_converges_on_mass_sphere(self):
        result = self.service.minimize(self.params, self.cell, self.grid, self.opts)
        assert result.converged
        assert result.residual <= 1e-8
        assert result.field.mass == pytest.approx(1.0, rel=1e-12)
        assert np.all(result.field.values >= 0)
        trace = np.array(result.energy_trace)
        assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))
        assert uniqueness_certificate(result, self.params) is Certificate.CERTIFIED

    @pytest.mark.integration
    @pytest.mark.parametrize("c", [0.0, 1.0])
    def test_random_start_reaches_tight_tolerance(self, c):
        params = self.params.with_dirac(c)
        opts = MinimizeOptions(tol_residual=1e-8, n_starts=3, max_iters=500)
        start = dict(self.service.initial_guesses(params, self.grid, opts))["random-0"]
        descent = _Descent(EnergyModel(params, self.grid), 1.0, opts)
        w, energy, residual, iterations, converged, trace = descent.run(start, "random-0")
        assert converged
        assert residual <= 1e-8
        assert iterations < 500
        trace = np.array(trace)
        assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))
        assert np.sum(w ** 2) * self.grid.dv == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.integration
    def test_iterates_respect_full_lower_bound(self):
        params = self.params.with_dirac(2.0)
        kernel = coulomb.build_gk(self.grid)
        c_fit = float(coulomb.external_potential(kernel, self.cell).values.max())
        bound = energy_lower_bound(params, c_fit)
        result = self.service.minimize(params, self.cell, self.grid, self.opts, kernel=kernel)
        assert len(result.energy_trace) > 1
        assert all(energy >= bound for energy in result.energy_trace)
        for start in result.starts:
            assert start.energy >= bound

    @pytest.mark.integration
    def test_energy_strictly_decreases_with_exchange(self):
        opts = MinimizeOptions(tol_residual=1e-8, n_starts=2)
        kernel = coulomb.build_gk(self.grid)
        energies = [
            self.service.minimize(self.params.with_dirac(c), self.cell, self.grid, opts, kernel=kernel).energy
            for c in (0.0, 1.0, 2.0)
        ]
        assert energies[0] > energies[1] > energies[2]

    @pytest.mark.integration
    def test_starts_agree_without_exchange(self):
        result = self.service.minimize(self.params, self.cell, self.grid, self.opts)
        fields = [s.field.values for s in result.starts if s.converged]
        assert len(fields) == 4
        for values in fields[1:]:
            distance = np.sqrt(np.sum((values - fields[0]) ** 2) * self.grid.dv)
            assert distance <= 1e-5

    @pytest.mark.integration
    def test_extension_start_is_already_critical(self):
        unit = self.service.minimize(self.params, self.cell, self.grid, self.opts)
        super_grid = self.grid.supercell(2)
        extension = spectral.periodic_extension(unit.field, super_grid)
        sup = self.service.minimize(
            self.params, super_grid.cell, super_grid, self.opts,
            kernel=coulomb.build_gk(super_grid),
            extra_starts=[("extension", extension)], include_defaults=False,
        )
        assert sup.start_label == "extension"
        assert sup.energy == pytest.approx(8 * unit.energy, rel=1e-8)
        assert sup.periodicity_defect <= 1e-6

    @pytest.mark.integration
    def test_effective_mode_respects_lower_bound(self):
        params = self.params.with_dirac(3.0)
        opts = MinimizeOptions(tol_residual=1e-7, n_starts=2)
        result = self.service.minimize(params, self.cell, self.grid, opts, mode=MinimizeMode.EFFECTIVE)
        assert result.breakdown.hartree == 0.0
        assert result.energy >= -15.0 / 64.0 * 9.0

    def test_certificate_threshold(self):
        params = ModelParams(c_tf=1.0, c_dirac=1.0)
        values = np.full(self.grid.shape, 0.5)
        values[0, 0, 0] = 2.0
        result = MinimizeResult(
            field=RealField(grid=self.grid, values=values),
            breakdown=EnergyBreakdown(kinetic=0, tf=0, dirac=0, hartree=0, external=0),
            mu=0.0, residual=0.0, iterations=0, start_label="constant",
        )
        assert uniqueness_certificate(result, params) is Certificate.NOT_CERTIFIED
        assert uniqueness_certificate(result, ModelParams(c_tf=1.0, c_dirac=0.5)) is Certificate.CERTIFIED


@pytest.mark.slow
class TestWeizsaeckerLimit:
    """Acceptance-scale check of the exchange-free uniqueness and extension"""

    def test_unique_minimizer_and_extension_on_32_grid(self):
        service = MinimizerService()
        params = ModelParams(c_tf=1.0, c_dirac=0.0, c_w=1.0, lam=1.0)
        grid = SpectralGrid(n=32)
        opts = MinimizeOptions(tol_residual=1e-8, n_starts=4)
        result = service.minimize(params, grid.cell, grid, opts)
        fields = [s.field.values for s in result.starts]
        for values in fields[1:]:
            assert np.sqrt(np.sum((values - fields[0]) ** 2) * grid.dv) <= 1e-6

        super_grid = grid.supercell(2)
        extension = spectral.periodic_extension(result.field, super_grid)
        sup = service.minimize(params, super_grid.cell, super_grid, opts, extra_starts=[("extension", extension)])
        assert sup.energy == pytest.approx(8 * result.energy, rel=1e-8)
        assert sup.periodicity_defect <= 1e-6
