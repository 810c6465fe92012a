import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
import statsmodels.api as sm
from scipy import integrate, optimize
from scipy.linalg import eigh_tridiagonal

from src.models.radial_models import (
    MassCurvePoint, OperatorBranch, PowerLawFit, RadialControls, RadialSolution,
)
from src.services.exceptions import (
    BisectionCollapseError, DomainError, MassOutOfReachError, NoSolutionInWindowError, TFDWError,
)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi
# an undershoot whose turning point stays above this fraction of Q(0) does not isolate the decay
COLLAPSE_TOL = 1e-4


def mu_star(c_tf: float) -> float:
    """Upper end 15 / (64 c_TF) of the existence window"""
    if c_tf <= 0:
        raise DomainError("c_tf must be positive")
    return 15.0 / (64.0 * c_tf)


def nonlinearity(y, mu: float, c_tf: float):
    """F_mu(y) = -c_TF y^{7/3} + y^{5/3} - mu y, extended as an odd function"""
    a = np.abs(y)
    return np.sign(y) * (-c_tf * a ** (7.0 / 3.0) + a ** (5.0 / 3.0)) - mu * y


def primitive(y, mu: float, c_tf: float):
    """G_mu(y) = -(3/10) c_TF y^{10/3} + (3/8) y^{8/3} - (mu/2) y^2"""
    a = np.abs(y)
    return -0.3 * c_tf * a ** (10.0 / 3.0) + 0.375 * a ** (8.0 / 3.0) - 0.5 * mu * a ** 2


def shooting_bracket(mu: float, c_tf: float) -> Tuple[float, float]:
    """(zeta, y_+): first positive root of G_mu and the positive zero of F_mu above it"""
    disc_g = 0.375 ** 2 - 0.6 * c_tf * mu
    disc_f = 1.0 - 4.0 * c_tf * mu
    if disc_g <= 0 or disc_f <= 0:
        raise NoSolutionInWindowError(f"mu={mu} is outside (0, {mu_star(c_tf)})")
    zeta = ((0.375 - np.sqrt(disc_g)) / (0.6 * c_tf)) ** 1.5
    y_plus = ((1.0 + np.sqrt(disc_f)) / (2.0 * c_tf)) ** 1.5
    return float(zeta), float(y_plus)


class _Shot:
    OVER = "over"
    UNDER = "under"
    DECAYED = "decayed"

    def __init__(self, q0, kind, radius, q_min, solution):
        self.q0 = q0
        self.kind = kind
        self.radius = radius
        self.q_min = q_min
        self.solution = solution


class RadialService:
    """Radial shooting for the ground state of -Delta Q + c_TF Q^{7/3} - Q^{5/3} = -mu Q"""

    def __init__(self, controls: Optional[RadialControls] = None):
        self.controls = controls or RadialControls()

    def r_max_rule(self, mu: float, controls: RadialControls) -> float:
        return max(controls.r_max_floor, controls.r_max_scale / np.sqrt(mu))

    def _integrate(self, q0: float, mu: float, c_tf: float, r_end: float, controls: RadialControls) -> _Shot:
        r0 = controls.r_start
        f0 = float(nonlinearity(q0, mu, c_tf))
        q_start = q0 - f0 * r0 ** 2 / 6.0
        dq_start = -f0 * r0 / 3.0

        def rhs(r, y):
            return [y[1], -r * nonlinearity(y[0] / r, mu, c_tf)]

        def crosses(r, y):
            return y[0]

        def turns(r, y):
            return y[1] * r - y[0]

        crosses.terminal = True
        crosses.direction = -1
        turns.terminal = True
        turns.direction = 1

        solution = integrate.solve_ivp(
            rhs, (r0, r_end), [r0 * q_start, q_start + r0 * dq_start],
            method="DOP853", rtol=controls.rtol, atol=controls.atol_factor * q0,
            events=(crosses, turns), dense_output=True,
        )
        if solution.t_events[0].size:
            return _Shot(q0, _Shot.OVER, float(solution.t_events[0][0]), 0.0, solution)
        if solution.t_events[1].size:
            r_turn = float(solution.t_events[1][0])
            q_min = float(solution.y_events[1][0][0] / r_turn)
            return _Shot(q0, _Shot.UNDER, r_turn, q_min, solution)
        q_end = float(solution.y[0, -1] / solution.t[-1])
        kind = _Shot.OVER if q_end > 0.5 * q0 else _Shot.DECAYED
        return _Shot(q0, kind, float(solution.t[-1]), abs(q_end), solution)

    def _bisect(self, mu: float, c_tf: float, controls: RadialControls) -> Tuple[_Shot, int]:
        lo, hi = shooting_bracket(mu, c_tf)
        r_end = 4.0 * self.r_max_rule(mu, controls)
        best = None
        steps = 0
        for steps in range(1, controls.max_bisections + 1):
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
            shot = self._integrate(mid, mu, c_tf, r_end, controls)
            if shot.kind == _Shot.DECAYED:
                best = shot
                break
            if shot.kind == _Shot.OVER:
                hi = mid
                continue
            lo = mid
            best = shot
            if shot.q_min < controls.window_tol * mid:
                break

        if best is None or best.q_min > COLLAPSE_TOL * best.q0:
            raise BisectionCollapseError(
                f"mu={mu}: Q(0) bracket [{lo!r}, {hi!r}] collapsed without isolating the decay"
            )
        logger.debug(f"mu={mu}: Q(0)={best.q0:.17g} after {steps} bisections, tail floor {best.q_min / best.q0:.2e}")
        return best, steps

    def shoot(self, mu: float, c_tf: float, controls: Optional[RadialControls] = None) -> RadialSolution:
        """Ground state Q_mu by bisection on Q(0), continued by A exp(-sqrt(mu) r) / r beyond matching"""
        controls = controls or self.controls
        if not 0 < mu < mu_star(c_tf):
            raise NoSolutionInWindowError(
                f"no ground state for mu={mu}: the window is (0, {mu_star(c_tf)}) for c_tf={c_tf}"
            )
        shot, steps = self._bisect(mu, c_tf, controls)
        q0 = shot.q0
        kappa = np.sqrt(mu)
        dense = shot.solution.sol

        # matching point: well before the turning point (or the end) of the accepted shot
        radii = np.arange(controls.r_start, shot.radius, controls.dr)
        q_sampled = dense(radii)[0] / radii
        below = np.nonzero(q_sampled <= controls.match_factor * shot.q_min)[0]
        r_match = float(radii[below[0]]) if below.size else float(radii[-1])
        q_match = float(dense(r_match)[0] / r_match)
        amplitude = q_match * r_match * np.exp(kappa * r_match)

        r_max = self.r_max_rule(mu, controls)
        doublings = 0
        while (r_max <= r_match
               or amplitude * np.exp(-kappa * r_max) / r_max >= controls.tail_tol * q0):
            if doublings >= controls.max_doublings:
                raise BisectionCollapseError(f"mu={mu}: tail did not decay within r_max={r_max}")
            r_max *= 2.0
            doublings += 1

        count = int(np.ceil(r_max / controls.dr))
        r = np.arange(count + 1) * controls.dr
        q = np.empty_like(r)
        dq = np.empty_like(r)

        core = (r > 0) & (r <= r_match)
        u, du = dense(np.maximum(r[core], controls.r_start))
        rc = r[core]
        q[core] = u / rc
        dq[core] = (du - u / rc) / rc
        f0 = float(nonlinearity(q0, mu, c_tf))
        q[0], dq[0] = q0, 0.0
        series = core & (r < controls.r_start)
        q[series] = q0 - f0 * r[series] ** 2 / 6.0
        dq[series] = -f0 * r[series] / 3.0
        tail = r > r_match
        rt = r[tail]
        q[tail] = amplitude * np.exp(-kappa * rt) / rt
        dq[tail] = -amplitude * np.exp(-kappa * rt) * (kappa * rt + 1.0) / rt ** 2

        mass = FOUR_PI * integrate.simpson(r ** 2 * q ** 2, x=r)
        gradient = FOUR_PI * integrate.simpson(r ** 2 * dq ** 2, x=r)
        potential = FOUR_PI * integrate.simpson(
            r ** 2 * (0.6 * c_tf * q ** (10.0 / 3.0) - 0.75 * q ** (8.0 / 3.0)), x=r
        )
        pohozaev_rhs = 3.0 * FOUR_PI * integrate.simpson(r ** 2 * primitive(q, mu, c_tf), x=r)
        nehari_rhs = FOUR_PI * integrate.simpson(r ** 2 * nonlinearity(q, mu, c_tf) * q, x=r)

        solution = RadialSolution(
            c_tf=c_tf,
            mu=mu,
            r_grid=r,
            q_values=q,
            q_prime=dq,
            q0=q0,
            match_radius=r_match,
            mass=float(mass),
            energy_j=float(gradient + potential),
            pohozaev_residual=float(abs(0.5 * gradient - pohozaev_rhs) / (0.5 * gradient)),
            nehari_residual=float(abs(gradient - nehari_rhs) / gradient),
            decay_rate=self._decay_rate(r, q, mu, r_match),
            bisections=steps,
        )
        logger.info(
            f"Shot mu={mu:.6g} (c_tf={c_tf:g}): Q0={q0:.12g}, M={solution.mass:.10g}, "
            f"J={solution.energy_j:.10g}, pohozaev={solution.pohozaev_residual:.2e}"
        )
        return solution

    @staticmethod
    def _decay_rate(r: np.ndarray, q: np.ndarray, mu: float, r_match: float) -> float:
        """
        Exponential rate of r Q(r) on the integrated core where Q^{2/3} << mu

        The fit stops a decade above Q(r_match) so that the growing mode left by the
        bisection stays negligible; without such a window it falls back to the tail.
        """
        q_match = float(np.interp(r_match, r, q))
        inside = (r > 0) & (r <= r_match) & (q >= 10.0 * q_match)
        for ratio in (1e-2, 3e-2, 1e-1):
            window = inside & (q ** (2.0 / 3.0) <= ratio * mu)
            if np.count_nonzero(window) >= 5:
                break
        else:
            window = r > r_match
        slope, _ = np.polyfit(r[window], np.log(r[window] * q[window]), 1)
        return float(-slope)

    def mass_curve(
        self,
        c_tf: float,
        mu_list: Sequence[float],
        controls: Optional[RadialControls] = None,
        workers: int = 1,
    ) -> List[MassCurvePoint]:
        """(mu, M, J) rows sorted by mu; failed points are logged and skipped"""
        controls = controls or self.controls
        mus = sorted(float(mu) for mu in mu_list)
        jobs = [(mu, c_tf, controls) for mu in mus]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_mass_point, jobs))
        else:
            rows = [_mass_point(job) for job in jobs]
        points = [row for row in rows if row is not None]
        if len(points) < len(mus):
            logger.warning(f"Mass curve: {len(mus) - len(points)} of {len(mus)} points failed")
        return points

    def solve_for_mass(
        self,
        lam: float,
        c_tf: float,
        controls: Optional[RadialControls] = None,
        curve: Optional[Sequence[MassCurvePoint]] = None,
    ) -> RadialSolution:
        """Q_mu with M(mu) = lambda; J_R3(lambda) is its energy_j"""
        if lam <= 0:
            raise DomainError("mass must be positive")
        controls = controls or self.controls
        top = mu_star(c_tf)
        points = list(curve) if curve else self.mass_curve(c_tf, default_mu_grid(c_tf, 24), controls)
        if not points:
            raise MassOutOfReachError("the mass curve could not be computed")

        while points[0].mass > lam:
            mu = points[0].mu / 4.0
            if mu < 1e-12 * top:
                raise MassOutOfReachError(f"mass {lam} is below every computable M(mu)")
            points.insert(0, _require_point(self, mu, c_tf, controls))
        if points[-1].mass < lam:
            raise MassOutOfReachError(
                f"mass {lam} exceeds the largest computable M={points[-1].mass:.6g} "
                f"at mu={points[-1].mu:.6g}; raise r_max or the resolution"
            )

        masses = np.array([p.mass for p in points])
        monotone = bool(np.all(np.diff(masses) > 0))
        brackets = [
            (points[i].mu, points[i + 1].mu)
            for i in range(len(points) - 1)
            if (points[i].mass - lam) * (points[i + 1].mass - lam) <= 0
        ]
        if not monotone:
            logger.warning("Mass curve is not monotone: scanning every crossing of M(mu) = lambda")

        candidates = []
        for a, b in brackets:
            cache = {}

            def residual(mu):
                solution = self.shoot(mu, c_tf, controls)
                cache["last"] = solution
                return solution.mass - lam

            root = optimize.brentq(residual, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            solution = cache["last"] if cache["last"].mu == root else self.shoot(root, c_tf, controls)
            candidates.append(solution)
            if monotone:
                break

        best = min(candidates, key=lambda s: s.energy_j)
        if not monotone:
            best = best.model_copy(update={"mass_curve_anomaly": True})
        logger.info(f"Solved M(mu)={lam:g}: mu={best.mu:.12g}, J={best.energy_j:.12g}")
        return best


def _mass_point(job) -> Optional[MassCurvePoint]:
    mu, c_tf, controls = job
    try:
        solution = RadialService(controls).shoot(mu, c_tf)
    except TFDWError as e:
        logger.warning(f"Mass curve point mu={mu} failed: {e}")
        return None
    return MassCurvePoint(mu=mu, mass=solution.mass, energy_j=solution.energy_j)


def _require_point(service: RadialService, mu: float, c_tf: float, controls: RadialControls) -> MassCurvePoint:
    solution = service.shoot(mu, c_tf, controls)
    return MassCurvePoint(mu=mu, mass=solution.mass, energy_j=solution.energy_j)


def default_mu_grid(c_tf: float, count: int = 40, low: float = 0.02, high: float = 0.98) -> List[float]:
    """Geometric spacing towards both ends of (low mu*, high mu*)"""
    top = mu_star(c_tf)
    half = count // 2
    lower = np.geomspace(low, 0.5, half, endpoint=False)
    upper = 1.0 - np.geomspace(0.5, 1.0 - high, count - half)
    return [float(x * top) for x in np.concatenate([lower, upper])]


def fit_mass_exponent(
    points: Sequence[MassCurvePoint],
    c_tf: float,
    end: str = "low",
    count: int = 5,
    correction: bool = True,
) -> PowerLawFit:
    """
    OLS fit of log M against log mu (end='low') or log(mu* - mu) (end='high')

    With `correction`, the first-order term mu (resp. mu* - mu) is added as a
    regressor so that the slope estimates the asymptotic exponent. On the default
    grid the plain log-log slope of the five points nearest mu* is still about
    -2.84; only the corrected slope lands within 0.1 of -3.
    """
    top = mu_star(c_tf)
    ordered = sorted(points, key=lambda p: p.mu)
    chosen = ordered[:count] if end == "low" else ordered[-count:]
    if len(chosen) < (3 if correction else 2):
        raise DomainError("not enough points for the exponent fit")
    mu = np.array([p.mu for p in chosen])
    x = mu if end == "low" else top - mu
    y = np.log([p.mass for p in chosen])
    columns = [np.log(x), x] if correction else [np.log(x)]
    design = sm.add_constant(np.column_stack(columns), has_constant="add")
    fit = sm.OLS(y, design).fit()
    return PowerLawFit(
        end=end,
        slope=float(fit.params[1]),
        slope_stderr=float(fit.bse[1]) if np.isfinite(fit.bse[1]) else 0.0,
        prefactor=float(np.exp(fit.params[0])),
        correction=float(fit.params[2]) if correction else None,
        points=len(chosen),
    )


def s_functional(r: np.ndarray, rho: np.ndarray, z: float) -> float:
    """(1/2) int int rho rho / |x - y| - z int rho / |x| for a radial density on a uniform grid"""
    inner = integrate.cumulative_trapezoid(r ** 2 * rho, r, initial=0.0)
    first = integrate.cumulative_trapezoid(r * rho, r, initial=0.0)
    outer = first[-1] - first
    with np.errstate(divide="ignore", invalid="ignore"):
        enclosed = np.where(r > 0, inner / np.where(r > 0, r, 1.0), 0.0)
    phi = FOUR_PI * (enclosed + outer)
    hartree = 0.5 * FOUR_PI * integrate.trapezoid(r ** 2 * rho * phi, r)
    attraction = FOUR_PI * integrate.trapezoid(r * rho, r)
    return float(hartree - z * attraction)


def s_lambda(sol: RadialSolution, z: float = 1.0) -> float:
    """S for rho = Q^2 and point charge z"""
    if z <= 0:
        raise DomainError("charge must be positive")
    return s_functional(sol.r_grid, sol.density, z)


def _radial_potential(sol: RadialSolution, which: OperatorBranch) -> np.ndarray:
    q = sol.q_values
    if OperatorBranch(which) is OperatorBranch.PLUS:
        return 7.0 / 3.0 * sol.c_tf * q ** (4.0 / 3.0) - 5.0 / 3.0 * q ** (2.0 / 3.0) + sol.mu
    return sol.c_tf * q ** (4.0 / 3.0) - q ** (2.0 / 3.0) + sol.mu


def _tridiagonal(sol: RadialSolution, ell: int, which: OperatorBranch):
    r = sol.r_grid[1:-1]
    h = sol.r_grid[1] - sol.r_grid[0]
    diagonal = 2.0 / h ** 2 + ell * (ell + 1) / r ** 2 + _radial_potential(sol, which)[1:-1]
    off = np.full(r.size - 1, -1.0 / h ** 2)
    return diagonal, off


def linearized_spectrum(sol: RadialSolution, ell: int, which: OperatorBranch, count: int = 4) -> List[float]:
    """Lowest eigenvalues of L^{+/-}_{mu,ell} in u = r phi with Dirichlet ends"""
    if ell < 0:
        raise DomainError("angular momentum must be nonnegative")
    diagonal, off = _tridiagonal(sol, ell, which)
    values = eigh_tridiagonal(diagonal, off, eigvals_only=True, select="i", select_range=(0, count - 1))
    return [float(v) for v in values]


def apply_radial_operator(sol: RadialSolution, ell: int, which: OperatorBranch, phi: np.ndarray) -> np.ndarray:
    """Discrete L_{mu,ell} applied to u = r phi on the interior points; returns the u-variable image"""
    diagonal, off = _tridiagonal(sol, ell, which)
    u = sol.r_grid[1:-1] * phi[1:-1]
    image = diagonal * u
    image[:-1] += off * u[1:]
    image[1:] += off * u[:-1]
    return image


# Global radial service instance
radial_service = RadialService()
