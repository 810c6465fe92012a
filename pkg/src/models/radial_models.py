from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class RadialControls(BaseModel):
    """Numerical controls of the radial shooting solver"""

    model_config = ConfigDict(frozen=True)

    dr: float = Field(0.02, gt=0, description="Spacing of the output radial grid")
    r_start: float = Field(1e-4, gt=0, description="Radius where the regular-center series hands over")
    rtol: float = Field(1e-12, gt=0, description="Relative tolerance of the integrator")
    atol_factor: float = Field(1e-16, gt=0, description="Absolute tolerance relative to Q(0)")
    window_tol: float = Field(
        1e-8, gt=0, lt=1,
        description="The undershoot branch must decay below window_tol * Q(0) before turning up"
    )
    match_factor: float = Field(
        100.0, gt=1,
        description="Matching point: where the shot is match_factor times its turning-point minimum"
    )
    tail_tol: float = Field(1e-10, gt=0, description="Q(r_max) must be below tail_tol * Q(0)")
    r_max_floor: float = Field(30.0, gt=0, description="Lower bound of the r_max rule")
    r_max_scale: float = Field(12.0, gt=0, description="r_max >= r_max_scale / sqrt(mu)")
    max_bisections: int = Field(200, ge=10, description="Cap on Q(0) bisection steps")
    max_doublings: int = Field(6, ge=0, description="Cap on automatic r_max doublings")


class RadialSolution(BaseModel):
    """Ground state Q_mu of the effective Euler-Lagrange equation on R^3"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    c_tf: float
    mu: float = Field(..., gt=0, description="Multiplier in (0, mu*)")
    r_grid: np.ndarray = Field(..., description="Uniform radii 0 = r_0 < ... < r_M = r_max")
    q_values: np.ndarray = Field(..., description="Q(r) samples")
    q_prime: np.ndarray = Field(..., description="Q'(r) samples")
    q0: float = Field(..., description="Shooting value Q(0)")
    match_radius: float = Field(..., description="Radius beyond which Q is the asymptotic tail")
    mass: float = Field(..., description="M(mu) = 4 pi int r^2 Q^2 dr")
    energy_j: float = Field(..., description="J_R3(Q)")
    pohozaev_residual: float
    nehari_residual: float
    decay_rate: float = Field(..., description="Fitted exponential rate of Q at large r")
    bisections: int = 0
    mass_curve_anomaly: bool = Field(
        False, description="Set when the mass inversion met a non-monotone mass curve"
    )

    @property
    def r_max(self) -> float:
        return float(self.r_grid[-1])

    @property
    def density(self) -> np.ndarray:
        return self.q_values ** 2


class MassCurvePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float
    mass: float
    energy_j: float


class PowerLawFit(BaseModel):
    """log-log fit of the mass curve near one end of (0, mu*)"""

    model_config = ConfigDict(frozen=True)

    end: str = Field(..., description="'low' (mu -> 0) or 'high' (mu -> mu*)")
    slope: float
    slope_stderr: float
    prefactor: float = Field(..., description="Fitted constant C (low end) or C' (high end)")
    correction: Optional[float] = Field(None, description="Coefficient of the first-order correction")
    points: int


class OperatorBranch(str, Enum):
    PLUS = "plus"
    MINUS = "minus"


class SpectrumReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    ell: int
    which: OperatorBranch
    eigenvalues: List[float]
