from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field

# Transition seen with pseudo-potentials on a BCC lithium cell (c_W = 0.186).
# Kept for reference only; the point-charge cubic model is not expected to match.
REFERENCE_SYMMETRIC_THREE_QUARTER_C = 2.474
REFERENCE_BROKEN_THREE_QUARTER_C = 2.482

SYMMETRY_TOLERANCE = 1e-7


class ScanRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float = Field(..., description="Dirac constant")
    e_single: float = Field(..., description="E_{K,lambda}(c)")
    e_super: float = Field(..., description="E_{N*K,N^3 lambda}(c)")
    gain: float = Field(
        ..., description="(e_super - N^3 e_single) / (N^3 |e_single|); negative when the supercell wins"
    )
    periodicity_defect: float
    concentration_center: Tuple[float, float, float]
    nearest_nucleus_distance: float
    supercell_start: str = Field("", description="Start label of the supercell minimizer")
    converged: bool = True

    def is_broken(self, tol_sym: float = SYMMETRY_TOLERANCE) -> bool:
        return self.gain < -tol_sym


class CriticalResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_star: float = Field(..., description="Midpoint of the final bracket")
    bracket: Tuple[float, float]
    trace: List[ScanRow] = Field(default_factory=list, description="Every evaluated c in order")
    tol_sym: float = SYMMETRY_TOLERANCE


class AsymptoticsRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float
    n: int = Field(..., description="Grid points per axis used for this c")
    energy: float = Field(..., description="E_{K,lambda}(c)")
    scaled_energy: float = Field(..., description="c^-2 E")
    j_value: float = Field(..., description="J_R3(lambda)")
    residual: float = Field(..., description="|c^-2 E - J_R3(lambda)|")
    first_order: float = Field(..., description="(E - c^2 J) / c")
    s_value: float = Field(..., description="S(lambda) from radial quadrature")
    scaling_gap: float = Field(..., description="Relative gap of the dilation identity on the minimizer")
    under_resolved: bool = False
    converged: bool = True


class ConcentrationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: Tuple[float, float, float]
    distance_to_nearest_nucleus: float
    nearest_nucleus: Tuple[float, float, float]
    nearest_charge: float


class TranslateFamily(BaseModel):
    model_config = ConfigDict(frozen=True)

    energies: List[float]
    centers: List[Tuple[float, float, float]]
    max_mismatch: float = Field(
        ..., description="max relative L2 distance after translating each minimizer onto the first"
    )
    distinct: int = Field(..., description="Number of pairwise distinct minimizers")
