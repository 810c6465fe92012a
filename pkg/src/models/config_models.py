from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.radial_models import RadialControls
from src.models.scan_models import SYMMETRY_TOLERANCE
from src.models.tfdw_models import CellSpec, MinimizeMode, MinimizeOptions, ModelParams

Subcommand = Literal["periodic-min", "radial", "mass-curve", "scan-symmetry", "critical-c", "asymptotics"]


class RunConfig(BaseModel):
    """Effective configuration of one command-line run"""

    model_config = ConfigDict(frozen=True)

    params: ModelParams = Field(default_factory=ModelParams)
    cell: CellSpec = Field(default_factory=CellSpec)
    n: int = Field(16, ge=8, description="Grid points per axis of the unit cell")
    mode: MinimizeMode = MinimizeMode.FULL
    opts: MinimizeOptions = Field(default_factory=MinimizeOptions)
    radial: RadialControls = Field(default_factory=RadialControls)

    supercell: int = Field(2, ge=1, description="Supercell multiplier N of the symmetry scans")
    c_list: List[float] = Field(default_factory=lambda: [0.0], description="Dirac constants to sweep")
    mu: Optional[float] = Field(None, gt=0, description="Multiplier of a single radial solve")
    mass: Optional[float] = Field(None, gt=0, description="Target mass of a radial solve (overrides mu)")
    z: float = Field(1.0, gt=0, description="Point charge of the second-order coefficient S")
    mu_list: Optional[List[float]] = Field(None, description="Explicit mu grid of the mass curve")
    mu_points: int = Field(40, ge=2, description="Size of the default mu grid")
    spectrum_count: int = Field(4, ge=1, description="Eigenvalues reported per radial sector")
    bracket: Tuple[float, float] = Field((16.0, 32.0), description="(c_lo, c_hi) of the critical search")
    tol_c: float = Field(0.05, gt=0)
    tol_sym: float = Field(SYMMETRY_TOLERANCE, gt=0)
    n_max: int = Field(128, ge=8, description="Grid cap of the asymptotics policy")

    seed: int = 0
    output_dir: str = "results"
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_lists(self):
        if sorted(self.c_list) != list(self.c_list):
            raise ValueError("c_list must be sorted")
        if self.bracket[0] >= self.bracket[1]:
            raise ValueError("bracket must satisfy c_lo < c_hi")
        if self.n % 2:
            raise ValueError("n must be even")
        return self


class RunSummary(BaseModel):
    """JSON summary written by every subcommand"""

    subcommand: str
    config: RunConfig
    versions: Dict[str, str] = Field(default_factory=dict, description="Package versions of the run")
    seed: int
    converged: bool = True
    error: Optional[str] = Field(None, description="Failure message when the run did not complete")
    results: Dict[str, Any] = Field(default_factory=dict, description="Scalar results")
