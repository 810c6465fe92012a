from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class ModelParams(BaseModel):
    """Physical constants of the TFDW energy functional"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    c_tf: float = Field(
        1.0,
        gt=0,
        examples=[1.0],
        description="Thomas-Fermi constant in front of (3/5)|w|^{10/3}"
    )
    c_dirac: float = Field(
        0.0,
        ge=0,
        examples=[2.0],
        description="Dirac constant c in front of -(3/4)|w|^{8/3}"
    )
    c_w: float = Field(
        1.0,
        gt=0,
        examples=[1.0, 0.186],
        description="Weizsaecker coefficient of the gradient term"
    )
    lam: float = Field(
        1.0,
        gt=0,
        alias="lambda",
        examples=[1.0],
        description="Mass constraint per unit cell"
    )
    q: int = Field(
        1,
        ge=1,
        examples=[1, 2],
        description="Number of spin states (only used by the Dirac reference constant)"
    )

    def with_dirac(self, c_dirac: float) -> "ModelParams":
        return self.model_copy(update={"c_dirac": float(c_dirac)})

    def with_mass(self, lam: float) -> "ModelParams":
        return self.model_copy(update={"lam": float(lam)})


class Nucleus(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Tuple[float, float, float] = Field(
        (0.5, 0.5, 0.5),
        description="Fractional coordinates in [0,1)^3 of the unit cell"
    )
    charge: float = Field(1.0, gt=0, description="Nuclear charge z_i")

    @field_validator("position")
    @classmethod
    def _check_fractional(cls, value):
        if any(not (0.0 <= x < 1.0) for x in value):
            raise ValueError(f"nucleus position {value} is not inside [0,1)^3")
        return tuple(float(x) for x in value)


class CellSpec(BaseModel):
    """Unit cell K of side `edge`, replicated `multiplier` times per axis"""

    model_config = ConfigDict(frozen=True)

    edge: float = Field(1.0, gt=0, description="Unit-cell side length L")
    multiplier: int = Field(1, ge=1, description="Supercell multiplier N (cell N*K)")
    nuclei: Tuple[Nucleus, ...] = Field(
        default_factory=lambda: (Nucleus(),),
        description="Nuclei of one unit cell; replicated to all N^3 unit cells"
    )

    @model_validator(mode="after")
    def _check_nuclei(self):
        if not self.nuclei:
            raise ValueError("a cell needs at least one nucleus")
        positions = [n.position for n in self.nuclei]
        if len(set(positions)) != len(positions):
            raise ValueError("nucleus positions must be distinct")
        return self

    @property
    def length(self) -> float:
        """Side of the computational box N*L"""
        return self.edge * self.multiplier

    @property
    def volume(self) -> float:
        return self.length ** 3

    @property
    def unit_volume(self) -> float:
        return self.edge ** 3

    @property
    def charges(self) -> np.ndarray:
        return np.array([n.charge for n in self.nuclei], dtype=float)

    @property
    def total_charge(self) -> float:
        return float(self.charges.sum())

    def unit_positions(self) -> np.ndarray:
        """Cartesian positions of the nuclei of the first unit cell"""
        return np.array([n.position for n in self.nuclei], dtype=float) * self.edge

    def all_positions(self) -> np.ndarray:
        """Cartesian positions of every nucleus of the supercell, shape (N^3 * count, 3)"""
        base = self.unit_positions()
        n = self.multiplier
        offsets = np.array(
            [(i, j, k) for i in range(n) for j in range(n) for k in range(n)], dtype=float
        ) * self.edge
        return (offsets[:, None, :] + base[None, :, :]).reshape(-1, 3)

    def all_charges(self) -> np.ndarray:
        return np.tile(self.charges, self.multiplier ** 3)

    def with_multiplier(self, multiplier: int) -> "CellSpec":
        return self.model_copy(update={"multiplier": int(multiplier)})

    def with_edge(self, edge: float) -> "CellSpec":
        return self.model_copy(update={"edge": float(edge)})


class SpectralGrid(BaseModel):
    """Uniform n^3 collocation grid on the box [0, N*L)^3"""

    model_config = ConfigDict(frozen=True)

    n: int = Field(32, ge=8, description="Points per axis (even)")
    cell: CellSpec = Field(default_factory=CellSpec)

    @field_validator("n")
    @classmethod
    def _check_even(cls, value):
        if value % 2:
            raise ValueError(f"grid size must be even, got {value}")
        return value

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def spacing(self) -> float:
        return self.cell.length / self.n

    @property
    def dv(self) -> float:
        return self.spacing ** 3

    @property
    def volume(self) -> float:
        return self.cell.volume

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def same_as(self, other: "SpectralGrid") -> bool:
        return self.n == other.n and self.cell == other.cell

    def supercell(self, multiplier: int) -> "SpectralGrid":
        """Grid of the N*K supercell with the same spacing as this unit-cell grid"""
        if self.cell.multiplier != 1:
            raise ValueError("supercell grids are built from a unit-cell grid")
        return SpectralGrid(n=self.n * multiplier, cell=self.cell.with_multiplier(multiplier))


class RealField(BaseModel):
    """Samples of a real periodic field on a SpectralGrid"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpectralGrid
    values: np.ndarray

    @model_validator(mode="after")
    def _check_shape(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        return self

    @property
    def mass(self) -> float:
        return float(np.sum(self.values ** 2) * self.grid.dv)

    def with_values(self, values: np.ndarray) -> "RealField":
        return RealField(grid=self.grid, values=np.asarray(values, dtype=float))


class CoulombKernel(BaseModel):
    """Spectral periodic Coulomb kernel of one grid"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpectralGrid
    multiplier: np.ndarray = Field(..., description="4 pi / |k|^2, zero at k = 0")
    unit_mask: np.ndarray = Field(..., description="Wavevectors of the unit-cell reciprocal lattice")
    shift: float = Field(..., ge=0, description="Constant making the grid minimum of G_K zero")
    gk_field: RealField = Field(..., description="Shifted truncated-series G_K samples, nucleus at the origin")

    @property
    def pair_constant(self) -> float:
        """k = 0 constant of the N*K-periodic pair kernel"""
        return self.shift / self.grid.cell.multiplier ** 3


class EnergyBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    kinetic: float = Field(..., description="c_w * int |grad w|^2")
    tf: float = Field(..., description="(3/5) c_TF int |w|^{10/3}")
    dirac: float = Field(..., description="-(3/4) c int |w|^{8/3}")
    hartree: float = Field(..., description="(1/2) D_K(|w|^2, |w|^2)")
    external: float = Field(..., description="-int V |w|^2")

    @computed_field
    @property
    def total(self) -> float:
        return self.kinetic + self.tf + self.dirac + self.hartree + self.external


class MinimizeMode(str, Enum):
    FULL = "full"
    EFFECTIVE = "effective"


class MinimizeOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iters: int = Field(5000, ge=1, description="Maximal number of descent steps per start")
    tol_residual: float = Field(
        1e-8, gt=0, description="Tolerance on ||(H_w + mu) w|| / ||w||"
    )
    step0: float = Field(0.5, gt=0, description="First trial step of the line search")
    backtrack: float = Field(0.5, gt=0, lt=1, description="Shrink factor after a rejected trial step")
    line_search_steps: int = Field(20, ge=2, description="Trial steps per line search")
    n_starts: int = Field(4, ge=1, description="Number of initializations")
    seed: int = Field(0, description="Seed of the random starts")
    min_step: float = Field(1e-14, gt=0, description="Step below which a start is declared stalled")
    preconditioner_shift: float = Field(
        1.0, gt=0, description="alpha in the (alpha + c_w |k|^2)^{-1} preconditioner"
    )


class StartOutcome(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    label: str
    energy: float
    residual: float
    iterations: int
    converged: bool
    field: Optional[RealField] = None


class MinimizeResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: RealField = Field(..., description="Nonnegative minimizer candidate")
    breakdown: EnergyBreakdown
    mu: float = Field(..., description="Euler-Lagrange multiplier")
    residual: float = Field(..., description="Final Euler-Lagrange residual")
    iterations: int
    start_label: str = Field(..., description="Initialization that produced the lowest energy")
    converged: bool = True
    periodicity_defect: Optional[float] = Field(
        None, description="min_R ||w - w(. - R)|| / ||w|| over unit-cell translations (N >= 2)"
    )
    energy_trace: List[float] = Field(default_factory=list, description="Accepted-step energies")
    starts: List[StartOutcome] = Field(default_factory=list)

    @property
    def energy(self) -> float:
        return self.breakdown.total


class Certificate(str, Enum):
    CERTIFIED = "certified"
    NOT_CERTIFIED = "not-certified"


class ScalingCheck(BaseModel):
    c: float
    cell_energy: float = Field(..., description="J_{K,c}(v) on the unit cell")
    dilated_energy: float = Field(..., description="c^2 J_{K_c,1}(v_breve) on the dilated cell")

    @property
    def relative_gap(self) -> float:
        return abs(self.cell_energy - self.dilated_energy) / abs(self.cell_energy)
