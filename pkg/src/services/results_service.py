import logging
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

import src
from src.models.config_models import RunConfig, RunSummary
from src.models.tfdw_models import ModelParams, RealField

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "statsmodels")


def package_versions() -> Dict[str, str]:
    versions = {"tfdw-toolkit": src.__version__}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def file_stem(subcommand: str) -> str:
    return subcommand.replace("-", "_")


class ResultsWriter:
    """Writes JSON summaries, CSV tables and density dumps under one output directory"""

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)

    def _path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def write_summary(
        self,
        subcommand: str,
        config: RunConfig,
        results: Dict[str, Any],
        converged: bool = True,
        error: Optional[str] = None,
    ) -> Path:
        summary = RunSummary(
            subcommand=subcommand,
            config=config,
            versions=package_versions(),
            seed=config.seed,
            converged=converged,
            error=error,
            results=results,
        )
        path = self._path(f"{file_stem(subcommand)}_summary.json")
        path.write_text(summary.model_dump_json(indent=2, by_alias=True) + "\n", encoding="utf-8")
        logger.info(f"Summary written to {path}")
        return path

    def write_table(
        self,
        name: str,
        frame: pd.DataFrame,
        config: RunConfig,
        columns: Dict[str, str],
    ) -> Path:
        """CSV preceded by '#' lines holding the configuration and the column documentation"""
        path = self._path(name)
        header = [f"# config: {config.model_dump_json(by_alias=True)}"]
        header += [f"# {column}: {columns.get(column, '')}" for column in frame.columns]
        body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        path.write_text("\n".join(header) + "\n" + body, encoding="utf-8")
        logger.info(f"Table with {len(frame)} rows written to {path}")
        return path

    def write_density(self, name: str, field: RealField, params: ModelParams, config: RunConfig) -> Path:
        """Text header, then one CSV row of x-samples per (y, z) pair (x fastest)"""
        grid = field.grid
        n = grid.n
        path = self._path(name)
        header = [
            f"# dims: {n} {n} {n}",
            f"# cell: edge={grid.cell.edge!r} multiplier={grid.cell.multiplier} length={grid.cell.length!r}",
            f"# lambda: {params.lam!r}",
            f"# c: {params.c_dirac!r}",
            f"# config: {config.model_dump_json(by_alias=True)}",
            "# rows: z-major then y; columns: x index 0..n-1; values: w(x, y, z)",
        ]
        rows = np.asarray(field.values).transpose(2, 1, 0).reshape(-1, n)
        body = pd.DataFrame(rows).to_csv(index=False, header=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        path.write_text("\n".join(header) + "\n" + body, encoding="utf-8")
        logger.info(f"Density dump written to {path}")
        return path
