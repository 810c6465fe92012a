import os
import logging
from io import StringIO
from pathlib import Path
from typing import Dict, Iterable, Optional

from dotenv import dotenv_values
from dotenv.parser import parse_stream
from pydantic import ValidationError

from src.models.config_models import RunConfig
from src.models.radial_models import RadialControls
from src.models.tfdw_models import CellSpec, MinimizeOptions, ModelParams, Nucleus
from src.services.exceptions import ConfigError

logger = logging.getLogger(__name__)

# flat key -> (section, field); section None is the top level of RunConfig
KEY_MAP = {
    "c_tf": ("params", "c_tf"),
    "c": ("params", "c_dirac"),
    "c_dirac": ("params", "c_dirac"),
    "c_w": ("params", "c_w"),
    "lambda": ("params", "lam"),
    "q": ("params", "q"),
    "L": ("cell", "edge"),
    "edge": ("cell", "edge"),
    "N": ("cell", "multiplier"),
    "nuclei": ("cell", "nuclei"),
}
KEY_MAP.update({name: ("opts", name) for name in MinimizeOptions.model_fields if name != "seed"})
KEY_MAP.update({name: ("radial", name) for name in RadialControls.model_fields})
KEY_MAP.update({
    name: (None, name)
    for name in RunConfig.model_fields
    if name not in ("params", "cell", "opts", "radial")
})

LIST_KEYS = {"c_list", "mu_list", "bracket"}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse `key = value` lines with the dotenv grammar; `#` starts a comment

    Args:
        text: configuration text
        source: file name or flag quoted in error messages

    Returns:
        Raw string values by key, later lines winning
    """
    for binding in parse_stream(StringIO(text)):
        if binding.error or (binding.key is not None and binding.value is None):
            raise ConfigError(
                f"{source}:{binding.original.line}: expected 'key = value', got '{binding.original.string.strip()}'"
            )
    return dict(dotenv_values(stream=StringIO(text), interpolate=False))


def parse_config_file(path: str) -> Dict[str, str]:
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(file_path.read_text(encoding="utf-8"), source=str(path))


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """`--set key=value` flags"""
    return parse_config_text("\n".join(items or ()), source="--set")


def parse_nuclei(text: str):
    """'x,y,z@charge; x,y,z@charge' in fractional unit-cell coordinates (charge defaults to 1)"""
    nuclei = []
    for entry in filter(None, (part.strip() for part in text.split(";"))):
        position, _, charge = entry.partition("@")
        coords = [float(x) for x in position.split(",")]
        if len(coords) != 3:
            raise ConfigError(f"nucleus '{entry}' needs three coordinates")
        nuclei.append(Nucleus(position=tuple(coords), charge=float(charge) if charge else 1.0))
    return tuple(nuclei)


def environment_defaults() -> Dict[str, str]:
    """Defaults taken from TFDW_OUTPUT_DIR and TFDW_WORKERS"""
    values = {}
    if os.getenv("TFDW_OUTPUT_DIR"):
        values["output_dir"] = os.getenv("TFDW_OUTPUT_DIR")
    if os.getenv("TFDW_WORKERS"):
        values["workers"] = os.getenv("TFDW_WORKERS")
    return values


def build_config(values: Dict[str, str]) -> RunConfig:
    """Turn flat string values into a validated RunConfig"""
    sections = {"params": {}, "cell": {}, "opts": {}, "radial": {}}
    top = {}
    for key, value in values.items():
        if key not in KEY_MAP:
            raise ConfigError(f"unknown configuration key '{key}'")
        section, name = KEY_MAP[key]
        try:
            if key in LIST_KEYS:
                parsed = [float(x) for x in value.replace(",", " ").split()]
            elif key == "nuclei":
                parsed = parse_nuclei(value)
            else:
                parsed = value
        except ValueError as e:
            raise ConfigError(f"invalid value for '{key}': {value!r} ({e})")
        if section is None:
            top[name] = parsed
        else:
            sections[section][name] = parsed

    if "seed" in top:
        sections["opts"]["seed"] = top["seed"]
    try:
        return RunConfig(
            params=ModelParams(**sections["params"]),
            cell=CellSpec(**sections["cell"]),
            opts=MinimizeOptions(**sections["opts"]),
            radial=RadialControls(**sections["radial"]),
            **top,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}")


def load_config(
    path: Optional[str] = None,
    overrides: Iterable[str] = (),
    flags: Optional[Dict[str, object]] = None,
) -> RunConfig:
    """Environment defaults < config file < --set overrides < dedicated flags"""
    values = environment_defaults()
    if path:
        values.update(parse_config_file(path))
    values.update(parse_overrides(overrides))
    for key, value in (flags or {}).items():
        if value is not None:
            values[key] = str(value)
    config = build_config(values)
    logger.debug(f"Effective configuration: {config.model_dump(mode='json')}")
    return config
