import configparser
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from linkmse.core.errors import ConfigError

Sections = Dict[str, Dict[str, str]]


class RuntimeSettings(BaseModel):
    # environment defaults go through the validators
    model_config = ConfigDict(validate_default=True)

    log_level: str = Field(
        default_factory=lambda: os.getenv("LINKMSE_LOG_LEVEL", "INFO")
    )
    workers: int = Field(
        default_factory=lambda: os.getenv("LINKMSE_WORKERS", "1")
    )
    block_rows: int = Field(
        default_factory=lambda: os.getenv("LINKMSE_BLOCK_ROWS", "256")
    )

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        v = v.upper()
        if not isinstance(logging.getLevelName(v), int):
            raise ValueError(f'log_level must be a logging level name, got {v}')
        return v

    @field_validator('workers')
    @classmethod
    def validate_workers(cls, v):
        if v < 1:
            raise ValueError('workers must be at least 1')
        return v

    @field_validator('block_rows')
    @classmethod
    def validate_block_rows(cls, v):
        if v < 1:
            raise ValueError('block_rows must be at least 1')
        return v


def load_settings() -> RuntimeSettings:
    try:
        return RuntimeSettings()
    except ValueError as e:
        raise ConfigError(f"Invalid LINKMSE_* environment setting: {e}")


def read_sections(path: Union[str, Path]) -> Sections:
    """Parse a `[section]` / `key = value` file into nested dicts.

    Keys keep their case; `#` and `;` start comments; no interpolation.
    """
    path = Path(path)
    parser = configparser.ConfigParser(
        interpolation=None,
        inline_comment_prefixes=("#", ";"),
        strict=True,
    )
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except configparser.Error as e:
        raise ConfigError(f"Malformed config file {path}: {e}")
    return {name: dict(parser.items(name)) for name in parser.sections()}


def split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_floats(value: str, where: str) -> List[float]:
    try:
        return [float(item) for item in split_list(value)]
    except ValueError:
        raise ConfigError(f"{where}: expected comma-separated numbers, got '{value}'")


def parse_bool(value: str, where: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got '{value}'")


def require_section(sections: Sections, name: str, source: Optional[Path] = None) -> Dict[str, str]:
    if name not in sections:
        where = f" in {source}" if source else ""
        raise ConfigError(f"missing {name}{where}")
    return sections[name]
