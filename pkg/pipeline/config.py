# pipeline/config.py
"""
Pipeline configuration: a flat sectioned key = value file.

    [model]
    name = bergomi          # or rough_bergomi

    [bergomi]
    omega = 3.0
    ...

Lists are comma separated. Comments start with '#' or ';'. Every key is kept
with its line number so validation errors point at the offending line.
"""
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from algebra.words import dim_truncated
from models.bergomi import BergomiConfig
from models.rough_bergomi import RoughBergomiConfig
from utils import defaults
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)

DRIVER_DIMENSION = {"bergomi": 4, "rough_bergomi": 3}


def _split_list(value):
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(Section):
    name: Literal["bergomi", "rough_bergomi"]


class SignatureSection(Section):
    m: Optional[int] = Field(None, ge=1)
    output: Literal["fitted", "unit"] = "fitted"


class FittingSection(Section):
    paths: int = Field(defaults.FIT_PATHS, ge=2)
    steps: int = Field(defaults.FIT_STEPS, ge=1)
    horizon: float = Field(defaults.FIT_HORIZON, gt=0)
    ridge: Optional[float] = Field(None, ge=0)
    train_fraction: float = Field(defaults.TRAIN_FRACTION, gt=0, lt=1)
    chunk: int = Field(defaults.FIT_CHUNK, ge=1)
    sweep: list[float] = list(defaults.RIDGE_SWEEP)

    @field_validator("sweep", mode="before")
    @classmethod
    def split_sweep(cls, value):
        return _split_list(value)


class ReductionSection(Section):
    horizon: float = Field(defaults.GRAMIAN_HORIZON, gt=0)
    rank_tol: float = Field(defaults.RANK_TOL, gt=0, lt=1)
    dims: Optional[list[int]] = None
    l2_paths: int = Field(defaults.L2_PATHS, ge=1)
    l2_steps: int = Field(defaults.STEPS_PER_YEAR, ge=1)

    @field_validator("dims", mode="before")
    @classmethod
    def split_dims(cls, value):
        return _split_list(value)


class PricingSection(Section):
    maturities: list[float] = list(defaults.MATURITIES)
    paths: int = Field(defaults.SMILE_PATHS, ge=1)
    steps_per_year: int = Field(defaults.STEPS_PER_YEAR, ge=1)
    dims: Optional[list[int]] = None
    antithetic: bool = False

    @field_validator("maturities", "dims", mode="before")
    @classmethod
    def split_lists(cls, value):
        return _split_list(value)

    @field_validator("maturities")
    @classmethod
    def maturities_positive(cls, value: list[float]) -> list[float]:
        if not value or any(t <= 0 for t in value):
            raise ValueError("maturities must be a nonempty list of positive numbers")
        return value


class IOSection(Section):
    out: str = defaults.DEFAULT_OUT
    seed: int = Field(defaults.DEFAULT_SEED, ge=0)
    threads: int = Field(1, ge=1)


class PipelineConfig(BaseModel):
    """Validated pipeline configuration; unknown sections or keys are errors."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelSection
    bergomi: Optional[BergomiConfig] = None
    rough_bergomi: Optional[RoughBergomiConfig] = None
    signature: SignatureSection = SignatureSection()
    fitting: FittingSection = FittingSection()
    reduction: ReductionSection = ReductionSection()
    pricing: PricingSection = PricingSection()
    io: IOSection = IOSection()

    @model_validator(mode="after")
    def dimensions_consistent(self):
        name = self.model.name
        if getattr(self, name) is None:
            raise ValueError(f"section [{name}] is required for model {name}")
        n = self.state_dimension
        for section in ("reduction", "pricing"):
            dims = getattr(self, section).dims
            if dims is not None and any(k < 1 or k > n for k in dims):
                raise ValueError(f"[{section}] dims must lie in [1, {n}]")
        return self

    @property
    def d(self) -> int:
        return DRIVER_DIMENSION[self.model.name]

    @property
    def m(self) -> int:
        if self.signature.m is not None:
            return self.signature.m
        signature = defaults.BERGOMI_SIGNATURE if self.model.name == "bergomi" else defaults.ROUGH_SIGNATURE
        return signature[1]

    @property
    def state_dimension(self) -> int:
        return dim_truncated(self.d, self.m)

    @property
    def model_params(self) -> Union[BergomiConfig, RoughBergomiConfig]:
        return getattr(self, self.model.name)

    @property
    def reduction_dims(self) -> list[int]:
        if self.reduction.dims is not None:
            return self.reduction.dims
        return list(defaults.BERGOMI_DIMS if self.model.name == "bergomi" else defaults.ROUGH_DIMS)

    @property
    def price_dims(self) -> list[int]:
        if self.pricing.dims is not None:
            return self.pricing.dims
        return list(defaults.BERGOMI_PRICE_DIMS if self.model.name == "bergomi" else defaults.ROUGH_PRICE_DIMS)

    def section_dict(self, *names: str) -> dict:
        """JSON-ready view of the named sections, used for artifact hashing."""
        out = {}
        for name in names:
            value = getattr(self, name)
            out[name] = value.model_dump(mode="json") if value is not None else None
        return out


def parse_sections(text: str, source: str = "<config>") -> tuple[dict, dict]:
    """
    Parse sectioned key = value text.

    :return: ({section: {key: value}}, {(section, key): line}); section headers are recorded under key None.
    """
    sections: dict = {}
    lines: dict = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}: malformed section header {raw.strip()!r}", number)
            current = line[1:-1].strip()
            if current in sections:
                raise ConfigError(f"{source}: duplicate section [{current}]", number, current)
            sections[current] = {}
            lines[(current, None)] = number
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value', got {raw.strip()!r}", number)
        if current is None:
            raise ConfigError(f"{source}: key outside of any section", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in sections[current]:
            raise ConfigError(f"{source}: duplicate key '{key}' in [{current}]", number, key)
        sections[current][key] = value
        lines[(current, key)] = number
    return sections, lines


def _error_line(loc: tuple, lines: dict) -> Optional[int]:
    section = loc[0] if loc else None
    key = loc[1] if len(loc) > 1 else None
    if isinstance(section, str) and isinstance(key, str) and (section, key) in lines:
        return lines[(section, key)]
    if isinstance(section, str) and (section, None) in lines:
        return lines[(section, None)]
    return lines.get(("model", "name"))


def load_config(path: Union[str, Path, None] = None, text: Optional[str] = None) -> PipelineConfig:
    """
    Read and validate a pipeline config.

    :param path: Config file.
    :param text: Config text, used instead of a file.
    :raises ConfigError: with the line number and field of the first problem.
    """
    source = str(path) if path is not None else "<config>"
    if text is None:
        if path is None:
            raise ConfigError("no configuration given")
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {source}: {e}") from e
    sections, lines = parse_sections(text, source)
    try:
        config = PipelineConfig.model_validate(sections)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first["loc"])
        field = ".".join(str(part) for part in loc) or "config"
        line = _error_line(loc, lines)
        logger.error(f"{source}: invalid configuration at {field}: {first['msg']}")
        raise ConfigError(f"{source}: {field}: {first['msg']}", line, field) from None
    logger.info(f"Loaded {config.model.name} configuration from {source} (d={config.d}, m={config.m}, n={config.state_dimension})")
    return config


def apply_overrides(config: PipelineConfig, seed: Optional[int] = None, threads: Optional[int] = None,
                    out: Optional[str] = None) -> PipelineConfig:
    """Return a config with the command-line overrides of the [io] section applied."""
    update = {k: v for k, v in (("seed", seed), ("threads", threads), ("out", out)) if v is not None}
    if not update:
        return config
    try:
        io = IOSection.model_validate({**config.io.model_dump(), **update})
    except ValidationError as e:
        first = e.errors()[0]
        field = "io." + ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"command line: {field}: {first['msg']}", None, field) from None
    return config.model_copy(update={"io": io})
