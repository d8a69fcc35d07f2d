"""Chip populations and noisy difference-register measurements.

Delays are modelled directly in clock ticks of the difference register.  Every
random quantity is drawn from its own counter-keyed stream
(``SeedSequence(seed, spawn_key=...)``), so a cell's value depends only on the
seed and the cell coordinates, never on evaluation order or thread count.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from unbiaspuf.errors import ConfigError

# stream tags for spawn_key; changing these changes every simulated value
_SYSTEMATIC = 0
_CHIP = 1
_NOISE = 2
_DRIFT = 3
_CHALLENGES = 4


class ModelKind(str, Enum):
    INDEPENDENT = "Independent"
    STAGE_ADDITIVE = "StageAdditive"


class HeadroomWarning(UserWarning):
    """Configured spreads leave less than 6 sigma of headroom in the register."""


def _stream(seed, *key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _check_std(name, value, strict=False):
    if not math.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ConfigError(f"{name} must be finite and {bound}, got {value!r}")


@dataclass(frozen=True)
class PopulationConfig:
    """Latent delay-variation parameters of a simulated design.

    Defaults follow the FPGA implementation (19-bit register, 10-bit
    challenge, 7 chips, 120 challenges, 10 repeats, inter-chip sigma of 521
    ticks).  The bias and noise defaults are a calibration, not measurements.
    """

    model_kind: ModelKind = ModelKind.INDEPENDENT
    register_width: int = 19
    challenge_width: int = 10
    num_chips: int = 7
    num_challenges: int = 120
    num_repeats: int = 10
    bias_mean: float = 4000.0
    bias_std: float = 800.0
    inter_std: float = 521.0
    noise_std: float = 60.0
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        except ValueError:
            kinds = ", ".join(k.value for k in ModelKind)
            raise ConfigError(f"model_kind must be one of {kinds}, got {self.model_kind!r}") from None
        for name in ("register_width", "challenge_width", "num_chips", "num_challenges", "num_repeats", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("bias_mean", "bias_std", "inter_std", "noise_std"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
                raise ConfigError(f"{name} must be a real number, got {value!r}")
            object.__setattr__(self, name, float(value))

        if not 2 <= self.register_width <= 63:
            raise ConfigError(f"register_width must be in [2, 63], got {self.register_width}")
        if self.challenge_width < 1:
            raise ConfigError("challenge_width must be >= 1")
        for name in ("num_chips", "num_challenges", "num_repeats"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not math.isfinite(self.bias_mean):
            raise ConfigError("bias_mean must be finite")
        _check_std("bias_std", self.bias_std)
        _check_std("inter_std", self.inter_std, strict=True)
        _check_std("noise_std", self.noise_std)

        if self.headroom() <= 0:
            warnings.warn(
                f"|bias_mean| + 6 * (bias_std + inter_std + noise_std) reaches the "
                f"{self.register_width}-bit register limit; overflowing cells will be clamped and flagged",
                HeadroomWarning,
                stacklevel=3,
            )

    def headroom(self):
        """Ticks left between the 6-sigma envelope and the register limit."""
        spread = abs(self.bias_mean) + 6 * (self.bias_std + self.inter_std + self.noise_std)
        return 2 ** (self.register_width - 1) - spread

    @property
    def value_range(self):
        half = 2 ** (self.register_width - 1)
        return -half, half - 1

    @property
    def latent_length(self):
        if self.model_kind is ModelKind.INDEPENDENT:
            return self.num_challenges
        return self.challenge_width + 1

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return PopulationConfig.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        data["model_kind"] = self.model_kind.value
        return data

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown population config keys: {', '.join(unknown)}")
        return cls(**data)


def paper_profile(**overrides):
    """The FPGA-scale experiment: 7 chips, 120 challenges, 10 repeats."""
    return PopulationConfig().replace(**overrides) if overrides else PopulationConfig()


def desk_profile(**overrides):
    """Same design with 200 chips, for statistically tight checks."""
    return PopulationConfig(num_chips=200).replace(**overrides)


@dataclass(frozen=True)
class StressConfig:
    noise_multiplier: float = 1.0
    drift_std: float = 0.0
    label: str = "nominal"

    def __post_init__(self):
        if not math.isfinite(self.noise_multiplier) or self.noise_multiplier < 1:
            raise ConfigError(f"noise_multiplier must be >= 1, got {self.noise_multiplier!r}")
        _check_std("drift_std", self.drift_std)


@dataclass(frozen=True, eq=False)
class ChipInstance:
    chip_id: int
    latent: np.ndarray


@dataclass(frozen=True, eq=False)
class Population:
    """A generated population.

    ``systematic`` holds the shared design offsets: one per challenge for the
    Independent model, one per stage for StageAdditive.  ``challenges`` is the
    population's own challenge list (indices or m-bit rows).
    """

    config: PopulationConfig
    systematic: np.ndarray
    chips: tuple
    challenges: np.ndarray

    @property
    def offsets(self):
        """Systematic offset of each challenge in ``challenges``."""
        return self.systematic_offsets(self.challenges)

    def systematic_offsets(self, challenges):
        if self.config.model_kind is ModelKind.INDEPENDENT:
            return self.systematic[np.asarray(challenges, dtype=np.int64)]
        return parity_features(challenges) @ self.systematic

    def chip_offsets(self, challenges=None):
        """(num_chips, num_challenges) matrix of chip-specific offsets."""
        if challenges is None:
            challenges = self.challenges
        latent = np.stack([chip.latent for chip in self.chips])
        if self.config.model_kind is ModelKind.INDEPENDENT:
            return latent[:, np.asarray(challenges, dtype=np.int64)]
        return latent @ parity_features(challenges).T


def parity_features(challenges):
    """Map m-bit challenges to the m+1 parity features of the additive delay model.

    Feature j is prod_{l >= j} (1 - 2 c_l); the last feature is the constant 1.
    """
    c = np.atleast_2d(np.asarray(challenges, dtype=np.int64))
    if c.size and not np.isin(c, (0, 1)).all():
        raise ConfigError("challenge bits must be 0 or 1")
    signs = 1 - 2 * c
    phi = np.cumprod(signs[:, ::-1], axis=1)[:, ::-1]
    return np.hstack([phi, np.ones((c.shape[0], 1), dtype=np.int64)]).astype(float)


def generate_population(cfg: PopulationConfig) -> Population:
    if cfg.model_kind is ModelKind.INDEPENDENT:
        systematic = _stream(cfg.seed, _SYSTEMATIC).normal(cfg.bias_mean, cfg.bias_std, cfg.num_challenges)
        chip_scale = cfg.inter_std
        challenges = np.arange(cfg.num_challenges, dtype=np.int64)
    else:
        # variance split over m+1 stages so a single challenge sees exactly inter_std
        stages = cfg.challenge_width + 1
        systematic = _stream(cfg.seed, _SYSTEMATIC).normal(
            cfg.bias_mean / stages, cfg.bias_std / math.sqrt(stages), stages
        )
        chip_scale = cfg.inter_std / math.sqrt(stages)
        challenges = _stream(cfg.seed, _CHALLENGES).integers(
            0, 2, size=(cfg.num_challenges, cfg.challenge_width), dtype=np.int64
        )
    chips = tuple(
        ChipInstance(c, _stream(cfg.seed, _CHIP, c).normal(0.0, chip_scale, cfg.latent_length))
        for c in range(cfg.num_chips)
    )
    return Population(cfg, systematic, chips, challenges)


@dataclass(frozen=True, eq=False)
class MeasurementTensor:
    """chips x challenges x repeats grid of W-bit signed difference values."""

    values: np.ndarray
    overflow: np.ndarray
    config: PopulationConfig
    challenges: np.ndarray
    stress: StressConfig | None = field(default=None)

    @property
    def shape(self):
        return self.values.shape

    @property
    def width(self):
        return self.config.register_width

    def repeat_means(self):
        return self.values.mean(axis=2)


def round_half_away(x):
    """Nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=float)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def challenge_keys(cfg, challenges):
    """Stream keys identifying each challenge independently of its position."""
    if cfg.model_kind is ModelKind.INDEPENDENT:
        keys = np.asarray(challenges, dtype=np.int64).reshape(-1)
        if keys.size and (keys.min() < 0 or keys.max() >= cfg.num_challenges):
            raise ConfigError(f"challenge indices must lie in [0, {cfg.num_challenges})")
        return keys
    bits = np.atleast_2d(np.asarray(challenges, dtype=np.int64))
    if bits.shape[1] != cfg.challenge_width:
        raise ConfigError(f"StageAdditive challenges must be {cfg.challenge_width}-bit vectors")
    weights = 1 << np.arange(cfg.challenge_width, dtype=np.int64)
    return bits @ weights


def measure(population: Population, challenge_set=None, stress: StressConfig | None = None, workers: int = 1):
    """Sample ``num_repeats`` register readings per (chip, challenge).

    Values are rounded, then clamped to the register range; clamped cells are
    marked in ``overflow``.  ``workers`` > 1 spreads chips over threads and
    gives bit-identical output.
    """
    cfg = population.config
    challenges = population.challenges if challenge_set is None else np.asarray(challenge_set)
    keys = challenge_keys(cfg, challenges)
    mean = population.systematic_offsets(challenges)[None, :] + population.chip_offsets(challenges)
    alpha = 1.0 if stress is None else stress.noise_multiplier
    drift_std = 0.0 if stress is None else stress.drift_std
    t = cfg.num_repeats

    def chip_block(c):
        noise = np.zeros((keys.size, t))
        if cfg.noise_std > 0:
            for j, k in enumerate(keys):
                noise[j] = _stream(cfg.seed, _NOISE, c, int(k)).standard_normal(t)
        drift = drift_std * _stream(cfg.seed, _DRIFT, c).standard_normal() if drift_std > 0 else 0.0
        return mean[c][:, None] + drift + alpha * cfg.noise_std * noise

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(chip_block, range(cfg.num_chips)))
    else:
        blocks = [chip_block(c) for c in range(cfg.num_chips)]
    raw = round_half_away(np.stack(blocks)) if blocks else np.zeros((0, keys.size, t))

    lo, hi = cfg.value_range
    overflow = (raw < lo) | (raw > hi)
    values = np.clip(raw, lo, hi).astype(np.int64)
    return MeasurementTensor(values, overflow, cfg, challenges, stress)
