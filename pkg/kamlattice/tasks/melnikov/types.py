import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import qmc

from kamlattice.tasks.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


class WitnessKind(str, Enum):
    TANGENT = "tangent"
    FIRST = "first"
    SECOND = "second"


@dataclass
class ExcisionWitness:
    """
    A divisor found below its threshold: the reason a parameter sample (or a Fourier mode) was excised.

    ``sites`` holds one site position for first-Melnikov divisors, two for second-Melnikov ones and
    none for tangent divisors. ``sample`` is the parameter sample index, or ``-1`` when the witness
    comes from a single-parameter solve.
    """
    kind: WitnessKind
    k: tuple[int, ...]
    sites: tuple[int, ...]
    divisor: float
    threshold: float
    sample: int = -1

    def __post_init__(self):
        if not abs(self.divisor) < self.threshold:
            raise ValueError(f"Witness divisor {self.divisor} is not below its threshold {self.threshold}")

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "k": list(self.k),
            "sites": list(self.sites),
            "divisor": float(self.divisor),
            "threshold": float(self.threshold),
            "sample": self.sample,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExcisionWitness":
        return cls(
            kind=WitnessKind(data["kind"]),
            k=tuple(data["k"]),
            sites=tuple(data["sites"]),
            divisor=float(data["divisor"]),
            threshold=float(data["threshold"]),
            sample=int(data.get("sample", -1)),
        )


class SamplingMethod(str, Enum):
    GRID = "grid"
    SOBOL = "sobol"


@dataclass
class ParameterBox:
    """
    Axis-aligned parameter box ``𝒪 ⊂ ℝ^N`` represented by a sample set and an alive mask.

    Measures are estimated by the alive fraction of the samples.
    """
    lower: np.ndarray
    upper: np.ndarray
    samples: np.ndarray
    alive: np.ndarray = None
    method: SamplingMethod = SamplingMethod.GRID

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, len(self.lower))
        if self.alive is None:
            self.alive = np.ones(len(self.samples), dtype=bool)
        self.alive = np.asarray(self.alive, dtype=bool)
        if len(self.samples) == 0:
            raise ConfigurationError("A parameter box needs at least one sample")
        if self.alive.shape != (len(self.samples),):
            raise ConfigurationError(f"Alive mask of shape {self.alive.shape} for {len(self.samples)} samples")
        if np.any(self.upper <= self.lower):
            raise ConfigurationError(f"Parameter box has no volume: {self.lower} .. {self.upper}")

    @classmethod
    def sample(
        cls,
        lower,
        upper,
        count: int = 10_000,
        method: SamplingMethod | None = None,
        seed: int = 0,
    ) -> "ParameterBox":
        """
        Sample a box: a tensor grid of cell midpoints for ``N ≤ 3``, a scrambled Sobol sequence beyond.
        """
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        N = len(lower)
        method = method or (SamplingMethod.GRID if N <= 3 else SamplingMethod.SOBOL)
        match method:
            case SamplingMethod.GRID:
                per_axis = max(1, int(round(count ** (1.0 / N))))
                axes = [lo + (np.arange(per_axis) + 0.5) * (hi - lo) / per_axis for lo, hi in zip(lower, upper)]
                mesh = np.meshgrid(*axes, indexing="ij")
                samples = np.stack([m.ravel() for m in mesh], axis=1)
            case SamplingMethod.SOBOL:
                sampler = qmc.Sobol(d=N, scramble=True, seed=seed)
                unit = sampler.random(count)
                samples = qmc.scale(unit, lower, upper)
        logger.debug(f"Sampled {len(samples)} parameters ({method.value}) in box {lower} .. {upper}")
        return cls(lower, upper, samples, None, method)

    @property
    def N(self) -> int:
        return len(self.lower)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def alive_count(self) -> int:
        return int(self.alive.sum())

    @property
    def fraction(self) -> float:
        return self.alive_count / self.count

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def alive_samples(self) -> np.ndarray:
        return self.samples[self.alive]

    def alive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    def kill(self, indices) -> "ParameterBox":
        """A new box with the given sample indices removed from the alive set."""
        alive = self.alive.copy()
        alive[np.asarray(indices, dtype=int)] = False
        return ParameterBox(self.lower, self.upper, self.samples, alive, self.method)

    def to_json(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "method": self.method.value,
            "samples": self.samples.tolist(),
            "alive": self.alive.astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ParameterBox":
        return cls(
            np.asarray(data["lower"]),
            np.asarray(data["upper"]),
            np.asarray(data["samples"]),
            np.asarray(data["alive"], dtype=bool),
            SamplingMethod(data.get("method", "grid")),
        )


@dataclass
class ExcisionStage:
    """One excision pass: the scale it ran at and what it removed."""
    kind: WitnessKind
    K: float
    threshold: float
    before: int
    after: int
    witnesses: list[ExcisionWitness] = field(default_factory=list)
