"""Relaxation parameters and interval results."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class RelaxationParams:
    """Bounds on faithfulness violations.

    ``eps_w`` caps the direct W -> Y dependence, ``eps_x``/``eps_y`` cap how far
    the latent-conditional treatment/outcome probabilities can stray from the
    observed ones, and ``[beta_low, beta_high]`` bounds ``P(U | W=w) / P(U)``.
    """

    eps_w: float = 0.0
    eps_x: float = 0.0
    eps_y: float = 0.0
    beta_low: float = 1.0
    beta_high: float = 1.0

    def __post_init__(self):
        for name in ("eps_w", "eps_x", "eps_y"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not (0.0 < self.beta_low <= 1.0 <= self.beta_high):
            raise ValueError(f"need 0 < beta_low <= 1 <= beta_high, got {self.beta_low}, {self.beta_high}")

    @classmethod
    def uniform(cls, k: float, c: float = 1.0) -> "RelaxationParams":
        """All three epsilons at ``k``, beta range ``[c, 1/c]``."""
        return cls(k, k, k, c, 1.0 / c)

    @classmethod
    def vacuous(cls) -> "RelaxationParams":
        return cls(1.0, 1.0, 1.0, 1.0, 1.0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IntervalBound:
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}
