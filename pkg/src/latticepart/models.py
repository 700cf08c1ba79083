"""Energy model and energy breakdown value types."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functionals import Anisotropy, Kernel

PERIMETER_KINDS = ("classical", "anisotropic", "nonlocal")


@dataclass(frozen=True)
class EnergyModel:
    """Which perimeter, the domain weight mu, and the volume mode.

    ``lam is None`` selects the volume-constrained problem, a positive ``lam``
    the penalized one with penalty ``lam * sum_i ||E_i| - v_i|``.
    """

    targets: tuple
    perimeter: str = "classical"
    anisotropy: Anisotropy | None = None
    kernel: Kernel | None = None
    mu: float = 0.0
    lam: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(float(v) for v in self.targets))
        if self.perimeter not in PERIMETER_KINDS:
            raise ValueError(f"unknown perimeter kind {self.perimeter!r}")
        if self.perimeter == "anisotropic" and self.anisotropy is None:
            raise ValueError("anisotropic perimeter needs an Anisotropy")
        if self.perimeter == "nonlocal" and self.kernel is None:
            raise ValueError("nonlocal perimeter needs a Kernel")
        if self.perimeter != "nonlocal" and self.kernel is not None:
            raise ValueError("a kernel only makes sense for the nonlocal perimeter")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("penalty lambda must be positive")
        if self.lam is None and any(v <= 0 for v in self.targets):
            raise ValueError("target volumes must be positive in constrained mode")
        if any(v < 0 for v in self.targets):
            raise ValueError("target volumes must be non-negative")

    @classmethod
    def classical(cls, targets, mu=0.0, lam=None) -> "EnergyModel":
        return cls(tuple(targets), "classical", mu=mu, lam=lam)

    @classmethod
    def anisotropic(cls, anisotropy, targets, mu=0.0, lam=None) -> "EnergyModel":
        return cls(tuple(targets), "anisotropic", anisotropy=anisotropy, mu=mu, lam=lam)

    @classmethod
    def nonlocal_(cls, kernel, targets, mu=0.0, lam=None) -> "EnergyModel":
        return cls(tuple(targets), "nonlocal", kernel=kernel, mu=mu, lam=lam)

    @property
    def penalized(self) -> bool:
        return self.lam is not None

    @property
    def is_local(self) -> bool:
        return self.perimeter != "nonlocal"

    @property
    def phi(self) -> Anisotropy:
        if self.perimeter == "anisotropic":
            return self.anisotropy
        return Anisotropy("euclidean")

    def check_volume(self, total_volume: float, tol: float = 1e-9) -> None:
        if not self.penalized and abs(sum(self.targets) - total_volume) > tol * max(1.0, total_volume):
            raise ValueError(
                f"target volumes sum to {sum(self.targets)}, lattice volume is {total_volume}"
            )

    def with_targets(self, targets) -> "EnergyModel":
        return EnergyModel(tuple(targets), self.perimeter, self.anisotropy, self.kernel, self.mu, self.lam)


@dataclass
class EnergyBreakdown:
    total: float
    mu_term: float
    half_sum_perimeters: float
    penalty_term: float
    areas: np.ndarray
    perimeters: np.ndarray
    penalties: np.ndarray
    volume_residual: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def per_cell(self) -> list[tuple[float, float, float]]:
        return [
            (float(a), float(p), float(q))
            for a, p, q in zip(self.areas, self.perimeters, self.penalties)
        ]
