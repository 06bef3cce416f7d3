"""The composite problem min over X of f0(x) + h(F(x))."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .oracles import (DcComponent, FeasibleSet, FiniteSet, Mapping, MaxAffine, SmoothConvex,
                      SmoothFunction, as_point, mapping_lipschitz)
from .outer import NonpositiveIndicator, OuterFunction

ALGORITHMS = ("bundle", "dc", "proximal-distance")


@dataclass
class DistanceStructure:
    """h(z) = sum_i (rho_i/2) z_i with z_i = dist^2(x, K_i)."""

    sets: Sequence[FiniteSet]
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if len(self.sets) != self.rho.size or np.any(self.rho <= 0):
            raise InvalidInputError("one positive weight per set is required")


@dataclass
class CompositeProblem:
    """Problem data plus the first-order mode of the inner mapping.

    Smooth mode uses `F` with Jacobian rows as D_i; DC mode uses
    `components`, with F_i = f1_i - f2_i.
    """

    name: str
    X: FeasibleSet
    f0: SmoothFunction
    h: OuterFunction
    F: Optional[Mapping] = None
    components: Optional[Sequence[DcComponent]] = None
    L_h: Optional[float] = None
    L_F: Optional[float] = None
    lipschitz_exact: bool = False
    distance: Optional[DistanceStructure] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.F is None and self.components is None:
            raise InvalidInputError("a problem needs a smooth mapping or DC components")
        if self.F is not None:
            if self.F.dim_in != self.X.dim or self.F.dim_out != self.h.dim:
                raise InvalidInputError("mapping dimensions do not match X and h")
        if self.components is not None and len(self.components) != self.h.dim:
            raise InvalidInputError("need one DC component per coordinate of h")
        if self.L_h is None:
            try:
                self.L_h = self.h.lipschitz_bound()
            except ConfigurationError:
                self.L_h = None
        if self.L_F is None and self.F is not None and getattr(self.F, "component_L", None) is not None:
            self.L_F = mapping_lipschitz(self.F)

    @property
    def n(self) -> int:
        return self.X.dim

    @property
    def m(self) -> int:
        return self.h.dim

    @property
    def has_smooth_mapping(self) -> bool:
        return self.F is not None

    @property
    def has_dc(self) -> bool:
        return self.components is not None

    def inner(self, x) -> np.ndarray:
        x = as_point(x, self.n)
        if self.F is not None:
            return self.F.value(x)
        return np.array([c.value(x) for c in self.components])

    def jacobian(self, x) -> np.ndarray:
        if self.F is None:
            raise ConfigurationError(f"problem {self.name} has no smooth mapping")
        return np.atleast_2d(self.F.jacobian(as_point(x, self.n)))

    def objective(self, x) -> float:
        return self.f0.value(x) + self.h.value(self.inner(x))

    def supports(self, algorithm: str) -> bool:
        if algorithm == "bundle":
            return self.F is not None and not isinstance(self.h, NonpositiveIndicator)
        if algorithm == "dc":
            return (self.components is not None and self.h.monotone
                    and self.h.epigraph_terms() is not None
                    and all(isinstance(c.f1, (MaxAffine, SmoothConvex, SmoothFunction))
                            for c in self.components))
        if algorithm == "proximal-distance":
            return self.distance is not None
        raise ConfigurationError(f"unknown algorithm {algorithm!r}")

    def lipschitz_product(self) -> Optional[float]:
        if self.L_h is None or self.L_F is None:
            return None
        return float(self.L_h * self.L_F)

    def describe(self) -> dict:
        return {"name": self.name, "n": self.n, "m": self.m, "params": dict(self.params),
                "h": self.h.to_dict(), "X": self.X.to_dict(), "L_h": self.L_h, "L_F": self.L_F,
                "lipschitz_exact": self.lipschitz_exact,
                "algorithms": [a for a in ALGORITHMS if self.supports(a)]}


__all__ = ["CompositeProblem", "DistanceStructure", "ALGORITHMS"]
