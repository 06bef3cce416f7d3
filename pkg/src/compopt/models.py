"""Convex lower models of the outer function h.

`CuttingPlaneModel` is the flat model max_j {h(z_j) + <s_j, z - z_j>};
`StructuredModel` keeps one cutting-plane model per inner function of a
composition h = h0 o (h_1, ..., h_d) and evaluates h0 of their values.
Updates return new model objects; a model is never mutated in place.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InternalConsistencyError, UninitializedModelError
from .outer import Composed, OuterFunction

TAGS = ("center", "trial", "aggregate")

NULL_POLICIES = ("economical", "full", "minimal")
SERIOUS_POLICIES = ("reset", "retain-active")


@dataclass(frozen=True)
class Linearization:
    anchor: np.ndarray
    value: float
    slope: np.ndarray
    tag: str = "trial"
    index: int = 0

    def __call__(self, z) -> float:
        return float(self.value + self.slope @ (np.asarray(z, dtype=float) - self.anchor))

    def to_dict(self) -> dict:
        return {"anchor": self.anchor.tolist(), "value": self.value,
                "slope": self.slope.tolist(), "tag": self.tag, "index": self.index}

    @classmethod
    def from_dict(cls, d: dict) -> "Linearization":
        return cls(np.asarray(d["anchor"], dtype=float), float(d["value"]),
                   np.asarray(d["slope"], dtype=float), d.get("tag", "trial"),
                   int(d.get("index", 0)))

    @classmethod
    def of(cls, h: OuterFunction, z, tag: str, index: int) -> "Linearization":
        z = np.asarray(z, dtype=float)
        return cls(z.copy(), h.value(z), h.subgradient(z), tag, index)


def combine(cuts: Sequence[Linearization], weights, anchor, index: int) -> Linearization:
    """The aggregate sum_j w_j * cut_j written as a linearization at `anchor`."""
    w = np.asarray(weights, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    value = float(sum(wj * c(anchor) for wj, c in zip(w, cuts)))
    slope = sum(wj * c.slope for wj, c in zip(w, cuts))
    return Linearization(anchor.copy(), value, np.asarray(slope, dtype=float), "aggregate", index)


def _cut_values(cuts: Sequence[Linearization], z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.array([c.value + c.slope @ (z - c.anchor) for c in cuts])


class CuttingPlaneModel:
    """Flat cutting-plane model of h."""

    def __init__(self, cuts: Sequence[Linearization] = (), activity_threshold: float = 1e-12,
                 max_bundle: int = 50, null_policy: str = "economical",
                 serious_policy: str = "reset"):
        if null_policy not in NULL_POLICIES:
            raise ValueError(f"unknown null-step policy {null_policy!r}")
        if serious_policy not in SERIOUS_POLICIES:
            raise ValueError(f"unknown serious-step policy {serious_policy!r}")
        self.cuts = list(cuts)
        self.activity_threshold = activity_threshold
        self.max_bundle = max(3, int(max_bundle))
        self.null_policy = null_policy
        self.serious_policy = serious_policy

    def _like(self, cuts) -> "CuttingPlaneModel":
        return CuttingPlaneModel(cuts, self.activity_threshold, self.max_bundle,
                                 self.null_policy, self.serious_policy)

    @classmethod
    def at_center(cls, h: OuterFunction, z_hat, index: int = 0, **kw) -> "CuttingPlaneModel":
        return cls([Linearization.of(h, z_hat, "center", index)], **kw)

    def __len__(self) -> int:
        return len(self.cuts)

    @property
    def size(self) -> int:
        return len(self.cuts)

    def values(self, z) -> np.ndarray:
        if not self.cuts:
            raise UninitializedModelError("cutting-plane model has no cuts")
        return _cut_values(self.cuts, z)

    def evaluate(self, z) -> float:
        return float(np.max(self.values(z)))

    def model_subgradient(self, z, alpha=None) -> np.ndarray:
        """sum_j alpha_j s_j, or the slope of the first maximizing cut."""
        if alpha is not None:
            return np.sum([a * c.slope for a, c in zip(alpha, self.cuts)], axis=0)
        vals = self.values(z)
        return self.cuts[int(np.argmax(vals))].slope.copy()

    def max_slope_norm(self) -> float:
        return max(float(np.linalg.norm(c.slope)) for c in self.cuts)

    # -- updates ------------------------------------------------------
    def update_after_serious(self, z_hat, h_value: float, s_hat, index: int = 0,
                             alpha=None) -> "CuttingPlaneModel":
        center = Linearization(np.asarray(z_hat, dtype=float).copy(), float(h_value),
                               np.asarray(s_hat, dtype=float).copy(), "center", index)
        cuts = [center]
        if self.serious_policy == "retain-active" and alpha is not None:
            for a, c in zip(alpha, self.cuts):
                if a > self.activity_threshold:
                    cuts.append(Linearization(c.anchor, c.value, c.slope, "trial", c.index))
        return self._like(cuts)._compress(None, mandated=1)

    def update_after_null(self, center: Linearization, trial: Linearization,
                          aggregate: Linearization, alpha=None) -> "CuttingPlaneModel":
        """New model majorizing the center, trial and aggregate linearizations."""
        if self.null_policy == "minimal":
            return self._like([center, trial, aggregate])
        if self.null_policy == "full" or alpha is None:
            kept = list(self.cuts)
            kept_alpha = None if alpha is None else list(alpha)
        else:
            sel = [j for j, a in enumerate(alpha) if a > self.activity_threshold]
            kept = [self.cuts[j] for j in sel]
            kept_alpha = [alpha[j] for j in sel]
        others = [(c, kept_alpha[j] if kept_alpha else 0.0) for j, c in enumerate(kept)
                  if c.tag != "center"]
        cuts = [center, trial] + [Linearization(c.anchor, c.value, c.slope,
                                                c.tag if c.tag == "aggregate" else "trial", c.index)
                                  for c, _ in others]
        weights = [np.inf, np.inf] + [a for _, a in others]
        model = self._like(cuts)
        gap = aggregate.value - model.evaluate(aggregate.anchor)
        if gap > 1e-12 * (1.0 + abs(aggregate.value)):
            model = self._like(cuts + [aggregate])
            weights.append(np.inf)
        return model._compress(weights, mandated=2, aggregate=aggregate)

    def prune(self, alpha, mandated: int = 1) -> "CuttingPlaneModel":
        """Keep cuts with alpha above threshold plus the first `mandated` cuts."""
        keep = [j for j, a in enumerate(alpha)
                if j < mandated or a > self.activity_threshold]
        cuts = [self.cuts[j] for j in keep]
        weights = [np.inf if j < mandated else alpha[j] for j in keep]
        agg = None
        if len(cuts) > self.max_bundle:
            agg = combine(self.cuts, alpha, self.cuts[0].anchor, self.cuts[0].index)
        return self._like(cuts)._compress(weights, mandated=mandated, aggregate=agg)

    def _compress(self, weights, mandated: int, aggregate: Optional[Linearization] = None):
        if len(self.cuts) <= self.max_bundle:
            return self
        if aggregate is None:
            raise InternalConsistencyError("bundle overflow without an aggregate cut")
        w = np.asarray(weights if weights is not None else [np.inf] * len(self.cuts), dtype=float)
        head = list(range(mandated))
        rest = [j for j in np.argsort(-w[mandated:], kind="stable") + mandated]
        room = self.max_bundle - mandated - 1
        chosen = head + sorted(rest[:room])
        cuts = [self.cuts[j] for j in chosen]
        if not any(c is aggregate for c in cuts):
            cuts.append(aggregate)
        return self._like(cuts[: self.max_bundle])

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": "cutting-plane", "cuts": [c.to_dict() for c in self.cuts]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, **kw) -> "CuttingPlaneModel":
        return cls([Linearization.from_dict(c) for c in d["cuts"]], **kw)


class StructuredModel:
    """h0 o (hcheck_1, ..., hcheck_d) with one cutting-plane model per inner function."""

    def __init__(self, h0: OuterFunction, inner_cuts: Sequence[Sequence[Linearization]],
                 activity_threshold: float = 1e-12, max_bundle: int = 50):
        if not h0.monotone:
            raise InternalConsistencyError("structured models need a nondecreasing h0")
        self.h0 = h0
        self.inner_cuts = [list(c) for c in inner_cuts]
        self.activity_threshold = activity_threshold
        self.max_bundle = max(4, int(max_bundle))

    def _like(self, inner_cuts) -> "StructuredModel":
        return StructuredModel(self.h0, inner_cuts, self.activity_threshold, self.max_bundle)

    @classmethod
    def at_center(cls, h: Composed, z_hat, index: int = 0, **kw) -> "StructuredModel":
        return cls(h.h0, [[Linearization.of(hi, z_hat, "center", index)] for hi in h.inners], **kw)

    @property
    def d(self) -> int:
        return len(self.inner_cuts)

    @property
    def size(self) -> int:
        return sum(len(c) for c in self.inner_cuts)

    def inner_values(self, z) -> np.ndarray:
        if any(not c for c in self.inner_cuts):
            raise UninitializedModelError("structured model has an empty inner model")
        return np.array([np.max(_cut_values(c, z)) for c in self.inner_cuts])

    def evaluate(self, z) -> float:
        return self.h0.value(self.inner_values(z))

    def inner_subgradient(self, i: int, z) -> np.ndarray:
        vals = _cut_values(self.inner_cuts[i], z)
        return self.inner_cuts[i][int(np.argmax(vals))].slope.copy()

    def model_subgradient(self, z, lam=None, sfrak=None) -> np.ndarray:
        """sum_i lam_i sfrak_i; without multipliers the chain rule at z."""
        if lam is None:
            lam = self.h0.subgradient(self.inner_values(z))
        if sfrak is None:
            sfrak = [self.inner_subgradient(i, z) for i in range(self.d)]
        return np.sum([li * si for li, si in zip(lam, sfrak)], axis=0)

    def max_slope_norm(self) -> float:
        return max(float(np.linalg.norm(c.slope)) for cuts in self.inner_cuts for c in cuts)

    def update_after_serious(self, z_hat, inner_values, inner_slopes, index: int = 0) -> "StructuredModel":
        z_hat = np.asarray(z_hat, dtype=float)
        return self._like([[Linearization(z_hat.copy(), float(v), np.asarray(s, dtype=float).copy(),
                                          "center", index)]
                           for v, s in zip(inner_values, inner_slopes)])

    def update_after_null(self, centers: Sequence[Linearization], trials: Sequence[Linearization],
                          aggregates: Sequence[Linearization], mu=None) -> "StructuredModel":
        """Each inner model keeps active cuts, the trial, the center and the aggregate."""
        out = []
        for i in range(self.d):
            old = self.inner_cuts[i]
            if mu is None:
                active = [c for c in old if c.tag != "center"]
                weights = [0.0] * len(active)
            else:
                sel = [j for j, a in enumerate(mu[i]) if a > self.activity_threshold
                       and old[j].tag != "center"]
                active = [old[j] for j in sel]
                weights = [mu[i][j] for j in sel]
            cuts = [centers[i], trials[i], aggregates[i]]
            if len(active) + 3 > self.max_bundle:
                order = np.argsort(-np.asarray(weights), kind="stable")[: self.max_bundle - 3]
                active = [active[j] for j in sorted(order)]
            cuts += [Linearization(c.anchor, c.value, c.slope,
                                   "trial" if c.tag != "aggregate" else "aggregate", c.index)
                     for c in active]
            out.append(cuts)
        return self._like(out)

    def flatten(self) -> CuttingPlaneModel:
        """Equivalent flat model; requires d = 1 and a polyhedral h0.

        With h0(r) = max_p (c_p r + e_p), c_p >= 0, the composition equals
        max over (p, j) of c_p * cut_j(z) + e_p.
        """
        terms = self.h0.epigraph_terms()
        if self.d != 1 or terms is None:
            raise InternalConsistencyError("flatten needs d = 1 and a polyhedral h0")
        cuts = self.inner_cuts[0]
        m = cuts[0].anchor.size
        # merge the sum of max-terms of a scalar h0 into one max over combined pieces
        pieces = [(0.0, 0.0)]
        for C, e in terms:
            pieces = [(c0 + float(C[p][0]), e0 + float(e[p])) for c0, e0 in pieces
                      for p in range(C.shape[0])]
        flat = []
        for c_p, e_p in pieces:
            for cut in cuts:
                if c_p == 0.0:
                    flat.append(Linearization(np.zeros(m), e_p, np.zeros(m), "trial", cut.index))
                    break
                flat.append(Linearization(cut.anchor, c_p * cut.value + e_p, c_p * cut.slope,
                                          "trial", cut.index))
        return CuttingPlaneModel(flat, self.activity_threshold, max(len(flat), 3))

    def to_dict(self) -> dict:
        return {"kind": "structured", "h0": self.h0.to_dict(),
                "inner": [[c.to_dict() for c in cuts] for cuts in self.inner_cuts]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


__all__ = ["Linearization", "combine", "CuttingPlaneModel", "StructuredModel"]
