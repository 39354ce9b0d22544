"""Abstract model interface: four density families and their factorized joints.

A :class:`ModelSpec` bundles log-space evaluators and samplers for

* the per-region identifier transition,
* the per-vertex state transition (one evaluator covering both the staying
  case, where an ancestor state is supplied, and the entering case, where the
  ancestor argument is ``None``),
* the neighborhood interaction factor, and
* the per-vertex observation density.

Evaluators receive the full current identifier; models that condition on a
regional restriction derive it themselves from the partition they were built
with. All evaluators must be pure, and samplers take an explicit generator so
nothing hides shared state. Public density operations in this module return
linear-space values; everything is accumulated in log space internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping

from .errors import DomainError
from .graph import Identifier, RegionalPartition, SpatialLayout, neighborhood


@dataclass(frozen=True)
class LatentConfiguration:
    """An identifier together with one state value per active vertex."""

    identifier: Identifier
    states: Mapping[int, Any]

    def __post_init__(self):
        if set(self.states.keys()) != set(self.identifier.active):
            raise DomainError("states must be keyed exactly by the active vertices")


@dataclass(frozen=True)
class DensityBounds:
    """Two-sided bounds on the four density families."""

    eps_d: float
    eps_u: float
    epsp_d: float
    epsp_u: float
    gamma_d: float
    gamma_u: float
    kappa_d: float
    kappa_u: float

    def __post_init__(self):
        pairs = (
            ("eps", self.eps_d, self.eps_u),
            ("epsp", self.epsp_d, self.epsp_u),
            ("gamma", self.gamma_d, self.gamma_u),
            ("kappa", self.kappa_d, self.kappa_u),
        )
        for name, lo, hi in pairs:
            if not (lo > 0 and hi > 0):
                raise DomainError(f"{name} bounds must be strictly positive")
            if lo > hi:
                raise DomainError(f"{name} lower bound exceeds upper bound")


@dataclass(frozen=True)
class ModelSpec:
    """Log-space density evaluators and samplers defining one model.

    Callable signatures:

    * ``log_region_identifier(t, region, k_region, k_prev, x_prev_region)``
    * ``sample_region_identifier(t, region, k_prev, x_prev_region, rng)``
    * ``log_transition(t, v, x_v, k_t, ancestor_or_None)``
    * ``sample_transition(t, v, k_t, ancestor_or_None, rng)``
    * ``log_interaction(t, v, x_v, neighbor_states)``
    * ``log_observation(t, v, y_v, k_t, x_v)``

    ``propagate_block`` and ``weight_terms_block`` are optional vectorized
    fast paths used by the filter engine when present; they must match the
    per-vertex callables in distribution and in value respectively.
    ``propagate_block(t, k_t, ancestor_states, rng)`` returns a full state
    mapping for the active set; ``weight_terms_block(t, k_t, states, y_t)``
    returns per-vertex ``log g + log interaction`` aligned to the sorted
    active set.
    """

    log_region_identifier: Callable[..., float]
    sample_region_identifier: Callable[..., frozenset]
    log_transition: Callable[..., float]
    sample_transition: Callable[..., Any]
    log_interaction: Callable[..., float]
    log_observation: Callable[..., float]
    time_inhomogeneous: bool = True
    propagate_block: Callable[..., Mapping[int, Any]] | None = None
    weight_terms_block: Callable[..., Any] | None = None


def _ancestor(x_prev: LatentConfiguration, v: int) -> Any | None:
    # Entering vertices must never touch the previous state mapping.
    if v in x_prev.identifier:
        return x_prev.states[v]
    return None


def joint_transition_density(
    model: ModelSpec,
    t: int,
    x_t: LatentConfiguration,
    x_prev: LatentConfiguration,
    layout: SpatialLayout,
    r: int,
    regions: RegionalPartition | None = None,
) -> float:
    """Product over active vertices of transition times interaction factors."""
    del regions  # evaluators hold their own regional view
    k = x_t.identifier
    total = 0.0
    for v in k:
        try:
            x_v = x_t.states[v]
        except KeyError:
            raise DomainError(f"state missing for active vertex {v}") from None
        nbrs = {w: x_t.states[w] for w in neighborhood(layout, k, v, r)}
        total += model.log_transition(t, v, x_v, k, _ancestor(x_prev, v))
        total += model.log_interaction(t, v, x_v, nbrs)
    return math.exp(total)


def identifier_transition_density(
    model: ModelSpec,
    t: int,
    k_t: Identifier,
    k_prev: Identifier,
    x_prev: LatentConfiguration,
    regions: RegionalPartition,
) -> float:
    """Product over regions of the regional identifier transition factors."""
    total = 0.0
    for region in regions.regions:
        k_region = k_t.intersection(region)
        x_region = {v: x_prev.states[v] for v in k_prev if v in region}
        total += model.log_region_identifier(t, region, k_region, k_prev, x_region)
    return math.exp(total)


def joint_observation_density(
    model: ModelSpec,
    t: int,
    y_t: Mapping[int, Any],
    x_t: LatentConfiguration,
    regions: RegionalPartition | None = None,
) -> float:
    """Product over active vertices of the observation densities."""
    del regions
    k = x_t.identifier
    total = 0.0
    for v in k:
        if v not in y_t:
            raise DomainError(f"observation missing for active vertex {v}")
        total += model.log_observation(t, v, y_t[v], k, x_t.states[v])
    return math.exp(total)


def cluster_conditional_density(
    model: ModelSpec,
    t: int,
    cluster: Iterable[int],
    x_t: LatentConfiguration,
    x_prev: LatentConfiguration,
    y_t: Mapping[int, Any],
    layout: SpatialLayout,
    r: int,
    regions: RegionalPartition | None = None,
) -> float:
    """One cluster's factor of the joint conditional density of states and data."""
    del regions
    k = x_t.identifier
    members = frozenset(cluster)
    if not members <= k.as_set:
        raise DomainError("cluster must be contained in the active identifier")
    total = 0.0
    for v in sorted(members):
        x_v = x_t.states[v]
        nbrs = {w: x_t.states[w] for w in neighborhood(layout, k, v, r)}
        if v not in y_t:
            raise DomainError(f"observation missing for active vertex {v}")
        total += model.log_transition(t, v, x_v, k, _ancestor(x_prev, v))
        total += model.log_interaction(t, v, x_v, nbrs)
        total += model.log_observation(t, v, y_t[v], k, x_v)
    return math.exp(total)


def gibbs_unnormalized_density(
    potentials: Iterable[tuple[tuple[int, ...], Callable[..., float]]],
    x: Mapping[int, Any],
) -> float:
    """``exp(-U(x))`` for an energy summed over clique potentials.

    ``potentials`` is an iterable of ``(clique, fn)`` pairs where ``fn`` takes
    the clique's state values in clique order. The normalizing constant is
    never computed.
    """
    energy = 0.0
    for clique, fn in potentials:
        energy += fn(*(x[v] for v in clique))
    return math.exp(-energy)
