"""Benchmark model: spatially smoothed latent fields with AR(1) temporal trends.

The latent state of an active location ``i`` is the pair ``(phi_i, varphi_i)``
and observations are generated around ``psi_i = phi_i + varphi_i``, either
Normal or Poisson (with log link). The spatial layer ``phi`` follows a Leroux
conditional-autoregression over the adjacency restricted to currently active
locations and is drawn jointly, per time step, from the Gaussian field with
the matching precision matrix. The temporal layer ``varphi`` is an AR(1) per
location that restarts from its stationary law whenever a location (re)enters
the active set. Which locations are active evolves by independent per-vertex
Bernoulli enter/stay draws.

The adapter returned by :func:`as_model_spec` splits the joint spatial
Gaussian into a per-vertex proposal factor (the diagonal of the precision)
and pairwise interaction factors carrying the off-diagonal terms, each
undirected pair contributing half of its exponent to either endpoint. The
per-vertex weight product over any partition therefore reproduces the joint
factor exactly once.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import DatasetError, DomainError, SingularPrecisionError
from .graph import Identifier, RegionalPartition, SpatialLayout
from .model import ModelSpec

_LOG_2PI = math.log(2.0 * math.pi)


class ObsModel(str, Enum):
    NORMAL = "normal"
    POISSON = "poisson"


@dataclass(frozen=True)
class CarParams:
    """Parameters of the benchmark model.

    ``sigma2_tilde`` holds the per-time spatial variance, indexed so that
    time step ``t`` (1-based) uses ``sigma2_tilde[t - 1]``.
    """

    rho_spatial: float
    rho_temporal: float
    sigma2: float
    sigma2_tilde: tuple[float, ...]
    nu2: float = 1.0
    obs_model: ObsModel = ObsModel.NORMAL
    p_enter: float = 0.9
    p_stay: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.rho_spatial <= 1.0:
            raise DomainError("rho_spatial must lie in [0, 1]")
        if not -1.0 < self.rho_temporal < 1.0:
            raise DomainError("rho_temporal must lie in (-1, 1)")
        if self.sigma2 <= 0 or self.nu2 <= 0:
            raise DomainError("variances must be positive")
        st = tuple(float(s) for s in self.sigma2_tilde)
        if not st or any(s <= 0 for s in st):
            raise DomainError("sigma2_tilde must be non-empty and positive")
        object.__setattr__(self, "sigma2_tilde", st)
        object.__setattr__(self, "obs_model", ObsModel(self.obs_model))
        for name in ("p_enter", "p_stay"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")

    def sigma2_tilde_at(self, t: int) -> float:
        if t < 1 or t > len(self.sigma2_tilde):
            raise DomainError(f"no spatial variance configured for time {t}")
        return self.sigma2_tilde[t - 1]


def temporal_neighborhood_matrix(horizon: int) -> np.ndarray:
    """Binary tridiagonal matrix linking consecutive time steps."""
    d = np.zeros((horizon, horizon), dtype=np.int64)
    for t in range(horizon - 1):
        d[t, t + 1] = d[t + 1, t] = 1
    return d


def effective_adjacency(base: SpatialLayout, k: Identifier) -> np.ndarray:
    """Base adjacency masked to active vertices, over sorted ``k``."""
    if not k.as_set <= set(base.vertices):
        raise DomainError("identifier not contained in the layout")
    idx = [base.index_of(v) for v in k.active]
    return base.adjacency[np.ix_(idx, idx)].copy()


def phi_full_conditional(
    i: int,
    phi_others: Mapping[int, float],
    w_t: np.ndarray,
    params: CarParams,
    t: int,
) -> tuple[float, float]:
    """Conditional mean and variance of one vertex's spatial component.

    ``w_t`` is the masked adjacency over the active set, which is inferred as
    the sorted union of ``i`` and the keys of ``phi_others``.
    """
    active = sorted(set(phi_others) | {i})
    pos = active.index(i)
    rho = params.rho_spatial
    row = np.asarray(w_t, dtype=float)[pos]
    weight_sum = float(row.sum())
    neigh_sum = sum(
        float(row[j]) * phi_others[v]
        for j, v in enumerate(active)
        if v != i and row[j] != 0.0
    )
    denom = rho * weight_sum + 1.0 - rho
    return (rho * neigh_sum / denom, params.sigma2_tilde_at(t) / denom)


def leroux_precision(w_t: np.ndarray, params: CarParams, t: int) -> np.ndarray:
    """Joint precision of the spatial field over the active set.

    Raises :class:`SingularPrecisionError` when the matrix is not positive
    definite (e.g. fully intrinsic smoothing on a masked graph).
    """
    w = np.asarray(w_t, dtype=float)
    rho = params.rho_spatial
    deg = w.sum(axis=1)
    q = (rho * (np.diag(deg) - w) + (1.0 - rho) * np.eye(len(w)))
    q /= params.sigma2_tilde_at(t)
    _cholesky(q)
    return q


def _cholesky(q: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(q)
    except np.linalg.LinAlgError:
        raise SingularPrecisionError(
            "spatial precision is not positive definite"
        ) from None


def varphi_step(prev: float | None, params: CarParams) -> tuple[float, float]:
    """Mean and variance of the temporal component's next value.

    With an ancestor this is the AR(1) step; without one it is the AR(1)
    stationary law, which requires ``|rho_temporal| < 1``.
    """
    theta = params.rho_temporal
    if prev is None:
        if abs(theta) >= 1.0:
            raise DomainError("no stationary law for |rho_temporal| >= 1")
        return (0.0, params.sigma2 / (1.0 - theta * theta))
    return (theta * float(prev), params.sigma2)


def log_observation_density(y, psi: float, params: CarParams) -> float:
    if params.obs_model is ObsModel.NORMAL:
        return -0.5 * (_LOG_2PI + math.log(params.nu2)) - (float(y) - psi) ** 2 / (
            2.0 * params.nu2
        )
    count = _checked_count(y)
    return count * psi - math.exp(psi) - math.lgamma(count + 1.0)


def observation_density(y, psi: float, params: CarParams) -> float:
    """Normal density or Poisson mass of one observation around ``psi``."""
    return math.exp(log_observation_density(y, psi, params))


def _checked_count(y) -> int:
    count = float(y)
    if count < 0 or count != int(count):
        raise DomainError(f"count observations must be non-negative integers, got {y!r}")
    return int(count)


def identifier_step_density(
    k_region: Iterable[int],
    k_prev: Identifier | Iterable[int],
    region: Iterable[int],
    params: CarParams,
) -> float:
    """Probability of one region's next active set under per-vertex Bernoulli moves."""
    chosen = frozenset(k_region)
    prev = frozenset(k_prev)
    total = 1.0
    for v in sorted(frozenset(region)):
        p = params.p_stay if v in prev else params.p_enter
        total *= p if v in chosen else 1.0 - p
    return total


@dataclass(frozen=True)
class CarDataset:
    """One simulated trajectory: masks, latent states, observations.

    ``identifiers[0]`` is the initial active set (the full universe) and
    ``identifiers[t]``, ``states[t - 1]``, ``observations[t - 1]`` describe
    time step ``t`` for ``t = 1..T``. State values are ``(phi, varphi)``.
    """

    universe: tuple[int, ...]
    initial_varphi: Mapping[int, float]
    identifiers: tuple[Identifier, ...]
    states: tuple[Mapping[int, tuple[float, float]], ...]
    observations: tuple[Mapping[int, float], ...]

    @property
    def horizon(self) -> int:
        return len(self.states)

    def psi(self, t: int, v: int) -> float:
        phi, varphi = self.states[t - 1][v]
        return phi + varphi


def simulate_dataset(
    params: CarParams,
    layout: SpatialLayout,
    regions: RegionalPartition,
    horizon: int,
    seed: int,
) -> CarDataset:
    """Forward-simulate one trajectory; fully determined by ``seed``.

    The initial active set is the whole universe and every vertex draws its
    initial temporal component uniformly from [1, 2]. The spatial layer is
    drawn jointly per time step over the active set; there is no spatial
    layer at time zero.
    """
    del regions  # identifier moves are per-vertex, so any partition factorizes
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    if len(params.sigma2_tilde) < horizon:
        raise DomainError("sigma2_tilde must provide a variance for every time step")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    verts = layout.vertices

    initial_varphi = {v: 1.0 + rng.random() for v in verts}
    k_prev = Identifier.of(verts)
    prev_varphi: dict[int, float] = dict(initial_varphi)

    identifiers = [k_prev]
    states: list[dict[int, tuple[float, float]]] = []
    observations: list[dict[int, float]] = []

    for t in range(1, horizon + 1):
        keep = [
            v
            for v in verts
            if rng.random() < (params.p_stay if v in k_prev else params.p_enter)
        ]
        k_t = Identifier.of(keep)

        phi_t: dict[int, float] = {}
        if keep:
            w = effective_adjacency(layout, k_t).astype(float)
            q = leroux_precision(w, params, t)
            chol = _cholesky(q)
            z = rng.standard_normal(len(keep))
            phi_vec = np.linalg.solve(chol.T, z)
            phi_t = {v: float(phi_vec[i]) for i, v in enumerate(k_t.active)}

        varphi_t: dict[int, float] = {}
        for v in k_t.active:
            anc = prev_varphi[v] if v in k_prev else None
            mean, var = varphi_step(anc, params)
            varphi_t[v] = mean + math.sqrt(var) * rng.standard_normal()

        obs_t: dict[int, float] = {}
        for v in k_t.active:
            psi = phi_t[v] + varphi_t[v]
            if params.obs_model is ObsModel.NORMAL:
                obs_t[v] = psi + math.sqrt(params.nu2) * rng.standard_normal()
            else:
                obs_t[v] = int(rng.poisson(math.exp(psi)))

        identifiers.append(k_t)
        states.append({v: (phi_t[v], varphi_t[v]) for v in k_t.active})
        observations.append(obs_t)
        k_prev = k_t
        prev_varphi = varphi_t

    return CarDataset(
        universe=verts,
        initial_varphi=initial_varphi,
        identifiers=tuple(identifiers),
        states=tuple(states),
        observations=tuple(observations),
    )


def initial_state(dataset: CarDataset) -> tuple[Identifier, dict[int, tuple[float, float]]]:
    """Point-mass initial condition for a filter run on this dataset."""
    ident = dataset.identifiers[0]
    return ident, {v: (0.0, dataset.initial_varphi[v]) for v in ident.active}


def psi_summary(state: tuple[float, float]) -> float:
    return state[0] + state[1]


_DATASET_HEADER = ["t", "vertex", "active", "phi", "varphi", "psi", "y"]


def save_dataset(dataset: CarDataset, path) -> None:
    """Write one trajectory as CSV, one row per (time, vertex)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_DATASET_HEADER)
        for v in dataset.universe:
            writer.writerow([0, v, 1, "", repr(dataset.initial_varphi[v]), "", ""])
        for t in range(1, dataset.horizon + 1):
            k_t = dataset.identifiers[t]
            for v in dataset.universe:
                if v in k_t:
                    phi, varphi = dataset.states[t - 1][v]
                    y = dataset.observations[t - 1][v]
                    y_txt = repr(int(y)) if float(y).is_integer() and isinstance(y, int) else repr(float(y))
                    writer.writerow(
                        [t, v, 1, repr(phi), repr(varphi), repr(phi + varphi), y_txt]
                    )
                else:
                    writer.writerow([t, v, 0, "", "", "", ""])


def load_dataset(path) -> CarDataset:
    """Read a trajectory written by :func:`save_dataset`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _DATASET_HEADER:
            raise DatasetError(f"unexpected dataset header {header}")
        rows = [row for row in reader if row]

    by_time: dict[int, dict[int, tuple]] = {}
    for i, row in enumerate(rows):
        try:
            t, v, active = int(row[0]), int(row[1]), int(row[2])
        except (ValueError, IndexError):
            raise DatasetError(f"bad dataset row {i + 2}") from None
        by_time.setdefault(t, {})[v] = (active, row[3], row[4], row[6])

    if 0 not in by_time:
        raise DatasetError("dataset has no time-zero rows")
    universe = tuple(sorted(by_time[0]))
    horizon = max(by_time)
    initial_varphi = {v: float(by_time[0][v][2]) for v in universe}

    identifiers = [Identifier.of(universe)]
    states = []
    observations = []
    for t in range(1, horizon + 1):
        if t not in by_time:
            raise DatasetError(f"dataset missing rows for time {t}")
        slice_rows = by_time[t]
        active = sorted(v for v, rec in slice_rows.items() if rec[0] == 1)
        identifiers.append(Identifier.of(active))
        states.append(
            {v: (float(slice_rows[v][1]), float(slice_rows[v][2])) for v in active}
        )
        observations.append({v: float(slice_rows[v][3]) for v in active})
    return CarDataset(
        universe=universe,
        initial_varphi=initial_varphi,
        identifiers=tuple(identifiers),
        states=tuple(states),
        observations=tuple(observations),
    )


class _CarAdapter:
    """Closures behind the ModelSpec, with per-(time, active-set) caching."""

    def __init__(self, params: CarParams, layout: SpatialLayout, regions: RegionalPartition):
        self.params = params
        self.layout = layout
        self.regions = regions
        self._ctx_cache: dict[tuple[int, tuple[int, ...]], tuple] = {}

    def _ctx(self, t: int, k: Identifier):
        """Active list, masked adjacency, and proposal variances for (t, k)."""
        key = (t, k.active)
        ctx = self._ctx_cache.get(key)
        if ctx is None:
            if len(self._ctx_cache) > 8192:
                self._ctx_cache.clear()
            active = k.active
            w = effective_adjacency(self.layout, k).astype(float)
            rho = self.params.rho_spatial
            s2t = self.params.sigma2_tilde_at(t)
            denom = rho * w.sum(axis=1) + (1.0 - rho)
            prop_var = s2t / denom
            coef = rho / (2.0 * s2t)
            index = {v: i for i, v in enumerate(active)}
            ctx = (active, index, w, prop_var, coef)
            self._ctx_cache[key] = ctx
        return ctx

    # -- per-vertex evaluators -------------------------------------------

    def log_transition(self, t, v, x_v, k_t, ancestor):
        active, index, _, prop_var, _ = self._ctx(t, k_t)
        phi, varphi = x_v
        anc_varphi = None if ancestor is None else ancestor[1]
        mean, var = varphi_step(anc_varphi, self.params)
        out = -0.5 * (_LOG_2PI + math.log(var)) - (varphi - mean) ** 2 / (2.0 * var)
        pv = prop_var[index[v]]
        out += -0.5 * (_LOG_2PI + math.log(pv)) - phi * phi / (2.0 * pv)
        return out

    def sample_transition(self, t, v, k_t, ancestor, rng):
        _, index, _, prop_var, _ = self._ctx(t, k_t)
        anc_varphi = None if ancestor is None else ancestor[1]
        mean, var = varphi_step(anc_varphi, self.params)
        varphi = mean + math.sqrt(var) * rng.standard_normal()
        phi = math.sqrt(prop_var[index[v]]) * rng.standard_normal()
        return (phi, varphi)

    def log_interaction(self, t, v, x_v, neighbor_states):
        if not neighbor_states:
            return 0.0
        s2t = self.params.sigma2_tilde_at(t)
        coef = self.params.rho_spatial / (2.0 * s2t)
        phi = x_v[0]
        total = 0.0
        for w, x_w in neighbor_states.items():
            if self.layout.adjacent(v, w):
                total += coef * phi * x_w[0]
        return total

    def log_observation(self, t, v, y_v, k_t, x_v):
        del t, k_t
        return log_observation_density(y_v, x_v[0] + x_v[1], self.params)

    # -- identifier kernel ------------------------------------------------

    def log_region_identifier(self, t, region, k_region, k_prev, x_prev_region):
        del t, x_prev_region
        prob = identifier_step_density(k_region, k_prev, region, self.params)
        return math.log(prob) if prob > 0.0 else -math.inf

    def sample_region_identifier(self, t, region, k_prev, x_prev_region, rng):
        del t, x_prev_region
        prev = k_prev.as_set if isinstance(k_prev, Identifier) else frozenset(k_prev)
        out = []
        for v in sorted(frozenset(region)):
            p = self.params.p_stay if v in prev else self.params.p_enter
            if rng.random() < p:
                out.append(v)
        return frozenset(out)

    # -- vectorized fast paths --------------------------------------------

    def propagate_block(self, t, k_t, ancestor_states, rng):
        active, _, _, prop_var, _ = self._ctx(t, k_t)
        m = len(active)
        theta = self.params.rho_temporal
        z_phi = rng.standard_normal(m)
        z_var = rng.standard_normal(m)
        phi = z_phi * np.sqrt(prop_var)

        sd_step = math.sqrt(self.params.sigma2)
        if abs(theta) < 1.0:
            sd_stat = math.sqrt(self.params.sigma2 / (1.0 - theta * theta))
        else:
            sd_stat = None
        varphi = np.empty(m)
        for i, v in enumerate(active):
            anc = ancestor_states.get(v)
            if anc is None:
                if sd_stat is None:
                    raise DomainError("no stationary law for |rho_temporal| >= 1")
                varphi[i] = sd_stat * z_var[i]
            else:
                varphi[i] = theta * anc[1] + sd_step * z_var[i]
        return {v: (float(phi[i]), float(varphi[i])) for i, v in enumerate(active)}

    def weight_terms_block(self, t, k_t, states, y_t):
        active, _, w, _, coef = self._ctx(t, k_t)
        m = len(active)
        phi = np.fromiter((states[v][0] for v in active), float, m)
        varphi = np.fromiter((states[v][1] for v in active), float, m)
        psi = phi + varphi
        y = np.fromiter((y_t[v] for v in active), float, m)

        if self.params.obs_model is ObsModel.NORMAL:
            nu2 = self.params.nu2
            log_g = -0.5 * (_LOG_2PI + math.log(nu2)) - (y - psi) ** 2 / (2.0 * nu2)
        else:
            if np.any(y < 0) or np.any(y != np.floor(y)):
                raise DomainError("count observations must be non-negative integers")
            lgam = np.fromiter((math.lgamma(c + 1.0) for c in y), float, m)
            log_g = y * psi - np.exp(psi) - lgam

        log_inter = coef * phi * (w @ phi)
        return log_g + log_inter


def as_model_spec(
    params: CarParams, layout: SpatialLayout, regions: RegionalPartition
) -> ModelSpec:
    """Model interface for the benchmark, including vectorized fast paths."""
    adapter = _CarAdapter(params, layout, regions)
    return ModelSpec(
        log_region_identifier=adapter.log_region_identifier,
        sample_region_identifier=adapter.sample_region_identifier,
        log_transition=adapter.log_transition,
        sample_transition=adapter.sample_transition,
        log_interaction=adapter.log_interaction,
        log_observation=adapter.log_observation,
        time_inhomogeneous=True,
        propagate_block=adapter.propagate_block,
        weight_terms_block=adapter.weight_terms_block,
    )
