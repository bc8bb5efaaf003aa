"""Forward simulation of interest diffusion on a static co-authorship graph.

Every member's next profile is a convex combination of their own profile, the
average of their neighbors' profiles, and an external source profile; the mix
is set by the neighbor susceptibilities x_ij and the trend susceptibility
x_is. With the source switched off the dynamics conserve a weighted average
of the profiles (the consensus profile), with weights solving a per-component
balance equation; with uniform x_ij those weights are proportional to degree.

The update is synchronous: all members advance together, one step per
calendar year.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .core import InterestProfile, SocialGraph, WeightedInterestGraph

__all__ = [
    "FeasibilityError",
    "ConvergenceError",
    "ConservationError",
    "SusceptibilityConfig",
    "SimulationState",
    "EquilibriumWeights",
    "Simulator",
    "step",
    "integrate_continuous",
    "solve_equilibrium",
    "conserved_average",
    "authority",
    "relax_to_consensus",
    "load_scenario",
    "Scenario",
]

FEASIBILITY_TOL = 1e-12


class FeasibilityError(ValueError):
    """Susceptibilities violate the bounds that keep likelihoods in [0, 1]."""


class ConvergenceError(RuntimeError):
    """An iterative solve hit its cap; the message carries the residual."""


class ConservationError(ValueError):
    """A conserved-quantity operation was requested with a nonzero source term."""


class SusceptibilityConfig:
    """Per-directed-pair neighbor susceptibilities plus per-member trend
    susceptibility.

    Three shapes cover all uses: one uniform value, one value per member
    (applied toward every neighbor), or explicit directed pairs. ``x_pair(i, j)``
    is the susceptibility of i toward j; the per-member mean of those values
    plus the trend susceptibility must not exceed 1.
    """

    def __init__(self, pair_fn, trend_fn, describe: str):
        self._pair_fn = pair_fn
        self._trend_fn = trend_fn
        self.describe = describe

    @classmethod
    def uniform(cls, x: float, x_trend: float = 0.0) -> "SusceptibilityConfig":
        return cls(lambda i, j: x, lambda i: x_trend, f"uniform(x={x}, x_trend={x_trend})")

    @classmethod
    def per_member(
        cls,
        x: Mapping[str, float],
        x_trend: Mapping[str, float] | float = 0.0,
        x_default: float = 0.0,
        x_trend_default: float = 0.0,
    ) -> "SusceptibilityConfig":
        if isinstance(x_trend, (int, float)):
            trend_fn = lambda i: float(x_trend)
        else:
            trend_fn = lambda i: float(x_trend.get(i, x_trend_default))
        return cls(
            lambda i, j: float(x.get(i, x_default)),
            trend_fn,
            "per_member",
        )

    @classmethod
    def per_pair(
        cls,
        pairs: Mapping[tuple[str, str], float],
        x_trend: Mapping[str, float] | float = 0.0,
        x_default: float = 0.0,
        x_trend_default: float = 0.0,
    ) -> "SusceptibilityConfig":
        if isinstance(x_trend, (int, float)):
            trend_fn = lambda i: float(x_trend)
        else:
            trend_fn = lambda i: float(x_trend.get(i, x_trend_default))
        return cls(
            lambda i, j: float(pairs.get((i, j), x_default)),
            trend_fn,
            "per_pair",
        )

    def x_pair(self, i: str, j: str) -> float:
        return self._pair_fn(i, j)

    def x_trend(self, i: str) -> float:
        return self._trend_fn(i)

    def x_mean(self, i: str, graph: SocialGraph) -> float:
        """Mean susceptibility toward the neighbors; 0 for isolated members."""
        if i not in graph:
            return 0.0
        neighbors = graph.neighbors(i)
        if not neighbors:
            return 0.0
        return sum(self._pair_fn(i, j) for j in neighbors) / len(neighbors)

    def scaled(self, factor: float) -> "SusceptibilityConfig":
        pair_fn, trend_fn = self._pair_fn, self._trend_fn
        return SusceptibilityConfig(
            lambda i, j: pair_fn(i, j) * factor,
            lambda i: trend_fn(i) * factor,
            f"{self.describe} * {factor}",
        )

    def validate(self, graph: SocialGraph, members=()) -> None:
        """Raise FeasibilityError unless all values are admissible on this graph."""
        for i in sorted(set(graph.nodes()) | set(members)):
            xs = self._trend_fn(i)
            if xs < 0.0:
                raise FeasibilityError(f"x_trend({i!r}) = {xs} is negative")
            xm = 0.0
            if i in graph and graph.degree(i) > 0:
                for j in graph.neighbors(i):
                    xij = self._pair_fn(i, j)
                    if xij < 0.0 or xij > 1.0:
                        raise FeasibilityError(f"x({i!r} -> {j!r}) = {xij} outside [0, 1]")
                xm = self.x_mean(i, graph)
            if xm + xs > 1.0 + FEASIBILITY_TOL:
                raise FeasibilityError(
                    f"member {i!r}: mean neighbor susceptibility {xm} plus trend "
                    f"susceptibility {xs} exceeds 1"
                )


@dataclass
class SimulationState:
    """Profiles of all members at one step, plus the current source profile."""

    profiles: WeightedInterestGraph
    source: InterestProfile | None = None
    step: int = 0


class Simulator:
    """Vectorized engine for repeated steps over a fixed graph and config.

    State lives in an (n_members, n_topics) array; the neighbor-average term
    is one sparse matrix product, so a step costs O(edges * topics). Results
    are deterministic and independent of any worker count.
    """

    def __init__(self, graph: SocialGraph, config: SusceptibilityConfig, state: SimulationState):
        config.validate(graph, members=state.profiles.members())
        self.graph = graph
        self.config = config
        self.n_topics = state.profiles.n_topics
        self.members = sorted(set(graph.nodes()) | set(state.profiles.members()))
        self._index = {m: i for i, m in enumerate(self.members)}
        n = len(self.members)

        rows, cols, vals = [], [], []
        x_mean = np.zeros(n)
        for m in self.members:
            i = self._index[m]
            if m not in graph:
                continue
            neighbors = graph.neighbors(m)
            if not neighbors:
                continue
            inv_deg = 1.0 / len(neighbors)
            acc = 0.0
            for nb in neighbors:
                x = config.x_pair(m, nb)
                rows.append(i)
                cols.append(self._index[nb])
                vals.append(x * inv_deg)
                acc += x
            x_mean[i] = acc * inv_deg
        self._w = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self._x_mean = x_mean
        self._x_trend = np.array([config.x_trend(m) for m in self.members])
        self._state = np.zeros((n, self.n_topics))
        for m, prof in state.profiles.rows.items():
            for k, v in prof.weights.items():
                self._state[self._index[m], k] = v
        self._source = None if state.source is None else state.source.dense()
        if self._source is None and np.any(self._x_trend > 0.0):
            raise FeasibilityError("trend susceptibility is nonzero but no source profile given")
        self.step_count = state.step
        self.year0 = state.profiles.year

    def set_source(self, source: InterestProfile | None) -> None:
        self._source = None if source is None else source.dense()

    def advance(self, n_steps: int = 1, source_schedule: Callable[[int], InterestProfile | None] | None = None) -> None:
        for _ in range(n_steps):
            if source_schedule is not None:
                prof = source_schedule(self.step_count)
                if prof is not None:
                    self._source = prof.dense()
            keep = (1.0 - self._x_mean - self._x_trend)[:, None]
            nxt = keep * self._state + self._w @ self._state
            if self._source is not None:
                nxt += self._x_trend[:, None] * self._source[None, :]
            self._state = nxt
            self.step_count += 1

    def profile_array(self) -> np.ndarray:
        return self._state

    def member_index(self, member: str) -> int:
        return self._index[member]

    def state(self) -> SimulationState:
        rows = {}
        for m in self.members:
            vec = self._state[self._index[m]]
            rows[m] = InterestProfile({int(k): float(v) for k, v in enumerate(vec) if v != 0.0}, self.n_topics)
        source = None if self._source is None else InterestProfile.from_dense(self._source)
        return SimulationState(
            WeightedInterestGraph(rows, self.year0 + self.step_count, self.n_topics),
            source,
            self.step_count,
        )


def step(state: SimulationState, config: SusceptibilityConfig, graph: SocialGraph) -> SimulationState:
    """One synchronous update of all members; rejects infeasible configs."""
    sim = Simulator(graph, config, state)
    sim.advance(1)
    return sim.state()


def integrate_continuous(
    state: SimulationState,
    rates: SusceptibilityConfig,
    graph: SocialGraph,
    duration: float,
    dt: float,
) -> SimulationState:
    """Explicit-Euler integration of the continuous-time limit.

    ``rates`` are susceptibilities per unit time; each Euler step applies the
    discrete update with susceptibilities rates * dt, which must be feasible.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    scaled = rates.scaled(dt)
    try:
        scaled.validate(graph, members=state.profiles.members())
    except FeasibilityError as exc:
        raise FeasibilityError(f"dt={dt} makes the per-step susceptibilities infeasible: {exc}") from exc
    n_steps = int(round(duration / dt))
    sim = Simulator(graph, scaled, state)
    sim.advance(n_steps)
    out = sim.state()
    out.step = state.step + n_steps
    return out


@dataclass
class EquilibriumWeights:
    """Positive per-member weights making the profile average conserved;
    normalized to sum 1 over their connected component."""

    weights: dict[str, float]
    residual: float
    iterations: int


def _equilibrium_for_indices(w: sp.csr_matrix, x_mean: np.ndarray, deg: np.ndarray, tol: float, max_iter: int):
    """Damped power iteration for the balance equations on one component."""
    n = x_mean.shape[0]
    if n == 1:
        return np.array([1.0]), 0.0, 0
    if np.any(x_mean <= 0.0):
        raise FeasibilityError("equilibrium weights need x_ij > 0 on every component edge")
    b = deg / deg.sum()
    inv_x = 1.0 / x_mean
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        image = (w.T @ b) * inv_x
        residual = float(np.max(np.abs(image - b)) / np.max(np.abs(b)))
        if residual < tol:
            return b, residual, iteration - 1
        b = 0.5 * (b + image)
        b /= b.sum()
    raise ConvergenceError(
        f"equilibrium weights did not converge in {max_iter} iterations (residual {residual:.3e})"
    )


def solve_equilibrium(
    config: SusceptibilityConfig,
    graph: SocialGraph,
    tol: float = 1e-10,
    max_iter: int = 200_000,
) -> EquilibriumWeights:
    """Equilibrium weights for a connected graph, normalized to sum 1."""
    comps = graph.connected_components()
    if len(comps) != 1:
        raise ValueError(f"graph must be one connected component (found {len(comps)})")
    members = sorted(comps[0])
    index = {m: i for i, m in enumerate(members)}
    n = len(members)
    rows, cols, vals = [], [], []
    x_mean = np.zeros(n)
    deg = np.ones(n)
    for m in members:
        neighbors = graph.neighbors(m)
        if not neighbors:
            continue
        deg[index[m]] = len(neighbors)
        inv = 1.0 / len(neighbors)
        acc = 0.0
        for nb in neighbors:
            x = config.x_pair(m, nb)
            rows.append(index[m])
            cols.append(index[nb])
            vals.append(x * inv)
            acc += x
        x_mean[index[m]] = acc * inv
    w = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    b, residual, iterations = _equilibrium_for_indices(w, x_mean, deg, tol, max_iter)
    return EquilibriumWeights({m: float(b[index[m]]) for m in members}, residual, iterations)


def conserved_average(
    state: SimulationState,
    config: SusceptibilityConfig,
    weights: EquilibriumWeights,
) -> InterestProfile:
    """The weighted profile average that the source-free dynamics conserve."""
    for m in weights.weights:
        if config.x_trend(m) != 0.0:
            raise ConservationError(
                f"member {m!r} has nonzero trend susceptibility; the average is not conserved"
            )
    acc: dict[int, float] = {}
    for m, b in weights.weights.items():
        prof = state.profiles.profile(m)
        for k, v in prof.weights.items():
            acc[k] = acc.get(k, 0.0) + b * v
    return InterestProfile(acc, state.profiles.n_topics)


def authority(member: str, config: SusceptibilityConfig, graph: SocialGraph) -> float:
    """Sum of the neighbors' susceptibilities toward the member; 0 if isolated."""
    if member not in graph:
        return 0.0
    return float(sum(config.x_pair(nb, member) for nb in graph.neighbors(member)))


def relax_to_consensus(
    state: SimulationState,
    config: SusceptibilityConfig,
    graph: SocialGraph,
    tol: float = 1e-6,
    max_steps: int = 100_000,
    weights_tol: float = 1e-12,
) -> tuple[SimulationState, int]:
    """Iterate the source-free dynamics until every profile is within ``tol``
    of its component's conserved average. Returns (final state, steps taken)."""
    sim = Simulator(graph, config, state)
    if np.any(sim._x_trend != 0.0):
        raise ConservationError("consensus relaxation requires zero trend susceptibility")

    n_topics = state.profiles.n_topics
    targets = np.zeros((len(sim.members), n_topics))
    for comp in graph.connected_components():
        sub_nodes = sorted(comp)
        if len(sub_nodes) == 1:
            m = sub_nodes[0]
            targets[sim.member_index(m)] = sim.profile_array()[sim.member_index(m)]
            continue
        sub_graph = SocialGraph({m: graph.neighbors(m) for m in sub_nodes}, graph.year)
        eq = solve_equilibrium(config, sub_graph, tol=weights_tol)
        idx = np.array([sim.member_index(m) for m in sub_nodes])
        b = np.array([eq.weights[m] for m in sub_nodes])
        lhat = b @ sim.profile_array()[idx]
        targets[idx] = lhat[None, :]
    # members outside the graph keep their own profile (their own consensus)
    for m in sim.members:
        if m not in graph:
            targets[sim.member_index(m)] = sim.profile_array()[sim.member_index(m)]

    steps = 0
    while True:
        deviation = float(np.max(np.abs(sim.profile_array() - targets))) if len(sim.members) else 0.0
        if deviation < tol:
            break
        if steps >= max_steps:
            raise ConvergenceError(
                f"consensus not reached in {max_steps} steps (max deviation {deviation:.3e})"
            )
        sim.advance(1)
        steps += 1
    return sim.state(), steps


@dataclass
class Scenario:
    graph: SocialGraph
    config: SusceptibilityConfig
    state: SimulationState
    source_schedule: Callable[[int], InterestProfile | None] | None
    steps: int
    n_topics: int


def _profile_from_json(obj, n_topics: int) -> InterestProfile:
    return InterestProfile({int(k): float(v) for k, v in obj.items()}, n_topics)


def _susceptibility_from_json(obj, trend_obj) -> SusceptibilityConfig:
    def trend_fn_parts(spec):
        if spec is None:
            return 0.0, 0.0, None
        if "uniform" in spec:
            return float(spec["uniform"]), 0.0, None
        mapping = {str(k): float(v) for k, v in spec.get("per_member", {}).items()}
        return None, float(spec.get("default", 0.0)), mapping

    uniform_t, default_t, mapping_t = trend_fn_parts(trend_obj)
    trend_arg = uniform_t if mapping_t is None else mapping_t

    if obj is None or "uniform" in (obj or {}):
        x = float((obj or {}).get("uniform", 0.0))
        if mapping_t is None:
            return SusceptibilityConfig.uniform(x, trend_arg)
        return SusceptibilityConfig.per_pair({}, trend_arg, x_default=x, x_trend_default=default_t)
    if "per_member" in obj:
        x_map = {str(k): float(v) for k, v in obj["per_member"].items()}
        return SusceptibilityConfig.per_member(
            x_map, trend_arg, x_default=float(obj.get("default", 0.0)), x_trend_default=default_t
        )
    if "pairs" in obj:
        pairs = {(str(i), str(j)): float(v) for i, j, v in obj["pairs"]}
        return SusceptibilityConfig.per_pair(
            pairs, trend_arg, x_default=float(obj.get("default", 0.0)), x_trend_default=default_t
        )
    raise ValueError("susceptibility block must define 'uniform', 'per_member', or 'pairs'")


def load_scenario(path) -> Scenario:
    """Read a simulation scenario from its JSON file format."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    n_topics = int(data["n_topics"])
    edges = [(str(a), str(b)) for a, b in data.get("edges", [])]
    members = [str(m) for m in data.get("members", [])]
    profile_members = list(data.get("profiles", {}).keys())
    graph = SocialGraph.from_edges(edges, nodes=set(members) | set(profile_members), year=int(data.get("year", 0)))
    rows = {str(m): _profile_from_json(p, n_topics) for m, p in data.get("profiles", {}).items()}
    for m in graph.nodes():
        rows.setdefault(m, InterestProfile.trivial(n_topics))
    config = _susceptibility_from_json(data.get("susceptibility"), data.get("trend_susceptibility"))

    source_obj = data.get("source")
    schedule = None
    source0 = None
    if isinstance(source_obj, dict) and "by_step" in source_obj:
        by_step = {int(k): _profile_from_json(v, n_topics) for k, v in source_obj["by_step"].items()}
        source0 = by_step.get(0)
        schedule = lambda t: by_step.get(t)
        if source0 is None and by_step:
            source0 = by_step[min(by_step)]
    elif isinstance(source_obj, dict):
        source0 = _profile_from_json(source_obj, n_topics)

    state = SimulationState(
        WeightedInterestGraph(rows, int(data.get("year", 0)), n_topics), source0, 0
    )
    return Scenario(graph, config, state, schedule, int(data.get("steps", 1)), n_topics)
