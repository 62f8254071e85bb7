"""Minimal hardware improvements that meet rate and fidelity targets.

Every improvable parameter is mapped to a probability of no imperfection
p_ni in (0, 1]. Improving a parameter by a factor k replaces p_ni with
p_ni^(1/k), so k = 1 is the baseline and k -> infinity is perfect hardware.
The hardware cost of a candidate is the sum of its improvement factors, and a
genetic algorithm minimizes that cost subject to the targets, with the
targets enforced through large penalty weights.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .engine import NetworkTopology, ProtocolConfig, Simulation, compute_metrics
from .hardware import PARAMETER_KINDS, HardwareParams, PlatformKind
from .targetmetric import PerformanceTarget, targets_met

# ----------------------------------------------------- no-imperfection maps


def to_no_imperfection(value: float, kind: str) -> float:
    if kind == "probability":
        return value
    if kind == "error_probability":
        return 1 - value
    if kind == "n_1e":
        return (1 + math.exp(-1 / value)) / 2
    if kind in ("t1", "t2"):
        return math.exp(-1 / value)
    if kind == "ion_tc":
        return math.exp(-1 / value**2)
    if kind == "emission_fidelity":
        return (4 * value - 1) / 3
    if kind == "phase_std":
        return (1 + math.exp(-(value**2) / 2)) / 2
    raise KeyError(f"unknown parameter kind {kind!r}")


def from_no_imperfection(p: float, kind: str) -> float:
    if not 0 <= p <= 1:
        raise ValueError("no-imperfection probability must lie in [0, 1]")
    if kind == "probability":
        return p
    if kind == "error_probability":
        return 1 - p
    if kind == "n_1e":
        return math.inf if p == 1 else -1 / math.log(2 * p - 1)
    if kind in ("t1", "t2"):
        return math.inf if p == 1 else -1 / math.log(p)
    if kind == "ion_tc":
        return math.inf if p == 1 else 1 / math.sqrt(-math.log(p))
    if kind == "emission_fidelity":
        return (3 * p + 1) / 4
    if kind == "phase_std":
        return 0.0 if p == 1 else math.sqrt(-2 * math.log(2 * p - 1))
    raise KeyError(f"unknown parameter kind {kind!r}")


def perfect_value(kind: str) -> float:
    return from_no_imperfection(1.0, kind)


def improve_parameter(value: float, kind: str, k: float) -> float:
    """Value whose no-imperfection probability is p_ni(value)^(1/k)."""
    if not k >= 1:
        raise ValueError("improvement factor must be at least 1")
    if math.isinf(k):
        return perfect_value(kind)
    if k == 1:
        return value
    if kind in ("t1", "t2"):
        return value * k
    if kind == "ion_tc":
        return value * math.sqrt(k)
    p = to_no_imperfection(value, kind)
    if p == 0:
        return value
    return from_no_imperfection(p ** (1 / k), kind)


# ----------------------------------------------------------------- cost


@dataclass(frozen=True)
class CostWeights:
    w1: float = 1e20  # fidelity shortfall
    w2: float = 1e20  # rate shortfall
    w3: float = 1.0  # hardware cost

    def __post_init__(self):
        if not (self.w1 > 0 and self.w2 > 0 and self.w3 > 0):
            raise ValueError("weights must be positive")


def hardware_cost(factors: Mapping[str, float]) -> float:
    if any(k < 1 for k in factors.values()):
        raise ValueError("improvement factors must be at least 1")
    return float(sum(factors.values()))


def total_cost(
    fidelity: float,
    rate: float,
    factors: Mapping[str, float],
    target: PerformanceTarget,
    weights: CostWeights = CostWeights(),
) -> float:
    cost = weights.w3 * hardware_cost(factors)
    if fidelity < target.fidelity:
        cost += weights.w1 * (1 + (target.fidelity - fidelity) ** 2)
    if rate < target.rate:
        cost += weights.w2 * (1 + (target.rate - rate) ** 2)
    return cost


# ------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Evaluation:
    rate: float
    fidelity: float
    sem_rate: float = 0.0
    sem_fidelity: float = 0.0


class Scenario(Protocol):
    """Anything that turns parameter values and tunables into (rate, F)."""

    @property
    def parameters(self) -> Mapping[str, tuple[float, str]]:  # name -> (baseline, kind)
        ...

    @property
    def tunables(self) -> Mapping[str, tuple[float, float]]:  # name -> (low, high)
        ...

    def evaluate(
        self, values: Mapping[str, float], tunables: Mapping[str, float], n_runs: int, seed: int
    ) -> Evaluation: ...


def _memory_time_key(platform: PlatformKind) -> str:
    return {
        PlatformKind.ABSTRACT: "T2",
        PlatformKind.COLOR_CENTER: "carbon_T2",
        PlatformKind.TRAPPED_ION: "coherence_time",
    }[platform]


@dataclass(frozen=True)
class SimulationScenario:
    """Repeater-chain simulation with improvable hardware.

    Tunables: ``cutoff_fraction`` scales the memory coherence time into the
    cut-off, ``bright_state_parameter`` (single click) and
    ``coincidence_window`` (trapped-ion double click).
    """

    topology: NetworkTopology
    baseline: HardwareParams
    protocol: ProtocolConfig = ProtocolConfig()
    improvable: Optional[tuple[str, ...]] = None
    target_rate: Optional[float] = None  # bounds simulated time for hopeless candidates
    horizon_factor: float = 10.0

    @property
    def parameters(self) -> dict[str, tuple[float, str]]:
        names = self.improvable
        if names is None:
            names = tuple(n for n in self.baseline.values if n in PARAMETER_KINDS)
        return {n: (self.baseline[n], PARAMETER_KINDS[n]) for n in names}

    @property
    def tunables(self) -> dict[str, tuple[float, float]]:
        out = {"cutoff_fraction": (0.1, 1.0)}
        if self.protocol.scheme == "single_click":
            out["bright_state_parameter"] = (0.01, 0.5)
        elif self.baseline.platform is PlatformKind.TRAPPED_ION:
            out["coincidence_window"] = (0.05e-6, self.baseline["detection_window"])
        return out

    def hardware(self, values: Mapping[str, float]) -> HardwareParams:
        return self.baseline.with_values(**values)

    def evaluate(self, values, tunables, n_runs, seed) -> Evaluation:
        hw = self.hardware(values)
        memory = hw[_memory_time_key(hw.platform)]
        updates = {"n_pairs": n_runs, "seed": seed}
        if "cutoff_fraction" in tunables:
            updates["cutoff_time"] = tunables["cutoff_fraction"] * memory
        for name in ("bright_state_parameter", "coincidence_window"):
            if name in tunables:
                updates[name] = tunables[name]
        horizon = math.inf
        if self.target_rate:
            horizon = self.horizon_factor * n_runs / self.target_rate
        updates["time_horizon"] = horizon
        try:
            sim = Simulation(self.topology, hw, replace(self.protocol, **updates))
            records = sim.run()
        except ValueError:
            return Evaluation(0.0, 0.5)
        if len(records) < 2:
            return Evaluation(len(records) / horizon if math.isfinite(horizon) else 0.0, 0.5)
        m = compute_metrics(records)
        rate = m.rate if len(records) == n_runs else len(records) / horizon
        return Evaluation(rate, m.fidelity, m.sem_rate, m.sem_fidelity)


@dataclass(frozen=True)
class AnalyticScenario:
    """Closed-form stand-in for a simulation, used to check the search.

    ``fidelity(values, tunables)`` and ``rate(values, tunables)`` are plain
    callables; they must be module-level functions when evaluated in parallel.
    """

    parameters: Mapping[str, tuple[float, str]]
    fidelity_fn: object
    rate_fn: object
    tunables: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def evaluate(self, values, tunables, n_runs, seed) -> Evaluation:
        return Evaluation(self.rate_fn(values, tunables), self.fidelity_fn(values, tunables))


# ------------------------------------------------------------ candidates


@dataclass(frozen=True)
class CandidateSolution:
    factors: dict[str, float]
    tunables: dict[str, float]
    rate: float = math.nan
    fidelity: float = math.nan
    sem_rate: float = math.nan
    sem_fidelity: float = math.nan
    cost: float = math.inf

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def candidate_values(scenario: Scenario, factors: Mapping[str, float]) -> dict[str, float]:
    return {
        name: improve_parameter(base, kind, factors.get(name, 1.0))
        for name, (base, kind) in scenario.parameters.items()
    }


def evaluate_candidate(
    scenario: Scenario,
    factors: Mapping[str, float],
    tunables: Mapping[str, float],
    target: PerformanceTarget,
    n_runs: int = 100,
    seed: int = 0,
    weights: CostWeights = CostWeights(),
) -> CandidateSolution:
    if n_runs < 2:
        raise ValueError("n_runs must be at least 2")
    ev = scenario.evaluate(candidate_values(scenario, factors), tunables, n_runs, seed)
    cost = total_cost(ev.fidelity, ev.rate, factors, target, weights)
    return CandidateSolution(dict(factors), dict(tunables), ev.rate, ev.fidelity, ev.sem_rate, ev.sem_fidelity, cost)


# ------------------------------------------------------------ genetic search


@dataclass(frozen=True)
class GAConfig:
    population: int = 150
    generations: int = 200
    tournament: int = 3
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.2  # in log k; tunables use this fraction of their range
    elitism: int = 1
    k_max: float = 1e4
    initial_k_max: float = 10.0
    n_runs: int = 100
    seed: int = 0
    var_tolerance: Optional[float] = None  # relative change of the 15-generation mean, e.g. 0.01
    var_window: int = 15
    weights: CostWeights = CostWeights()

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if self.generations < 1:
            raise ValueError("need at least one generation")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be smaller than the population")


@dataclass
class GAResult:
    best: CandidateSolution
    history: list[dict]
    generations: int
    stopped_by_var: bool


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("REPEATERFORGE_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate_job(args) -> CandidateSolution:
    scenario, factors, tunables, target, n_runs, seed, weights = args
    return evaluate_candidate(scenario, factors, tunables, target, n_runs, seed, weights)


class _Genome:
    """Vector layout: log k for each parameter, then the raw tunables."""

    def __init__(self, scenario: Scenario, cfg: GAConfig):
        self.names = list(scenario.parameters)
        self.tunable_names = list(scenario.tunables)
        self.bounds = [(0.0, math.log(cfg.k_max))] * len(self.names) + [
            scenario.tunables[t] for t in self.tunable_names
        ]

    def random(self, rng, cfg: GAConfig) -> np.ndarray:
        g = [rng.uniform(0, math.log(cfg.initial_k_max)) for _ in self.names]
        g += [rng.uniform(lo, hi) for lo, hi in self.bounds[len(self.names):]]
        return np.array(g)

    def clip(self, g: np.ndarray) -> np.ndarray:
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(g, lo, hi)

    def decode(self, g: np.ndarray) -> tuple[dict, dict]:
        n = len(self.names)
        factors = {name: float(math.exp(x)) for name, x in zip(self.names, g[:n])}
        tunables = {name: float(x) for name, x in zip(self.tunable_names, g[n:])}
        return factors, tunables

    def mutate(self, g: np.ndarray, rng, cfg: GAConfig) -> np.ndarray:
        g = g.copy()
        n = len(self.names)
        for i in range(len(g)):
            if rng.random() < cfg.mutation_rate:
                lo, hi = self.bounds[i]
                scale = cfg.mutation_sigma if i < n else cfg.mutation_sigma * (hi - lo)
                g[i] += rng.normal(0, scale)
        return self.clip(g)


def _key(g: np.ndarray) -> bytes:
    return hashlib.sha1(np.asarray(g, dtype=float).tobytes()).digest()


def var_should_stop(best_costs: Sequence[float], tolerance: Optional[float], window: int = 15) -> bool:
    """True once the mean best cost over the last ``window`` generations moved
    by at most ``tolerance`` (relative) compared with the previous window."""
    if tolerance is None or len(best_costs) < window + 1:
        return False
    now = float(np.mean(best_costs[-window:]))
    before = float(np.mean(best_costs[-window - 1 : -1]))
    if before == 0:
        return now == 0
    return abs(now - before) / abs(before) <= tolerance


def genetic_optimize(
    scenario: Scenario,
    target: PerformanceTarget,
    cfg: GAConfig = GAConfig(),
    history_path: Optional[str] = None,
) -> GAResult:
    rng = np.random.default_rng(cfg.seed)
    genome = _Genome(scenario, cfg)
    cache: dict[bytes, CandidateSolution] = {}
    threads = _threads()
    pool = ProcessPoolExecutor(threads) if threads > 1 else None

    def evaluate_all(pop: list[np.ndarray]) -> list[CandidateSolution]:
        todo = [g for g in pop if _key(g) not in cache]
        unique = list({_key(g): g for g in todo}.values())
        jobs = [(scenario, *genome.decode(g), target, cfg.n_runs, cfg.seed, cfg.weights) for g in unique]
        results = pool.map(_evaluate_job, jobs) if pool else map(_evaluate_job, jobs)
        for g, res in zip(unique, results):
            cache[_key(g)] = res
        return [cache[_key(g)] for g in pop]

    def tournament(pop, costs) -> np.ndarray:
        idx = rng.choice(len(pop), size=cfg.tournament, replace=False)
        return pop[min(idx, key=lambda i: costs[i])]

    history: list[dict] = []
    best_costs: list[float] = []
    stream = open(history_path, "w") if history_path else None
    try:
        pop = [genome.random(rng, cfg) for _ in range(cfg.population)]
        best: Optional[CandidateSolution] = None
        stopped = False
        gen = 0
        for gen in range(1, cfg.generations + 1):
            sols = evaluate_all(pop)
            costs = [s.cost for s in sols]
            order = sorted(range(len(pop)), key=lambda i: costs[i])
            if best is None or sols[order[0]].cost < best.cost:
                best = sols[order[0]]
            best_costs.append(best.cost)
            row = {"generation": gen, "best_cost": best.cost, "best": best.to_json()}
            history.append(row)
            if stream:
                stream.write(json.dumps(row, sort_keys=True) + "\n")
            if var_should_stop(best_costs, cfg.var_tolerance, cfg.var_window):
                stopped = True
                break
            if gen == cfg.generations:
                break
            nxt = [pop[i] for i in order[: cfg.elitism]]
            while len(nxt) < cfg.population:
                a, b = tournament(pop, costs), tournament(pop, costs)
                if rng.random() < cfg.crossover_rate:
                    mask = rng.random(len(a)) < 0.5
                    a, b = np.where(mask, a, b), np.where(mask, b, a)
                nxt.append(genome.mutate(a, rng, cfg))
                if len(nxt) < cfg.population:
                    nxt.append(genome.mutate(b, rng, cfg))
            pop = nxt
    finally:
        if stream:
            stream.close()
        if pool:
            pool.shutdown()
    return GAResult(best=best, history=history, generations=gen, stopped_by_var=stopped)


# ---------------------------------------------------- minimal requirements


@dataclass(frozen=True)
class MinimalRequirement:
    parameter: str
    feasible: bool
    value: Optional[float] = None
    factor: Optional[float] = None
    tunables: Optional[dict] = None
    rate: Optional[float] = None
    fidelity: Optional[float] = None


def _grid(bounds: Mapping[str, tuple[float, float]], points: int) -> list[dict]:
    if not bounds:
        return [{}]
    axes = {n: np.linspace(lo, hi, points) for n, (lo, hi) in bounds.items()}
    names = list(axes)
    mesh = np.meshgrid(*[axes[n] for n in names], indexing="ij")
    return [dict(zip(names, map(float, vals))) for vals in zip(*(m.ravel() for m in mesh))]


def absolute_minimal_sweep(
    scenario: Scenario,
    target: PerformanceTarget,
    parameter: str,
    factors: Sequence[float] = tuple(np.geomspace(1, 1e4, 41)),
    tunable_points: int = 5,
    n_runs: int = 100,
    seed: int = 0,
) -> MinimalRequirement:
    """Weakest value of ``parameter`` that meets the targets when every other
    improvable parameter is perfect.

    The sweep walks from the baseline (k = 1) towards perfect hardware and
    stops at the first factor for which some point of the tunable grid meets
    both targets.
    """
    params = scenario.parameters
    if parameter not in params:
        raise KeyError(f"{parameter!r} is not an improvable parameter")
    base, kind = params[parameter]
    for k in sorted(factors):
        fs = {n: (k if n == parameter else math.inf) for n in params}
        values = candidate_values(scenario, fs)
        for tun in _grid(scenario.tunables, tunable_points):
            ev = scenario.evaluate(values, tun, n_runs, seed)
            if targets_met(ev.rate, ev.fidelity, target).met:
                return MinimalRequirement(parameter, True, values[parameter], float(k), tun, ev.rate, ev.fidelity)
    return MinimalRequirement(parameter, False)
