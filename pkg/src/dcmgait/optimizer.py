"""Single-objective GA and bi-objective NSGA-II over gait parameters.

Every stochastic decision draws from a stream keyed by (seed, generation,
slot), so results do not depend on how evaluations are scheduled.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .costs import CostVector
from .planner import PARAM_NAMES

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = {
    "alpha": (0.2, 0.7),
    "r_ds": (0.1, 0.5),
    "t_step": (0.5, 1.3),
    "z0": (0.65, 0.7),
    "h_ankle": (0.025, 0.075),
}


class InitializationError(RuntimeError):
    def __init__(self, message: str, retries: int, last_violations=None):
        super().__init__(message)
        self.retries = retries
        self.last_violations = last_violations or []


@dataclass(frozen=True)
class SearchSpace:
    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise ValueError("names, lower and upper must have equal length")
        for n, lo, hi in zip(self.names, self.lower, self.upper):
            if not lo < hi:
                raise ValueError(f"bound for {n}: min {lo} must be below max {hi}")

    @classmethod
    def default(cls) -> "SearchSpace":
        return cls.from_mapping(DEFAULT_BOUNDS)

    @classmethod
    def from_mapping(cls, bounds: dict[str, Sequence[float]],
                     names: Sequence[str] = PARAM_NAMES) -> "SearchSpace":
        missing = [n for n in names if n not in bounds]
        if missing:
            raise ValueError(f"missing bounds for {missing}")
        return cls(tuple(names), tuple(float(bounds[n][0]) for n in names),
                   tuple(float(bounds[n][1]) for n in names))

    @classmethod
    def box(cls, n: int, lower: float = 0.0, upper: float = 1.0) -> "SearchSpace":
        return cls(tuple(f"x{i}" for i in range(n)), (lower,) * n, (upper,) * n)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def dim(self) -> int:
        return len(self.names)

    def clip(self, genome) -> np.ndarray:
        return np.clip(genome, self.lo, self.hi)

    def contains(self, genome) -> bool:
        g = np.asarray(genome)
        return bool(np.all(g >= self.lo) and np.all(g <= self.hi))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)

    def violations(self, genome) -> list[str]:
        g = np.asarray(genome, dtype=float)
        return [f"{n}={v} outside [{lo}, {hi}]" for n, v, lo, hi in
                zip(self.names, g, self.lower, self.upper) if not lo <= v <= hi]

    def to_dict(self) -> dict:
        return {n: [lo, hi] for n, lo, hi in zip(self.names, self.lower, self.upper)}


@dataclass
class Individual:
    genome: np.ndarray
    result: Any = None  # CostVector for gait problems
    fitness: tuple[float, ...] = ()
    rank: int = 0
    crowding: float = 0.0

    @property
    def feasible(self) -> bool:
        return all(math.isfinite(f) for f in self.fitness)


@dataclass
class GAConfig:
    population: int = 100
    generations: int = 100
    crossover_prob: float = 0.8
    mutation_prob: float = 0.08
    elitism: float = 0.03
    init_retries: int = 10
    workers: int = 1

    def validate(self) -> None:
        if self.population < 2 or self.generations < 0:
            raise ValueError("GA needs population >= 2 and generations >= 0")
        for name in ("crossover_prob", "mutation_prob", "elitism"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def n_elite(self) -> int:
        # 0.03 * 100 is 3.0000000000000004 in floating point
        return min(self.population, math.ceil(round(self.elitism * self.population, 9)))


@dataclass
class NSGA2Config:
    population: int = 150
    generations: int = 150
    crossover_prob: float = 0.9
    eta_c: float = 15.0
    eta_m: float = 20.0
    mutation_prob: float | None = None  # per gene; None -> 1 / n_genes
    init_retries: int = 10
    workers: int = 1
    hv_reference: tuple[float, float] | None = None

    def validate(self) -> None:
        if self.population < 4 or self.generations < 0:
            raise ValueError("NSGA-II needs population >= 4 and generations >= 0")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")


@dataclass
class GAResult:
    best: Individual
    population: list[Individual]
    history: list[dict]


@dataclass
class ParetoFront:
    members: list[Individual]
    utopia: np.ndarray
    knee: int

    @property
    def objectives(self) -> np.ndarray:
        return np.array([m.fitness for m in self.members])

    @property
    def knee_member(self) -> Individual:
        return self.members[self.knee]


@dataclass
class NSGA2Result:
    front: ParetoFront
    population: list[Individual]
    history: list[dict] = field(default_factory=list)


# ---------------------------------------------------------------- plumbing

def rng_stream(seed: int, generation: int, slot: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(generation, slot, *extra)))


def _evaluate_all(evaluator: Callable, genomes: list[np.ndarray], workers: int) -> list:
    if workers > 1 and len(genomes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(genomes) // (4 * workers))
            return list(pool.map(evaluator, genomes, chunksize=chunk))
    return [evaluator(g) for g in genomes]


def objective_fn(objective) -> Callable[[Any], float]:
    """Scalar fitness (lower is better; infeasible -> inf)."""
    if callable(objective):
        return objective
    if isinstance(objective, str):
        def fitness(res: CostVector) -> float:
            return res.objective(objective) if res.feasible else math.inf
        return fitness
    return lambda res: float(res)


def objectives_fn(objectives) -> Callable[[Any], tuple[float, ...]]:
    if callable(objectives):
        return objectives
    if objectives is None:
        return lambda res: tuple(float(v) for v in res)
    names = tuple(objectives)

    def fitness(res: CostVector) -> tuple[float, ...]:
        if not res.feasible:
            return (math.inf,) * len(names)
        return tuple(res.objective(n) for n in names)
    return fitness


def _finite(x: float) -> float:
    return x if math.isfinite(x) else math.inf


def _violations_of(result) -> list:
    return list(getattr(result, "violations", []) or [])


def _initial_population(space: SearchSpace, evaluator, fitness, n: int, seed: int,
                        retries: int, workers: int) -> list[Individual]:
    last = []
    for attempt in range(retries + 1):
        genomes = [space.sample(rng_stream(seed, 0, slot, attempt)) for slot in range(n)]
        results = _evaluate_all(evaluator, genomes, workers)
        pop = [Individual(g, r, fitness(r)) for g, r in zip(genomes, results)]
        if any(p.feasible for p in pop):
            return pop
        last = _violations_of(results[-1])
        log.warning("initial population entirely infeasible (attempt %d)", attempt + 1)
    raise InitializationError(
        f"initial population infeasible after {retries} retries; last violations: {last}",
        retries, last)


# ---------------------------------------------------------------- GA

def uniform_crossover(p1, p2, prob: float, rng: np.random.Generator) -> np.ndarray:
    fire = rng.random() < prob
    mask = rng.random(len(p1)) < 0.5
    return np.where(mask, p2, p1) if fire else np.array(p1, dtype=float)


def uniform_reset_mutation(genome, prob: float, space: SearchSpace,
                           rng: np.random.Generator) -> np.ndarray:
    hit = rng.random(len(genome)) < prob
    fresh = space.sample(rng)
    return np.where(hit, fresh, genome)


def _tournament(fit: np.ndarray, rng: np.random.Generator) -> int:
    i, j = rng.integers(len(fit), size=2)
    if fit[j] < fit[i] or (fit[j] == fit[i] and j < i):
        return int(j)
    return int(i)


def run_ga(space: SearchSpace, objective, evaluator: Callable, config: GAConfig | None = None,
           seed: int = 0) -> GAResult:
    """Generational GA: binary tournament, uniform crossover, uniform-reset mutation, elitism."""
    config = config or GAConfig()
    config.validate()
    fitness = objective_fn(objective)
    scalar = lambda r: (_finite(float(fitness(r))),)
    N = config.population
    pop = _initial_population(space, evaluator, scalar, N, seed, config.init_retries,
                              config.workers)
    history: list[dict] = []
    best_so_far = math.inf

    def order(p):
        return sorted(range(len(p)), key=lambda i: (p[i].fitness[0], i))

    for gen in range(config.generations + 1):
        idx = order(pop)
        pop = [pop[i] for i in idx]
        fit = np.array([p.fitness[0] for p in pop])
        best_so_far = min(best_so_far, fit[0])
        finite = fit[np.isfinite(fit)]
        history.append({
            "generation": gen, "best": float(fit[0]), "best_so_far": float(best_so_far),
            "mean": float(finite.mean()) if finite.size else math.inf,
            "feasible": int(finite.size), "n_elite": config.n_elite,
            "best_genome": pop[0].genome.tolist(),
        })
        log.info("GA gen %d best %.6g mean %.6g", gen, fit[0], history[-1]["mean"])
        if gen == config.generations:
            break
        elites = [Individual(p.genome.copy(), p.result, p.fitness) for p in pop[:config.n_elite]]
        children = []
        for slot in range(N - len(elites)):
            rng = rng_stream(seed, gen + 1, slot)
            a = pop[_tournament(fit, rng)].genome
            b = pop[_tournament(fit, rng)].genome
            child = uniform_crossover(a, b, config.crossover_prob, rng)
            child = space.clip(uniform_reset_mutation(child, config.mutation_prob, space, rng))
            children.append(child)
        results = _evaluate_all(evaluator, children, config.workers)
        pop = elites + [Individual(g, r, scalar(r)) for g, r in zip(children, results)]

    return GAResult(best=pop[0], population=pop, history=history)


# ---------------------------------------------------------------- NSGA-II operators

def dominates(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_nondominated_sort(objs) -> list[list[int]]:
    """Partition indices into successive non-dominated fronts (minimization)."""
    F = np.asarray(objs, dtype=float)
    n = F.shape[0]
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def crowding_distance(objs) -> np.ndarray:
    """Crowding distance per member; boundary members get infinity."""
    F = np.asarray(objs, dtype=float)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        dist[order[0]] = dist[order[-1]] = np.inf
        span = F[order[-1], k] - F[order[0], k]
        if span <= 0.0:
            continue
        gaps = (F[order[2:], k] - F[order[:-2], k]) / span
        dist[order[1:-1]] += gaps
    return dist


def sbx_crossover(p1, p2, eta_c: float, prob: float, rng: np.random.Generator,
                  space: SearchSpace | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover; children clamped to ``space`` when given."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    fire = rng.random() < prob
    u = rng.random(p1.shape)
    if not fire:
        return p1.copy(), p2.copy()
    beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta_c + 1.0)),
                    (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta_c + 1.0)))
    mean = 0.5 * (p1 + p2)
    half = 0.5 * beta * (p2 - p1)
    c1, c2 = mean - half, mean + half
    if space is not None:
        c1, c2 = space.clip(c1), space.clip(c2)
    return c1, c2


def polynomial_mutation(genome, eta_m: float, prob: float, rng: np.random.Generator,
                        space: SearchSpace) -> np.ndarray:
    """Bounded polynomial mutation, applied per gene with probability ``prob``."""
    y = np.array(genome, dtype=float)
    lo, hi = space.lo, space.hi
    hit = rng.random(y.shape) < prob
    u = rng.random(y.shape)
    span = hi - lo
    d1 = (y - lo) / span
    d2 = (hi - y) / span
    power = 1.0 / (eta_m + 1.0)
    left = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta_m + 1.0)
    right = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta_m + 1.0)
    with np.errstate(invalid="ignore"):
        dq = np.where(u < 0.5, left ** power - 1.0, 1.0 - right ** power)
    y = np.where(hit, y + dq * span, y)
    return np.clip(y, lo, hi)


def knee_point(objs) -> int:
    """Index of the member nearest the utopia point after min-max normalization."""
    F = np.asarray(objs, dtype=float)
    if F.shape[0] == 0:
        raise ValueError("empty front")
    lo = F.min(axis=0)
    span = F.max(axis=0) - lo
    norm = np.where(span > 0, (F - lo) / np.where(span > 0, span, 1.0), 0.0)
    d = np.sqrt((norm**2).sum(axis=1))
    return int(np.argmin(d))  # first minimum -> lowest index on ties


def hypervolume_2d(objs, reference) -> float:
    F = np.asarray(objs, dtype=float)
    ref = np.asarray(reference, dtype=float)
    F = F[np.all(F < ref, axis=1)]
    if F.size == 0:
        return 0.0
    F = F[np.argsort(F[:, 0], kind="stable")]
    hv, best_f2 = 0.0, ref[1]
    for f1, f2 in F:
        if f2 < best_f2:
            hv += (ref[0] - f1) * (best_f2 - f2)
            best_f2 = f2
    return float(hv)


def _assign_rank_crowding(pop: list[Individual]) -> list[list[int]]:
    feasible = [i for i, p in enumerate(pop) if p.feasible]
    infeasible = [i for i, p in enumerate(pop) if not p.feasible]
    F = np.array([pop[i].fitness for i in feasible]) if feasible else np.empty((0, 2))
    fronts = [[feasible[i] for i in fr] for fr in fast_nondominated_sort(F)]
    if infeasible:
        fronts.append(infeasible)
    for r, fr in enumerate(fronts):
        if fr is infeasible or not pop[fr[0]].feasible:
            cd = np.zeros(len(fr))
        else:
            cd = crowding_distance([pop[i].fitness for i in fr])
        for i, c in zip(fr, cd):
            pop[i].rank = r
            pop[i].crowding = float(c)
    return fronts


def _crowded_better(a: Individual, ia: int, b: Individual, ib: int) -> bool:
    if a.rank != b.rank:
        return a.rank < b.rank
    if a.crowding != b.crowding:
        return a.crowding > b.crowding
    return ia < ib


def _crowded_tournament(pop: list[Individual], rng: np.random.Generator) -> Individual:
    i, j = (int(v) for v in rng.integers(len(pop), size=2))
    return pop[i] if _crowded_better(pop[i], i, pop[j], j) else pop[j]


def _front_of(pop: list[Individual]) -> ParetoFront:
    members = [p for p in pop if p.rank == 0 and p.feasible]
    if not members:
        members = [p for p in pop if p.rank == 0]
    # drop duplicates in objective space, keep first
    seen, unique = set(), []
    for m in members:
        key = tuple(m.fitness)
        if key not in seen:
            seen.add(key)
            unique.append(m)
    F = np.array([m.fitness for m in unique])
    return ParetoFront(members=unique, utopia=F.min(axis=0), knee=knee_point(F))


def run_nsga2(space: SearchSpace, evaluator: Callable, config: NSGA2Config | None = None,
              seed: int = 0, objectives=("zmp", "energy")) -> NSGA2Result:
    """Elitist NSGA-II with SBX and polynomial mutation; returns front 0 and knee."""
    config = config or NSGA2Config()
    config.validate()
    fitness = objectives_fn(objectives)
    wrap = lambda r: tuple(_finite(float(v)) for v in fitness(r))
    N = config.population
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / space.dim

    pop = _initial_population(space, evaluator, wrap, N, seed, config.init_retries,
                              config.workers)
    _assign_rank_crowding(pop)
    ref = config.hv_reference
    if ref is None:
        F = np.array([p.fitness for p in pop if p.feasible])
        span = np.where(F.max(0) > F.min(0), F.max(0) - F.min(0), 1.0)
        ref = tuple(F.max(0) + 0.1 * span)
    history: list[dict] = []

    def record(gen: int):
        front = [p.fitness for p in pop if p.rank == 0 and p.feasible]
        F = np.array(front) if front else np.empty((0, 2))
        feas = np.array([p.fitness for p in pop if p.feasible])
        history.append({
            "generation": gen, "front_size": len(front),
            "hypervolume": hypervolume_2d(F, ref) if len(front) else 0.0,
            "best": feas.min(axis=0).tolist() if feas.size else None,
            "mean": feas.mean(axis=0).tolist() if feas.size else None,
            "feasible": int(len(feas)),
        })
        log.info("NSGA-II gen %d front %d hv %.6g", gen, len(front), history[-1]["hypervolume"])

    record(0)
    for gen in range(1, config.generations + 1):
        children = []
        for slot in range((N + 1) // 2):
            rng = rng_stream(seed, gen, slot)
            a = _crowded_tournament(pop, rng).genome
            b = _crowded_tournament(pop, rng).genome
            c1, c2 = sbx_crossover(a, b, config.eta_c, config.crossover_prob, rng, space)
            children.append(polynomial_mutation(c1, config.eta_m, pm, rng, space))
            children.append(polynomial_mutation(c2, config.eta_m, pm, rng, space))
        children = children[:N]
        results = _evaluate_all(evaluator, children, config.workers)
        combined = pop + [Individual(g, r, wrap(r)) for g, r in zip(children, results)]
        fronts = _assign_rank_crowding(combined)
        survivors: list[Individual] = []
        for fr in fronts:
            if len(survivors) + len(fr) <= N:
                survivors.extend(combined[i] for i in fr)
            else:
                rest = sorted(fr, key=lambda i: (-combined[i].crowding, i))
                survivors.extend(combined[i] for i in rest[:N - len(survivors)])
                break
        pop = survivors
        _assign_rank_crowding(pop)
        record(gen)

    return NSGA2Result(front=_front_of(pop), population=pop, history=history)


# ---------------------------------------------------------------- export

def write_history(history: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_history(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


FRONT_OBJECTIVES = ("j_zmp", "j_energy")


def write_front_csv(front: ParetoFront, names: Sequence[str], path,
                    objective_names: Sequence[str] = FRONT_OBJECTIVES) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, *objective_names, "rank", "crowding", "knee"])
        for i, m in enumerate(front.members):
            w.writerow([*(repr(float(g)) for g in m.genome), *(repr(float(f)) for f in m.fitness),
                        m.rank, repr(float(m.crowding)), int(i == front.knee)])


def read_front_csv(path, n_genes: int = len(PARAM_NAMES)) -> tuple[np.ndarray, np.ndarray, int]:
    """Return (genomes, objectives, knee index) from a front CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    genomes = np.array([[float(v) for v in r[:n_genes]] for r in rows])
    objs = np.array([[float(v) for v in r[n_genes:n_genes + 2]] for r in rows])
    knee = next(i for i, r in enumerate(rows) if r[-1] == "1")
    return genomes, objs, knee
