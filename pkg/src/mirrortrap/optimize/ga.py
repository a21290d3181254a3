"""Genetic algorithm over variable-length rail-edge genomes.

``evolve`` is problem-agnostic: it needs callables to evaluate, mutate and
cross genomes.  ``run_ga`` wires it to the rf-rail problem.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..layout import LayoutError
from .edges import EdgeBounds, EdgeGenome, interpolate_edge
from .fitness import FitnessReport, RailFitness


class NoFeasibleCandidateError(RuntimeError):
    pass


@dataclass(frozen=True)
class GAConfig:
    population: int = 32
    generations: int = 100
    mutation_scale: float = 0.5  # um
    crossover_rate: float = 0.9
    elites: int = 2
    seed: int = 0
    insert_rate: float = 0.1
    delete_rate: float = 0.1
    resample_limit: int = 10
    tournament: int = 2

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        if not 0 <= self.elites <= self.population:
            raise ValueError("elites must lie in [0, population]")
        if self.mutation_scale < 0:
            raise ValueError("mutation_scale must be non-negative")
        for name in ("crossover_rate", "insert_rate", "delete_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)


@dataclass
class Candidate:
    genome: object
    fitness: float
    info: object = None


@dataclass
class GAResult:
    candidates: list  # feasible, sorted by fitness
    history: np.ndarray  # rows (generation, best, median)
    config: GAConfig
    evaluations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def best(self):
        return self.candidates[0]


def _median(values):
    finite = [v for v in values if np.isfinite(v)]
    return float(np.median(finite)) if finite else np.inf


def evolve(initial, evaluate, mutate, crossover, cfg: GAConfig, key=None, threads=1):
    """Elitist GA with tournament selection and rejection of infeasible children.

    ``evaluate(genome) -> (fitness, feasible, info)``; ``mutate(genome, rng)``
    and ``crossover(a, b, rng)`` return new genomes (they may raise
    ValueError for invalid results, which counts as a rejection).  Each
    child draws from its own RNG stream spawned from ``cfg.seed``, so results
    do not depend on ``threads``.
    """
    key = key or (lambda g: g)
    cache = {}
    counter = [0]

    def score(genomes):
        todo = []
        for g in genomes:
            k = key(g)
            if k not in cache and k not in [key(t) for t in todo]:
                todo.append(g)
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(evaluate, todo))
        else:
            results = [evaluate(g) for g in todo]
        for g, r in zip(todo, results):
            cache[key(g)] = r
        counter[0] += len(todo)
        return [cache[key(g)] for g in genomes]

    def rank_key(item):
        g, (f, ok, _) = item
        return (not ok, f, key(g))

    root = np.random.SeedSequence(cfg.seed)
    gen_seeds = root.spawn(cfg.generations + 1)
    init_rng = np.random.default_rng(gen_seeds[0])

    pop = list(initial)
    if not pop:
        raise ValueError("initial population is empty")
    # fill the population with mutants of the seeds
    attempts = 0
    while len(pop) < cfg.population and attempts < cfg.population * cfg.resample_limit:
        attempts += 1
        parent = pop[int(init_rng.integers(len(initial)))]
        try:
            pop.append(mutate(parent, init_rng))
        except ValueError:
            continue
    scores = score(pop)
    pop = sorted(zip(pop, scores), key=rank_key)[:cfg.population]

    def best_feasible(p):
        ok = [s[0] for _, s in p if s[1]]
        return min(ok) if ok else np.inf

    history = [(0, best_feasible(pop), _median([s[0] for _, s in pop if s[1]]))]
    for gen in range(1, cfg.generations + 1):
        streams = gen_seeds[gen].spawn(cfg.population)
        elites = pop[:cfg.elites]
        feasible = [item for item in pop if item[1][1]] or pop

        def tournament(rng):
            idx = rng.integers(len(feasible), size=cfg.tournament)
            return min((feasible[i] for i in idx), key=rank_key)[0]

        children = []
        for i in range(cfg.population - len(elites)):
            rng = np.random.default_rng(streams[i])
            child = None
            for _ in range(cfg.resample_limit):
                a = tournament(rng)
                try:
                    if rng.random() < cfg.crossover_rate:
                        b = tournament(rng)
                        trial = crossover(a, b, rng)
                    else:
                        trial = a
                    trial = mutate(trial, rng)
                except ValueError:
                    continue
                f, ok, _ = score([trial])[0]
                if ok:
                    child = trial
                    break
            if child is not None:
                children.append(child)
        merged = elites + list(zip(children, score(children)))
        # discarded children leave gaps; refill from the previous generation
        if len(merged) < cfg.population:
            seen = {key(g) for g, _ in merged}
            for item in pop:
                if len(merged) >= cfg.population:
                    break
                if key(item[0]) not in seen:
                    merged.append(item)
                    seen.add(key(item[0]))
        pop = sorted(merged, key=rank_key)[:cfg.population]
        history.append((gen, best_feasible(pop), _median([s[0] for _, s in pop if s[1]])))

    seen = set()
    ranked = []
    for g, (f, ok, info) in pop:
        if ok and key(g) not in seen:
            seen.add(key(g))
            ranked.append(Candidate(g, f, info))
    if not ranked:
        raise NoFeasibleCandidateError(
            f"no feasible candidate after {cfg.generations} generations")
    return GAResult(ranked, np.array(history, dtype=float), cfg, counter[0])


# -- rf rail problem -------------------------------------------------------


def mutate_genome(genome: EdgeGenome, rng, cfg: GAConfig, bounds: EdgeBounds):
    pts = [list(p) for p in genome.points]
    if len(pts) > 1 and rng.random() < cfg.delete_rate:
        pts.pop(int(rng.integers(len(pts))))
    if len(pts) < bounds.max_points and rng.random() < cfg.insert_rate:
        s = rng.uniform(bounds.s_min, bounds.s_max)
        pts.append([s, 0.0])
    pts = np.array(pts)
    pts[:, 1] += rng.normal(0.0, cfg.mutation_scale, len(pts))
    pts[:, 1] = np.clip(pts[:, 1], -bounds.max_offset, bounds.max_offset)
    child = EdgeGenome(pts)
    child.validate(bounds)
    return child


def crossover_genomes(a: EdgeGenome, b: EdgeGenome, rng, bounds: EdgeBounds):
    """One-point crossover at a random axial cut."""
    cut = rng.uniform(bounds.s_min, bounds.s_max)
    pts = np.concatenate([a.points[a.s < cut], b.points[b.s >= cut]])
    if len(pts) == 0:
        raise ValueError("empty crossover child")
    child = EdgeGenome(pts)
    child.validate(bounds)
    return child


def default_genome(bounds: EdgeBounds, n=5):
    s = np.linspace(bounds.s_min, bounds.s_max, n + 2)[1:-1]
    return EdgeGenome.zeros(s)


def run_ga(base_model, drive, cfg: GAConfig = None, bounds: EdgeBounds = None,
           fitness: RailFitness = None, initial=None, threads=1, log=None):
    """Optimise the inner rf edge of ``base_model.layout``.

    Returns a GAResult whose candidates carry EdgeGenomes and FitnessReports,
    all satisfying the null-focus constraint.
    """
    cfg = cfg or GAConfig()
    bounds = bounds or EdgeBounds()
    fitness = fitness or RailFitness(base_model, drive)
    base = base_model.layout

    def evaluate(genome):
        try:
            layout = interpolate_edge(genome, base, bounds)
        except (LayoutError, ValueError) as exc:
            return np.inf, False, FitnessReport(np.inf, [str(exc)])
        rep = fitness(layout)
        return rep.fitness, rep.feasible, rep

    result = evolve(
        initial or [default_genome(bounds)],
        evaluate,
        lambda g, rng: mutate_genome(g, rng, cfg, bounds),
        lambda a, b, rng: crossover_genomes(a, b, rng, bounds),
        cfg, key=lambda g: g.key(), threads=threads)
    result.meta.update({"seed": cfg.seed, "bounds": asdict(bounds)})
    if log is not None:
        for row in result.history:
            log(int(row[0]), row[1], row[2])
    return result


def decay_length(z, e_rf, z0=0.0, fraction=0.1):
    """Axial distance from ``z0`` at which ``|E|`` falls to ``fraction`` of its peak.

    Only samples at or beyond the peak count; returns inf if it never does.
    """
    z = np.asarray(z, dtype=float)
    e = np.abs(np.asarray(e_rf, dtype=float))
    order = np.argsort(np.abs(z - z0))
    z, e = z[order], e[order]
    k = int(np.argmax(e))
    below = np.nonzero(e[k:] <= fraction * e[k])[0]
    if len(below) == 0:
        return np.inf
    j = k + below[0]
    if j == 0:
        return 0.0
    # linear interpolation between the bracketing samples
    d0, d1 = abs(z[j - 1] - z0), abs(z[j] - z0)
    e0, e1 = e[j - 1], e[j]
    target = fraction * e[k]
    if e0 == e1:
        return d1
    return float(d0 + (e0 - target) / (e0 - e1) * (d1 - d0))


def select_final(candidates, top_k=5, z0=None):
    """Pick the candidate whose rf field decays fastest away from the mirror.

    Each candidate's ``info`` must carry a traced contour (as FitnessReport
    does).  Ties go to the lower fitness.
    """
    if not candidates:
        raise ValueError("no candidates to choose from")
    pool = sorted(candidates, key=lambda c: c.fitness)[:top_k]
    scored = []
    for c in pool:
        contour = c.info.contour
        origin = contour.z[0] if z0 is None else z0
        scored.append((decay_length(contour.z, contour.e_rf, origin), c.fitness, c))
    scored.sort(key=lambda t: (t[0], t[1]))
    return scored[0][2]
