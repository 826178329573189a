"""Multi-objective search over exponent matrices.

Every candidate structure is canonicalized, fitted, pruned and scored on three
minimized objectives: SSE, number of coefficients (terms plus bias) and number
of distinct inputs. The GA keeps an archive of everything it evaluated and
returns the non-dominated set of that archive, so the result is comparable
with :func:`exhaustive_search` on small spaces.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .expression import CandidateExponents, DomainError, ExponentMatrix, FittedModel, term_column
from .regression import FitMode, FitOptions, fit_terms

log = logging.getLogger(__name__)


class EvolutionError(ValueError):
    pass


class ObjectiveVector(NamedTuple):
    fitness_cost: float
    n_coefficients: int
    n_inputs: int


@dataclass(frozen=True)
class EprConfig:
    exponents: CandidateExponents = field(default_factory=CandidateExponents)
    max_terms: int = 3
    bias: bool = True
    fit_mode: FitMode = FitMode.UNCONSTRAINED
    significance_multiplier: float = 2.0
    max_prune_iterations: int = 10
    exhaustive_cap: int = 10**6

    def __post_init__(self):
        if not isinstance(self.exponents, CandidateExponents):
            object.__setattr__(self, "exponents", CandidateExponents(tuple(self.exponents)))
        if int(self.max_terms) < 1:
            raise EvolutionError("max_terms must be >= 1")
        object.__setattr__(self, "fit_mode", FitMode(self.fit_mode))
        # validates multiplier and iteration count
        self.fit_options

    @property
    def fit_options(self) -> FitOptions:
        return FitOptions(
            mode=self.fit_mode,
            bias=self.bias,
            significance_multiplier=self.significance_multiplier,
            max_prune_iterations=self.max_prune_iterations,
        )

    @property
    def max_coefficients(self) -> int:
        return self.max_terms + int(self.bias)


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: Optional[float] = None  # None -> 1 / (max_terms * n_inputs)
    seed: int = 0
    elitism: bool = True

    def __post_init__(self):
        if self.population_size < 2:
            raise EvolutionError("population_size must be >= 2")
        if self.generations < 1:
            raise EvolutionError("generations must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise EvolutionError(f"{name} must lie in [0, 1], got {rate}")
        if not 0 <= int(self.seed) < 2**64:
            raise EvolutionError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class FrontMember:
    model: FittedModel
    objectives: ObjectiveVector


@dataclass(frozen=True)
class ParetoFront:
    """Non-dominated models sorted by coefficient count, then SSE."""

    members: tuple[FrontMember, ...]

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i) -> FrontMember:
        return self.members[i]

    @property
    def models(self) -> list[FittedModel]:
        return [m.model for m in self.members]

    def objective_vectors(self) -> list[ObjectiveVector]:
        return [m.objectives for m in self.members]

    def r2_curve(self) -> list[tuple[int, float]]:
        """``(model number, R^2)`` pairs, numbering from 1."""
        return [(i, m.model.fit.r_squared) for i, m in enumerate(self.members, 1)]


def dominates(u: Sequence[float], v: Sequence[float]) -> bool:
    """True if ``u`` is no worse than ``v`` everywhere and differs somewhere."""
    return all(a <= b for a, b in zip(u, v)) and tuple(u) != tuple(v)


def _structure_key(model: FittedModel):
    return (model.structure.n_terms, model.structure.exponents)


def _sort_key(member: FrontMember):
    o = member.objectives
    return (o.n_coefficients, o.fitness_cost, o.n_inputs, _structure_key(member.model))


def non_dominated_filter(candidates: Iterable[tuple[FittedModel, ObjectiveVector]]) -> ParetoFront:
    """Keep candidates no other candidate dominates.

    Candidates with identical objective vectors collapse to the one whose
    canonical structure sorts first. Non-finite costs are discarded.
    """
    # Inside a (n_coefficients, n_inputs) cell the lowest SSE dominates the
    # rest, so reducing to cell winners first is exact.
    best: dict[tuple[int, int], FrontMember] = {}
    for model, obj in candidates:
        obj = ObjectiveVector(*obj)
        if not math.isfinite(obj.fitness_cost):
            continue
        cell = (obj.n_coefficients, obj.n_inputs)
        cur = best.get(cell)
        member = FrontMember(model, obj)
        if cur is None or (obj.fitness_cost, _structure_key(model)) < (
            cur.objectives.fitness_cost, _structure_key(cur.model)
        ):
            best[cell] = member
    cells = list(best.values())
    front = [
        m for m in cells
        if not any(dominates(o.objectives, m.objectives) for o in cells if o is not m)
    ]
    return ParetoFront(tuple(sorted(front, key=_sort_key)))


def crossover(parent_a: ExponentMatrix, parent_b: ExponentMatrix, rng,
              mask: Optional[np.ndarray] = None) -> tuple[ExponentMatrix, ExponentMatrix]:
    """Uniform per-gene exchange; ``mask`` (True = swap) may be forced."""
    a, b = parent_a.as_array(), parent_b.as_array()
    if a.shape != b.shape or parent_a.variable_names != parent_b.variable_names:
        raise EvolutionError("parents must share shape and variables")
    if mask is None:
        mask = rng.random(a.shape) < 0.5
    ca, cb = _swap(a, b, np.asarray(mask, dtype=bool))
    names = parent_a.variable_names
    return ExponentMatrix(tuple(map(tuple, ca)), names), ExponentMatrix(tuple(map(tuple, cb)), names)


def _swap(a, b, mask):
    ca = np.where(mask, b, a)
    cb = np.where(mask, a, b)
    return ca, cb


def mutate(structure: ExponentMatrix, rng, rate: float,
           candidates: CandidateExponents = CandidateExponents()) -> ExponentMatrix:
    """Replace each entry, with probability ``rate``, by a different candidate."""
    values = np.array(candidates.values)
    idx = np.searchsorted(values, structure.as_array())
    idx = _mutate_indices(idx, rng, rate, len(values))
    return ExponentMatrix(tuple(map(tuple, values[idx])), structure.variable_names)


def _mutate_indices(idx: np.ndarray, rng, rate: float, n_values: int) -> np.ndarray:
    hit = rng.random(idx.shape) < rate
    shift = rng.integers(1, n_values, size=idx.shape)
    return np.where(hit, (idx + shift) % n_values, idx)


class StructureEvaluator:
    """Fits and scores structures on one case view, caching by canonical form.

    Structures are handled as tuples of exponent-index rows; candidate values
    are increasing, so index order equals value order.
    """

    def __init__(self, dataset, view, config: EprConfig):
        self.config = config
        self.options = config.fit_options
        self.values = np.array(config.exponents.values)
        self.zero = int(np.flatnonzero(self.values == 0.0)[0])
        self.names = tuple(view.inputs)
        self.X = view.input_matrix(dataset)
        self.y = view.target_vector(dataset)
        if view.n_rows <= config.max_coefficients:
            raise EvolutionError(
                f"target {view.target!r}: {view.n_rows} complete rows cannot support "
                f"{config.max_coefficients} coefficients"
            )
        self._columns: dict[tuple, Optional[np.ndarray]] = {}
        self._cache: dict[tuple, tuple[Optional[FittedModel], ObjectiveVector]] = {}

    @property
    def evaluated(self) -> dict:
        return self._cache

    def canonical_key(self, genome: np.ndarray) -> tuple:
        rows = {tuple(int(i) for i in row) for row in genome}
        rows.discard((self.zero,) * len(self.names))
        return tuple(sorted(rows))

    def _column(self, row: tuple) -> Optional[np.ndarray]:
        if row not in self._columns:
            try:
                self._columns[row] = term_column(self.X, self.values[list(row)])
            except DomainError:
                self._columns[row] = None
        return self._columns[row]

    def structure(self, key: tuple) -> ExponentMatrix:
        return ExponentMatrix(tuple(tuple(self.values[list(r)]) for r in key), self.names)

    def score(self, key: tuple) -> tuple[Optional[FittedModel], ObjectiveVector]:
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        structure = self.structure(key)
        cols = [self._column(r) for r in key]
        if any(c is None for c in cols):
            result = (None, ObjectiveVector(math.inf, len(key) + int(self.config.bias),
                                            structure.n_inputs))
        else:
            T = np.column_stack(cols) if cols else np.empty((self.y.size, 0))
            model = fit_terms(structure, T, self.y, self.options)
            result = (model, objectives_of(model))
        self._cache[key] = result
        return result

    def front(self) -> ParetoFront:
        scored = [(m, o) for m, o in self._cache.values() if m is not None]
        tried = [key for key in self._cache if key]
        if not scored or (tried and all(self._cache[key][0] is None for key in tried)):
            raise EvolutionError("no evaluable structure: every candidate failed on the training rows")
        return non_dominated_filter(scored)


def objectives_of(model: FittedModel) -> ObjectiveVector:
    return ObjectiveVector(float(model.fit.sse), model.n_coefficients, model.n_inputs)


def structure_space_size(n_candidates: int, n_inputs: int, max_terms: int) -> int:
    """Number of canonical structures with at most ``max_terms`` distinct nonzero rows."""
    rows = n_candidates ** n_inputs - 1
    return sum(math.comb(rows, j) for j in range(0, max_terms + 1))


def exhaustive_search(dataset, view, config: EprConfig) -> ParetoFront:
    """Fit every canonical structure and return the exact front."""
    k = len(view.inputs)
    size = structure_space_size(len(config.exponents), k, config.max_terms)
    if size > config.exhaustive_cap:
        raise EvolutionError(
            f"structure space has {size} members, above the exhaustive cap of {config.exhaustive_cap}"
        )
    ev = StructureEvaluator(dataset, view, config)
    n = len(config.exponents)
    rows = [r for r in itertools.product(range(n), repeat=k) if r != (ev.zero,) * k]
    for m in range(config.max_terms + 1):
        for combo in itertools.combinations(rows, m):
            ev.score(combo)
    log.debug("exhaustive search over %d structures for %s", size, view.target)
    return ev.front()


def _nondominated_ranks(obj: np.ndarray) -> np.ndarray:
    """Front index (0 = best) of each row of the objective array."""
    le = np.all(obj[:, None, :] <= obj[None, :, :], axis=2)
    lt = np.any(obj[:, None, :] < obj[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    ranks = np.full(len(obj), -1)
    rank = 0
    current = np.flatnonzero(count == 0)
    while current.size:
        ranks[current] = rank
        count = count - dom[current].sum(axis=0)
        count[ranks >= 0] = -1
        current = np.flatnonzero(count == 0)
        rank += 1
    return ranks


def _crowding(obj: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    dist = np.zeros(len(obj))
    finite = np.where(np.isfinite(obj), obj, np.nan)
    for r in np.unique(ranks):
        idx = np.flatnonzero(ranks == r)
        if idx.size <= 2:
            dist[idx] = np.inf
            continue
        for j in range(obj.shape[1]):
            vals = finite[idx, j]
            if np.isnan(vals).any():
                continue
            order = idx[np.argsort(vals, kind="stable")]
            span = vals.max() - vals.min()
            dist[order[0]] = dist[order[-1]] = np.inf
            if span > 0:
                sorted_vals = np.sort(vals, kind="stable")
                dist[order[1:-1]] += (sorted_vals[2:] - sorted_vals[:-2]) / span
    return dist


def evolve(dataset, view, config: EprConfig, ga: GaConfig) -> ParetoFront:
    """Run the genetic search and return the front of everything evaluated."""
    ev = StructureEvaluator(dataset, view, config)
    k, m = len(view.inputs), config.max_terms
    n_values = len(config.exponents)
    rate = ga.mutation_rate if ga.mutation_rate is not None else 1.0 / (m * k)
    seeds = np.random.SeedSequence(int(ga.seed)).spawn(ga.generations + 1)

    rng = np.random.default_rng(seeds[0])
    nonzero = np.array([i for i in range(n_values) if i != ev.zero])
    pop = nonzero[rng.integers(0, len(nonzero), size=(ga.population_size, m, k))]
    pop = np.where(rng.random(pop.shape) < 0.5, ev.zero, pop)
    pop[0] = ev.zero  # bias-only individual

    def assess(genomes):
        keys = [ev.canonical_key(g) for g in genomes]
        obj = np.array([ev.score(key)[1] for key in keys], dtype=float)
        return keys, obj

    keys, obj = assess(pop)
    for gen in range(1, ga.generations + 1):
        rng = np.random.default_rng(seeds[gen])
        ranks = _nondominated_ranks(obj)
        crowd = _crowding(obj, ranks)

        def pick():
            i, j = rng.integers(0, len(pop), size=2)
            return pop[i] if (ranks[i], -crowd[i]) <= (ranks[j], -crowd[j]) else pop[j]

        children = []
        while len(children) < ga.population_size:
            a, b = pick(), pick()
            if rng.random() < ga.crossover_rate:
                a, b = _swap(a, b, rng.random(a.shape) < 0.5)
            children.append(_mutate_indices(a, rng, rate, n_values))
            children.append(_mutate_indices(b, rng, rate, n_values))
        children = np.array(children[: ga.population_size])
        ckeys, cobj = assess(children)

        if ga.elitism:
            merged = np.concatenate([pop, children])
            mkeys = keys + ckeys
            mobj = np.concatenate([obj, cobj])
            mranks = _nondominated_ranks(mobj)
            mcrowd = _crowding(mobj, mranks)
            seen = set()
            dup = np.zeros(len(merged), dtype=bool)
            for i, key in enumerate(mkeys):
                dup[i] = key in seen
                seen.add(key)
            order = np.lexsort((-mcrowd, dup, mranks))[: ga.population_size]
            pop, obj = merged[order], mobj[order]
            keys = [mkeys[i] for i in order]
        else:
            pop, keys, obj = children, ckeys, cobj
    log.debug("GA evaluated %d distinct structures for %s", len(ev.evaluated), view.target)
    return ev.front()
