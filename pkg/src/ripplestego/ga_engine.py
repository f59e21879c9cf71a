"""Adaptive genetic algorithm over permutations and pixel triples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PERMUTATION = "permutation"
BIT_TRIPLE = "bittriple"


@dataclass(frozen=True)
class AgaParams:
    population_size: int = 32
    base_pc: float = 0.8
    base_pm: float = 0.05
    pm_max: float = 0.4
    stagnation_epsilon: float = 0.01
    max_generations: int = 100
    elitism_count: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("base_pc", "base_pm", "pm_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.pm_max < self.base_pm:
            raise ValueError("pm_max must be >= base_pm")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_generations < 0 or self.elitism_count < 0:
            raise ValueError("max_generations and elitism_count must be non-negative")


@dataclass
class EvolutionTrace:
    best: list[float] = field(default_factory=list)
    mean: list[float] = field(default_factory=list)
    rates: list[tuple[float, float]] = field(default_factory=list)


def is_stagnant(fitness: Sequence[float], eps: float) -> bool:
    f = np.asarray(fitness, dtype=float)
    finite = f[np.isfinite(f)]
    if finite.size == 0:
        return True
    best, mean = finite.max(), finite.mean()
    if best == 0:
        return best - mean < eps
    return (best - mean) / abs(best) < eps


def adapt_rates(fitness: Sequence[float], params: AgaParams, pm: float | None = None, pc: float | None = None):
    """Stagnation rule: double pm (capped) and drop pc by 0.1 (floored at 0.5).

    Passing the previous ``pm``/``pc`` lets repeated stagnation compound.
    """
    if len(fitness) == 0:
        raise ValueError("empty fitness list")
    if not is_stagnant(fitness, params.stagnation_epsilon):
        return params.base_pc, params.base_pm
    pm = params.base_pm if pm is None else pm
    pc = params.base_pc if pc is None else pc
    return max(0.5, pc - 0.1), min(params.pm_max, 2.0 * pm)


def crossover_permutation(a, b, rng: np.random.Generator | None = None, segment: tuple[int, int] | None = None):
    """Order crossover: keep a[i:j] in place, fill the rest in b's order starting after j."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("parents differ in length")
    n = len(a)
    if segment is None:
        i, j = sorted(rng.choice(n + 1, size=2, replace=False))
    else:
        i, j = segment
    child = np.empty_like(a)
    child[i:j] = a[i:j]
    keep = set(a[i:j].tolist())
    fill = [v for v in np.roll(b, -j).tolist() if v not in keep]
    slots = [(j + t) % n for t in range(n - (j - i))]
    child[slots] = fill
    return child


def crossover_triple(a, b, shift: int = 1):
    """Exchange the pixels after position ``shift`` (default: shift by one pixel)."""
    return tuple(a[:shift]) + tuple(b[shift:])


def mutate(genome, pm: float, rng: np.random.Generator, kind: str = PERMUTATION, force: bool = False):
    """Permutation: swap two positions with probability pm.
    Triple: flip each value's second-lowest bit with probability pm."""
    if kind == PERMUTATION:
        g = np.array(genome, copy=True)
        if force or rng.random() < pm:
            i, j = rng.choice(len(g), size=2, replace=False)
            g[i], g[j] = g[j], g[i]
        return g
    out = []
    for v in genome:
        out.append(int(v) ^ 2 if force or rng.random() < pm else int(v))
    return tuple(out)


def _tournament(fitness: np.ndarray, rng: np.random.Generator) -> int:
    i, j = rng.integers(0, len(fitness), size=2)
    if fitness[j] > fitness[i] or (fitness[j] == fitness[i] and j < i):
        return int(j)
    return int(i)


def evolve(
    population: Sequence,
    fitness: Callable,
    params: AgaParams = AgaParams(),
    kind: str = PERMUTATION,
    crossover_shift: int = 1,
):
    """Run the adaptive GA. Returns (best genome ever seen, trace)."""
    if len(population) == 0:
        raise ValueError("empty population")
    rng = np.random.default_rng(params.seed)
    pop = [np.asarray(g).copy() if kind == PERMUTATION else tuple(g) for g in population]
    fit = np.array([fitness(g) for g in pop], dtype=float)
    trace = EvolutionTrace()
    best_i = int(np.argmax(fit))
    best_g, best_f = pop[best_i], fit[best_i]
    pc, pm = params.base_pc, params.base_pm

    def record():
        finite = fit[np.isfinite(fit)]
        trace.best.append(float(best_f))
        trace.mean.append(float(finite.mean()) if finite.size else float("-inf"))
        trace.rates.append((pc, pm))

    record()
    size = params.population_size
    for _ in range(params.max_generations):
        if is_stagnant(fit, params.stagnation_epsilon):
            pc, pm = adapt_rates(fit, params, pm=pm, pc=pc)
        else:
            pc, pm = params.base_pc, params.base_pm
        order = np.lexsort((np.arange(len(fit)), -fit))
        nxt = [pop[i] for i in order[: min(params.elitism_count, len(pop))]]
        while len(nxt) < size:
            pa, pb = pop[_tournament(fit, rng)], pop[_tournament(fit, rng)]
            if rng.random() < pc:
                child = crossover_permutation(pa, pb, rng) if kind == PERMUTATION else crossover_triple(pa, pb, crossover_shift)
            else:
                child = pa.copy() if kind == PERMUTATION else tuple(pa)
            nxt.append(mutate(child, pm, rng, kind))
        pop = nxt
        fit = np.array([fitness(g) for g in pop], dtype=float)
        i = int(np.argmax(fit))
        if fit[i] > best_f:
            best_g, best_f = pop[i], fit[i]
        record()
    return best_g, trace
