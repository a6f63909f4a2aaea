"""Box-constrained differential evolution with feasibility-first selection.

Classic DE/rand/1/bin.  Candidates are compared by constraint violation
before objective: any feasible point beats any infeasible one, two
infeasible points compare on violation, two feasible ones on objective.
Mutants are clipped back into the box, so bound-hitting optima are
reachable exactly.  Runs are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class BadBounds(ValueError):
    """Bound arrays are malformed or inverted."""


class NonFiniteObjective(RuntimeError):
    """A callback returned NaN or infinity during the search."""


@dataclass(frozen=True)
class DeParams:
    """Search budget and variation settings.

    population_size of None means 10x the problem dimension.  tolerance
    controls early stopping: the search halts once every member is
    feasible and the population's objective spread falls below it.
    """

    population_size: int | None = None
    mutation_factor: float = 0.7
    crossover_rate: float = 0.9
    max_generations: int = 200
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.population_size is not None and self.population_size < 4:
            raise ValueError(f"population_size must be >= 4, got {self.population_size}")
        if not 0.0 < self.mutation_factor <= 2.0:
            raise ValueError(f"mutation_factor must lie in (0, 2], got {self.mutation_factor}")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError(f"crossover_rate must lie in [0, 1], got {self.crossover_rate}")
        if self.max_generations < 1:
            raise ValueError(f"max_generations must be >= 1, got {self.max_generations}")
        if self.tolerance < 0.0:
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


@dataclass(frozen=True)
class DeResult:
    best_vector: np.ndarray
    best_objective: float
    best_violation: float
    generations_used: int
    feasible: bool


def _deb_not_worse(f_a: float, v_a: float, f_b: float, v_b: float) -> bool:
    """True when (f_a, v_a) is at least as good as (f_b, v_b)."""
    if v_a == 0.0 and v_b == 0.0:
        return f_a <= f_b
    if v_a == 0.0:
        return True
    if v_b == 0.0:
        return False
    return v_a <= v_b


def de_minimize(
    objective: Callable[[np.ndarray], float],
    violation: Callable[[np.ndarray], float],
    lower,
    upper,
    params: DeParams,
) -> DeResult:
    """Minimize objective subject to violation == 0 inside the box.

    violation must be nonnegative, zero exactly on the feasible set.
    Both callbacks must be pure; selection works from stored values only,
    so evaluation order never changes the result.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.ndim != 1 or lower.shape != upper.shape or lower.size == 0:
        raise BadBounds(
            f"bounds must be equal-length 1-D arrays, got {lower.shape} and {upper.shape}"
        )
    if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
        raise BadBounds("bounds must be finite")
    if np.any(lower > upper):
        bad = int(np.argmax(lower > upper))
        raise BadBounds(f"lower[{bad}]={lower[bad]} exceeds upper[{bad}]={upper[bad]}")

    dim = lower.size
    pop_size = params.population_size if params.population_size is not None else 10 * dim
    if pop_size < 4:
        pop_size = 4
    span = upper - lower

    rng = np.random.Generator(np.random.PCG64(params.seed))

    def evaluate(vec: np.ndarray) -> tuple[float, float]:
        f = float(objective(vec))
        v = float(violation(vec))
        if not np.isfinite(f):
            raise NonFiniteObjective(f"objective returned {f} at {vec.tolist()}")
        if not np.isfinite(v):
            raise NonFiniteObjective(f"violation returned {v} at {vec.tolist()}")
        return f, v

    pop = lower + rng.random((pop_size, dim)) * span
    fs = np.empty(pop_size)
    vs = np.empty(pop_size)
    for i in range(pop_size):
        fs[i], vs[i] = evaluate(pop[i])

    def best_index() -> int:
        best = 0
        for i in range(1, pop_size):
            if not _deb_not_worse(fs[best], vs[best], fs[i], vs[i]):
                best = i
        return best

    f_factor = params.mutation_factor
    cr = params.crossover_rate
    generations = 0
    for _ in range(params.max_generations):
        if np.all(vs == 0.0) and float(fs.max() - fs.min()) < params.tolerance:
            break
        generations += 1

        # Build the whole trial generation before any selection so the
        # outcome cannot depend on evaluation order.
        trials = np.empty_like(pop)
        for i in range(pop_size):
            candidates = [j for j in range(pop_size) if j != i]
            r1, r2, r3 = rng.choice(candidates, size=3, replace=False)
            mutant = pop[r1] + f_factor * (pop[r2] - pop[r3])
            np.clip(mutant, lower, upper, out=mutant)
            cross = rng.random(dim) < cr
            cross[rng.integers(dim)] = True
            trials[i] = np.where(cross, mutant, pop[i])

        for i in range(pop_size):
            f_t, v_t = evaluate(trials[i])
            if _deb_not_worse(f_t, v_t, fs[i], vs[i]):
                pop[i] = trials[i]
                fs[i] = f_t
                vs[i] = v_t

    best = best_index()
    return DeResult(
        best_vector=pop[best].copy(),
        best_objective=float(fs[best]),
        best_violation=float(vs[best]),
        generations_used=generations,
        feasible=bool(vs[best] == 0.0),
    )


__all__ = ["BadBounds", "NonFiniteObjective", "DeParams", "DeResult", "de_minimize"]
