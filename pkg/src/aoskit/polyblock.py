"""Polyblock outer approximation for minimizing total AoS under a unit rate budget.

The objective is coordinate-wise nonincreasing and the feasible set
``{0 <= lam <= 1, sum(lam) <= 1}`` is normal, so the optimum sits on the face
``sum(lam) = 1``. Each vertex ``v`` of the polyblock bounds the objective over
its box ``[0, v]`` from below by ``g(v)``.
"""
from __future__ import annotations

import heapq
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .ctmc import DomainError
from .metrics import SourceBank, _aos_formula, sum_mismatch, sum_objective

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], np.ndarray]

GRID_LIMIT = 10**7


@dataclass(frozen=True)
class PolyblockConfig:
    epsilon: float = 1e-3
    delta: float = 1e-5
    max_iters: int = 100_000
    feas_tol: float = 1e-12
    # the displacement filter only applies when K >= this
    delta_min_dim: int = 3
    # drop V+ vertices whose box is inside another V+ box
    dominance_cleanup: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.delta > 0:
            raise DomainError(f"delta must be > 0, got {self.delta}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.feas_tol >= 0:
            raise DomainError(f"feas_tol must be >= 0, got {self.feas_tol}")


@dataclass(frozen=True, order=True)
class Vertex:
    """A polyblock vertex; ordering is by value, then lexicographically by coords."""

    value: float
    coords: tuple[float, ...]

    @classmethod
    def of(cls, coords, objective: Objective) -> "Vertex":
        c = np.asarray(coords, dtype=float)
        if np.any(c < 0) or np.any(c > 1):
            raise DomainError(f"vertex coords must lie in [0, 1]: {c}")
        return cls(float(objective(c[None, :])[0]), tuple(c.tolist()))

    @classmethod
    def batch(cls, coords: np.ndarray, objective: Objective) -> list["Vertex"]:
        if len(coords) == 0:
            return []
        vals = objective(coords)
        return [cls(float(v), tuple(c.tolist())) for v, c in zip(vals, coords)]

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)

    @property
    def total(self) -> float:
        return math.fsum(self.coords)


@dataclass
class PolyblockResult:
    best_alloc: np.ndarray
    ub: float
    lb: float
    gap: float
    iterations: int
    converged: bool
    # smallest lower bound among boxes dropped by the displacement filter
    pruned_floor: float = math.inf
    trace: list[tuple[int, float, float, int]] = field(default_factory=list, repr=False)


def project(v) -> np.ndarray:
    """Scale ``v`` back onto the budget: ``min(1, 1/sum(v)) * v``."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise DomainError(f"cannot project a vector with negative entries: {v}")
    s = v.sum()
    if s <= 0:
        raise DomainError("cannot project the zero vector")
    return v / s if s > 1 else v.copy()


def children(v, v_proj) -> np.ndarray:
    """The K corners of ``[v_proj, v]`` adjacent to ``v``: row k is ``v`` with entry k from ``v_proj``."""
    v = np.asarray(v, dtype=float)
    out = np.tile(v, (v.size, 1))
    idx = np.arange(v.size)
    out[idx, idx] = np.asarray(v_proj, dtype=float)
    return out


class PolyblockSolver:
    """Step-wise polyblock iteration; ``run`` drives it to termination.

    ``v_plus`` holds vertices outside the budget (lower bounds), ``v_minus``
    feasible points (upper bounds).
    """

    def __init__(self, objective: Objective, K: int, config: PolyblockConfig | None = None):
        self.objective = objective
        self.K = K
        self.config = config or PolyblockConfig()
        self.v_minus: list[Vertex] = []
        self.best: Vertex | None = None
        self.iterations = 0
        self.trace: list[tuple[int, float, float, int]] = []
        self._heap: list[Vertex] = []
        self._removed: set[tuple[float, ...]] = set()
        self.pruned_floor = math.inf
        self._push(Vertex.of(np.ones(K), objective))

    @property
    def ub(self) -> float:
        return self.best.value if self.best is not None else math.inf

    @property
    def v_plus(self) -> list[Vertex]:
        return sorted(v for v in self._heap if v.coords not in self._removed)

    @property
    def n_vplus(self) -> int:
        return len(self._heap) - sum(1 for v in self._heap if v.coords in self._removed) \
            if self._removed else len(self._heap)

    def _peek(self) -> Vertex | None:
        while self._heap and self._heap[0].coords in self._removed:
            self._removed.discard(heapq.heappop(self._heap).coords)
        return self._heap[0] if self._heap else None

    @property
    def lb(self) -> float:
        top = self._peek()
        return self.ub if top is None else min(top.value, self.ub)

    @property
    def gap(self) -> float:
        return self.ub - self.lb

    def done(self) -> bool:
        return self._peek() is None or self.gap <= self.config.epsilon

    def _feasible(self, v: Vertex) -> bool:
        return v.total <= 1 + self.config.feas_tol

    def _add_minus(self, v: Vertex):
        self.v_minus.append(v)
        if self.best is None or v < self.best:
            self.best = v

    def _push(self, v: Vertex):
        if self.config.dominance_cleanup:
            a = v.array
            for w in self._heap:
                if w.coords in self._removed:
                    continue
                b = w.array
                if np.all(a <= b):
                    return
                if np.all(b <= a):
                    self._removed.add(w.coords)
        heapq.heappush(self._heap, v)

    def step(self):
        cand = self._peek()
        if cand is None:
            return
        heapq.heappop(self._heap)
        self.iterations += 1
        if self._feasible(cand):
            self._add_minus(cand)
        else:
            cfg = self.config
            c = cand.coords
            total = math.fsum(c)
            vp = tuple(ci / total for ci in c)
            rows = [vp] + [c[:k] + (vp[k],) + c[k + 1:] for k in range(self.K)]
            vals = self.objective(np.array(rows))
            self._add_minus(Vertex(float(vals[0]), vp))
            kids = [Vertex(float(v), r) for v, r in zip(vals[1:], rows[1:])]
            outside = []
            for kid in kids:
                if self._feasible(kid):
                    self._add_minus(kid)
                else:
                    outside.append(kid)
            filt = self.K >= cfg.delta_min_dim
            for kid in outside:
                if kid.value >= self.ub:
                    continue
                if filt and math.dist(kid.coords, c) <= cfg.delta:
                    self.pruned_floor = min(self.pruned_floor, kid.value)
                    continue
                self._push(kid)
        self.trace.append((self.iterations, self.lb, self.ub, self.n_vplus))

    def run(self) -> PolyblockResult:
        while not self.done() and self.iterations < self.config.max_iters:
            self.step()
        converged = self.done()
        if not converged:
            log.warning("polyblock stopped after %d iterations with gap %.3g",
                        self.iterations, self.gap)
        return PolyblockResult(
            best_alloc=self.best.array,
            ub=self.ub,
            lb=self.lb,
            gap=self.gap,
            iterations=self.iterations,
            converged=converged,
            pruned_floor=self.pruned_floor,
            trace=list(self.trace),
        )


def bank_objective(bank: SourceBank) -> Objective:
    sigma, r = bank.sigma, bank.rho

    def g(lam):
        return _aos_formula(lam, sigma, r).sum(axis=-1)

    return g


def polyblock_solve(bank: SourceBank, config: PolyblockConfig | None = None,
                    objective: Objective | None = None) -> PolyblockResult:
    """Near-optimal budget split minimizing total mean AoS over ``bank``."""
    obj = objective or bank_objective(bank)
    return PolyblockSolver(obj, len(bank), config).run()


def equal_split_baseline(K: int) -> np.ndarray:
    """Equal split, which minimizes total AoI."""
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    return np.full(K, 1.0 / K)


def face_grid(K: int, step: float) -> np.ndarray:
    """All allocations on ``sum = 1`` with entries in multiples of ``step``, in lexicographic order."""
    if not step > 0:
        raise DomainError(f"grid step must be > 0, got {step}")
    N = round(1.0 / step)
    if N < 1 or abs(N * step - 1.0) > 1e-9:
        raise DomainError(f"grid step must divide 1, got {step}")
    size = math.comb(N + K - 1, K - 1)
    if size > GRID_LIMIT:
        raise DomainError(f"grid has {size} points, limit is {GRID_LIMIT}")

    def compositions(total, parts):
        if parts == 1:
            return np.array([[total]], dtype=np.int64)
        blocks = []
        for first in range(total + 1):
            rest = compositions(total - first, parts - 1)
            blocks.append(np.column_stack([np.full(len(rest), first), rest]))
        return np.concatenate(blocks)

    return compositions(N, K) / N


def grid_oracle(bank: SourceBank, step: float) -> tuple[np.ndarray, float]:
    """Exhaustive minimum of the total AoS over the budget face at resolution ``step``."""
    grid = face_grid(len(bank), step)
    vals = sum_objective(grid, bank)
    i = int(np.argmin(vals))
    return grid[i], float(vals[i])


def bf_grid_baseline(bank: SourceBank, step: float) -> np.ndarray:
    """Face grid point with the largest total fraction of correct-estimate time."""
    grid = face_grid(len(bank), step)
    bf = len(bank) - sum_mismatch(grid, bank)
    return grid[int(np.argmax(bf))]
