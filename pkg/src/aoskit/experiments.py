"""Sweep runner for the two-scenario budget-allocation experiments."""
from __future__ import annotations

import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .ctmc import DomainError
from .metrics import SourceBank, aos_mean, sum_objective
from .polyblock import (
    PolyblockConfig,
    PolyblockResult,
    bf_grid_baseline,
    equal_split_baseline,
    polyblock_solve,
)
from .sim import SimConfig, replicate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def fmt(x) -> str:
    return f"{x:.12g}"


@dataclass(frozen=True)
class Scenario:
    """Bank template with one swept parameter of one source (0-based ``sweep_index``)."""

    n: tuple[int, ...]
    sigma: tuple[float, ...]
    sweep_index: int = 1
    parameter: str = "sigma"
    start: float = 0.1
    stop: float = 3.0
    step: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "sigma", tuple(float(v) for v in self.sigma))
        if len(self.n) != len(self.sigma) or not self.n:
            raise DomainError("scenario n and sigma must be non-empty and of equal length")
        if not 0 <= self.sweep_index < len(self.n):
            raise DomainError(f"sweep_index {self.sweep_index} out of range for K={len(self.n)}")
        if self.parameter not in ("sigma", "n"):
            raise DomainError(f"parameter must be 'sigma' or 'n', got {self.parameter!r}")
        if not self.step > 0:
            raise DomainError(f"sweep step must be > 0, got {self.step}")
        if self.start > self.stop:
            raise DomainError(f"sweep start {self.start} exceeds stop {self.stop}")

    @property
    def K(self) -> int:
        return len(self.n)

    def values(self) -> list[float]:
        count = math.floor((self.stop - self.start) / self.step + 1e-9) + 1
        return [round(self.start + i * self.step, 12) for i in range(count)]

    def bank(self, value: float | None = None) -> SourceBank:
        n, sigma = list(self.n), list(self.sigma)
        if value is not None:
            if self.parameter == "sigma":
                sigma[self.sweep_index] = value
            else:
                if value != int(value):
                    raise DomainError(f"swept n must be an integer, got {value}")
                n[self.sweep_index] = int(value)
        return SourceBank.from_lists(n, sigma)


@dataclass(frozen=True)
class SimOverlay:
    horizon: float = 1e5
    reps: int = 8
    seed: int = 0


@dataclass(frozen=True)
class SweepSpec:
    scenario: Scenario
    solver: PolyblockConfig = field(default_factory=PolyblockConfig)
    sim: SimOverlay | None = None
    bf_step: float = 1e-3
    outputs: dict = field(default_factory=dict)


PRESETS = {
    "a": SweepSpec(
        scenario=Scenario(n=(8, 4), sigma=(1.5, 1.5), sweep_index=1, start=0.1, stop=3.0, step=0.1),
        solver=PolyblockConfig(epsilon=1e-3, delta=1e-5),
    ),
    "b": SweepSpec(
        scenario=Scenario(n=(4, 6, 8), sigma=(0.5, 1.0, 0.5), sweep_index=1, start=0.25, stop=5.0, step=0.25),
        solver=PolyblockConfig(epsilon=1e-2, delta=1e-4),
    ),
}


def load_spec(path=None, preset: str | None = None) -> SweepSpec:
    """Build a SweepSpec from a preset, then overlay tables read from a TOML file."""
    if preset is not None and preset not in PRESETS:
        raise DomainError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[preset or "a"]
    if path is None:
        return base
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - {"scenario", "solver", "sim", "outputs", "bf_step"}
    if unknown:
        raise DomainError(f"unknown config tables: {sorted(unknown)}")
    try:
        scenario = replace(base.scenario, **data.get("scenario", {}))
        solver = replace(base.solver, **data.get("solver", {}))
        sim = base.sim
        if "sim" in data:
            sim = replace(sim or SimOverlay(), **data["sim"])
    except TypeError as exc:
        raise DomainError(f"{path}: {exc}") from None
    return SweepSpec(
        scenario=scenario,
        solver=solver,
        sim=sim,
        bf_step=float(data.get("bf_step", base.bf_step)),
        outputs={**base.outputs, **data.get("outputs", {})},
    )


@dataclass
class SweepRow:
    sweep_value: float
    polyblock: PolyblockResult
    equal_split_value: float
    bf_alloc: np.ndarray
    sim_mean: float | None = None
    sim_se: float | None = None

    @property
    def alloc(self) -> np.ndarray:
        return self.polyblock.best_alloc


def simulate_allocation(bank: SourceBank, alloc, overlay: SimOverlay, stream: int = 0) -> tuple[float, float]:
    """Simulated total AoS at ``alloc``; unsampled sources use the never-refreshed value."""
    total, var = 0.0, 0.0
    for k, (src, lam) in enumerate(zip(bank.sources, alloc)):
        if lam <= 1e-9:
            total += aos_mean(0.0, src)
            continue
        seed = int(np.random.SeedSequence([overlay.seed, stream, k]).generate_state(1, np.uint64)[0])
        cfg = SimConfig(src, float(lam), overlay.horizon, seed=seed)
        summ = replicate(cfg, overlay.reps)
        total += summ.mean["aos"]
        var += summ.se["aos"] ** 2
    return total, math.sqrt(var)


def run_row(spec: SweepSpec, index: int, value: float) -> SweepRow:
    try:
        bank = spec.scenario.bank(value)
        res = polyblock_solve(bank, spec.solver)
        row = SweepRow(
            sweep_value=value,
            polyblock=res,
            equal_split_value=sum_objective(equal_split_baseline(len(bank)), bank),
            bf_alloc=bf_grid_baseline(bank, spec.bf_step),
        )
        if spec.sim is not None:
            row.sim_mean, row.sim_se = simulate_allocation(bank, res.best_alloc, spec.sim, stream=index)
        return row
    except Exception as exc:
        raise RuntimeError(f"sweep failed at {spec.scenario.parameter}={value}: {exc}") from exc


def _row_job(args):
    return run_row(*args)


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    jobs = [(spec, i, v) for i, v in enumerate(spec.scenario.values())]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_row_job, jobs))
    return [run_row(*j) for j in jobs]


def sweep_header(K: int, with_sim: bool) -> list[str]:
    cols = ["sweep_value", *(f"lambda_{k + 1}" for k in range(K)), "ub", "lb", "equal_split_value",
            *(f"bf_lambda_{k + 1}" for k in range(K))]
    if with_sim:
        cols += ["sim_mean", "sim_se"]
    return cols


def write_sweep_csv(rows: list[SweepRow], fh, K: int, with_sim: bool):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(sweep_header(K, with_sim))
    for r in rows:
        line = [fmt(r.sweep_value), *map(fmt, r.alloc), fmt(r.polyblock.ub), fmt(r.polyblock.lb),
                fmt(r.equal_split_value), *map(fmt, r.bf_alloc)]
        if with_sim:
            line += [fmt(r.sim_mean), fmt(r.sim_se)]
        w.writerow(line)


def read_sweep_csv(text: str) -> list[dict[str, float]]:
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


SIM_HEADER = ["rep", "mean_aos", "mean_aoii", "mean_aoi", "mean_bf"]


def write_simulation_csv(summary, fh):
    """Per-replication rows followed by ``mean`` and ``se`` aggregate rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SIM_HEADER)
    for i, r in enumerate(summary.reports):
        w.writerow([i, fmt(r.mean_aos), fmt(r.mean_aoii), fmt(r.mean_aoi), fmt(r.mean_bf)])
    for label, d in (("mean", summary.mean), ("se", summary.se)):
        w.writerow([label, *(fmt(d[m]) for m in ("aos", "aoii", "aoi", "bf"))])


def write_trace_csv(result: PolyblockResult, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iter", "lb", "ub", "n_vplus"])
    for it, lb, ub, nv in result.trace:
        w.writerow([it, fmt(lb), fmt(ub), nv])
