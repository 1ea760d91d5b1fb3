"""Event-driven Monte-Carlo simulation of the sample / transmit / estimate loop.

The source and the channel are two competing exponential clocks (rates
``sigma`` and ``lambda``). On every delivery the monitor installs the sample
that was taken when the previous transmission started, and the sensor
immediately samples again. All four metric curves are piecewise linear with
slope 0 or 1 between events, so their time integrals are computed exactly.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..ctmc import DomainError, SymmetricSourceParams, check_rate
from . import _kernel as K

METRICS = ("aos", "aoii", "aoi", "bf")
_CHUNK = 1 << 18


class UnderSampleError(RuntimeError):
    """The horizon ended before the measurement window could start."""


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    Measurement starts at ``max(warmup, T_k)`` where ``T_k`` is the
    ``warmup_deliveries``-th delivery; before the first delivery the monitor
    has no estimate at all.
    """

    params: SymmetricSourceParams
    lam: float
    horizon: float
    seed: int = 0
    warmup: float = 0.0
    warmup_deliveries: int = 1
    n_batches: int = 16

    def __post_init__(self):
        lam = check_rate(self.lam, positive=True)
        object.__setattr__(self, "lam", lam)
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise DomainError(f"horizon must be positive and finite, got {self.horizon}")
        if not (0 <= self.warmup < self.horizon):
            raise DomainError(f"warmup must lie in [0, horizon), got {self.warmup}")
        if self.warmup_deliveries < 1:
            raise DomainError("warmup_deliveries must be >= 1")
        if self.n_batches < 1:
            raise DomainError("n_batches must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError("seed must be a non-negative 64-bit integer")


@dataclass
class EventLog:
    """Timestamped source jumps and deliveries, starting from a known initial state.

    ``kinds`` holds 0 for a jump (``values`` = new source state) and 1 for a
    delivery (``values`` = installed sample, ``gen_times`` = its sampling time).
    """

    n_states: int
    initial_state: int
    horizon: float
    times: np.ndarray
    kinds: np.ndarray
    values: np.ndarray
    gen_times: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def delivery_times(self) -> np.ndarray:
        return self.times[self.kinds == K.DELIVERY]

    def write_csv(self, path):
        """Export as ``t,kind,value,gen_time``; the first row records the initial state at t=0."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "kind", "value", "gen_time"])
            w.writerow([_fmt(0.0), "jump", self.initial_state, ""])
            for t, k, v, g in zip(self.times, self.kinds, self.values, self.gen_times):
                if k == K.JUMP:
                    w.writerow([_fmt(t), "jump", int(v), ""])
                else:
                    w.writerow([_fmt(t), "delivery", int(v), _fmt(g)])

    @classmethod
    def read_csv(cls, path, n_states: int, horizon: float) -> "EventLog":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty event log")
        first, rest = rows[0], rows[1:]
        return cls(
            n_states=n_states,
            initial_state=int(first["value"]),
            horizon=horizon,
            times=np.array([float(r["t"]) for r in rest]),
            kinds=np.array([K.JUMP if r["kind"] == "jump" else K.DELIVERY for r in rest], dtype=np.int8),
            values=np.array([int(r["value"]) for r in rest], dtype=np.int64),
            gen_times=np.array([float(r["gen_time"]) if r["gen_time"] else np.nan for r in rest]),
        )


@dataclass
class MetricReport:
    mean_aos: float
    mean_aoii: float
    mean_aoi: float
    mean_bf: float
    measured_time: float
    n_deliveries: int
    n_jumps: int = 0
    # breakpoints where AoS(t) > AoI(t); must stay 0
    dominance_violations: int = 0
    # breakpoints where AoS(t) != AoII(t)
    aos_aoii_differences: int = 0
    # per-batch time averages, columns follow METRICS
    batch_means: np.ndarray | None = field(default=None, repr=False)

    @property
    def mismatch_fraction(self) -> float:
        return 1.0 - self.mean_bf

    def as_dict(self) -> dict[str, float]:
        return {m: getattr(self, f"mean_{m}") for m in METRICS}


def _fmt(x) -> str:
    return f"{x:.12g}"


def _seed_sequence(seed: int, stream: int | None = None) -> np.random.SeedSequence:
    if stream is None:
        return np.random.SeedSequence(int(seed))
    return np.random.SeedSequence(int(seed), spawn_key=(int(stream),))


def _run(config: SimConfig, seed_seq: np.random.SeedSequence, record_log: bool):
    p = config.params
    n, sigma, lam, horizon = p.n_states, p.sigma, config.lam, float(config.horizon)
    rng = np.random.Generator(np.random.PCG64(seed_seq))

    x0 = int(rng.integers(n))
    fs = np.zeros(K.N_FSTATE)
    is_ = np.zeros(K.N_ISTATE, dtype=np.int64)
    fs[K.F_T0] = np.inf
    is_[K.I_X] = x0
    is_[K.I_EST] = -1
    is_[K.I_PEND] = x0  # first sample taken at t = 0
    le = np.full(n, np.nan)
    acc = np.zeros((config.n_batches, 5))

    chunk = int(min(_CHUNK, max(1024, 1.2 * (sigma + lam) * horizon + 1024)))
    if record_log:
        bufs = [np.empty(chunk), np.empty(chunk, dtype=np.int8),
                np.empty(chunk, dtype=np.int64), np.empty(chunk)]
    else:
        bufs = [np.empty(0), np.empty(0, dtype=np.int8), np.empty(0, dtype=np.int64), np.empty(0)]
    pieces = []
    while not is_[K.I_DONE]:
        exps = rng.standard_exponential(chunk)
        u_kind = rng.random(chunk)
        u_jump = rng.random(chunk)
        is_[K.I_NLOG] = 0
        K.run_chunk(exps, u_kind, u_jump, n, sigma, lam, horizon,
                    float(config.warmup), int(config.warmup_deliveries),
                    fs, is_, le, acc, *bufs, record_log)
        if record_log:
            m = is_[K.I_NLOG]
            pieces.append([b[:m].copy() for b in bufs])

    if not is_[K.I_ARMED] or fs[K.F_T0] >= horizon:
        raise UnderSampleError(
            f"horizon {horizon} ended before {config.warmup_deliveries} deliveries "
            f"and warmup {config.warmup} elapsed; nothing was measured"
        )
    tot = acc.sum(axis=0)
    T = tot[4]
    with np.errstate(invalid="ignore", divide="ignore"):
        batch = acc[:, :4] / acc[:, 4:5]
    report = MetricReport(
        mean_aos=float(tot[0] / T),
        mean_aoii=float(tot[1] / T),
        mean_aoi=float(tot[2] / T),
        mean_bf=float(tot[3] / T),
        measured_time=float(T),
        n_deliveries=int(is_[K.I_NDEL_WIN]),
        n_jumps=int(is_[K.I_NJUMP]),
        dominance_violations=int(is_[K.I_DOMINANCE]),
        aos_aoii_differences=int(is_[K.I_AOS_NE_AOII]),
        batch_means=batch,
    )
    if not record_log:
        return report
    cols = [np.concatenate([pc[i] for pc in pieces]) for i in range(4)]
    log = EventLog(n, x0, horizon, *cols)
    return report, log


def simulate(config: SimConfig, *, record_log: bool = False):
    """Run one simulation; returns a MetricReport, or ``(report, log)`` with ``record_log``."""
    return _run(config, _seed_sequence(config.seed), record_log)


def aos_value_at(t: float, state: int, estimate: int, last_equal) -> float:
    """AoS at time ``t`` given the per-state last-occupancy tracker.

    ``last_equal[x]`` is the time the source last left ``x``; it is only read
    when ``x`` is not the current state.
    """
    if state == estimate:
        return 0.0
    le = last_equal[estimate]
    if le is None or not math.isfinite(le):
        raise AssertionError(f"estimate {estimate} was never occupied by the source")
    return t - le


def integrate_metrics(log: EventLog, window) -> MetricReport:
    """Exact time averages of AoS, AoII, AoI and BF over ``window = (t0, t1)``.

    Pure-Python replay of ``log``; independent of the compiled kernel.
    """
    t0, t1 = map(float, window)
    if not t1 > t0:
        raise ValueError(f"empty window [{t0}, {t1}]")
    if t1 > log.horizon:
        raise ValueError(f"window end {t1} beyond log horizon {log.horizon}")
    deliveries = log.delivery_times
    if deliveries.size == 0 or deliveries[0] > t0:
        raise ValueError("window starts before the first delivery; no estimate exists there")

    x = log.initial_state
    est = None
    pend_val, pend_gen = x, 0.0
    gen = math.nan
    sync = math.nan
    last_equal = [math.nan] * log.n_states
    sums = dict.fromkeys(METRICS, 0.0)
    n_del = 0

    def integrate(a, b):
        lo, hi = max(a, t0), min(b, t1)
        if hi <= lo or est is None:
            return
        d = hi - lo
        aoi = lo - gen
        sums["aoi"] += aoi * d + d * d / 2
        if x == est:
            sums["bf"] += d
        else:
            sums["aos"] += aos_value_at(lo, x, est, last_equal) * d + d * d / 2
            sums["aoii"] += (lo - sync) * d + d * d / 2

    t = 0.0
    for tn, kind, val, g in zip(log.times.tolist(), log.kinds.tolist(),
                                log.values.tolist(), log.gen_times.tolist()):
        if tn >= t1:
            break
        integrate(t, tn)
        t = tn
        if kind == K.JUMP:
            last_equal[x] = t
            if x == est:
                sync = t
            x = val
        else:
            if val != pend_val or not math.isclose(g, pend_gen, rel_tol=1e-9, abs_tol=1e-9):
                raise ValueError(f"delivery at t={t} does not carry the pending sample")
            if val != x:
                if est is None:
                    sync = last_equal[val]
                elif x == est:
                    sync = t
            est, gen = val, g
            pend_val, pend_gen = x, t
            if t0 <= t:
                n_del += 1
    integrate(t, t1)
    T = t1 - t0
    return MetricReport(
        mean_aos=sums["aos"] / T,
        mean_aoii=sums["aoii"] / T,
        mean_aoi=sums["aoi"] / T,
        mean_bf=sums["bf"] / T,
        measured_time=T,
        n_deliveries=n_del,
    )


def breakpoint_curves(log: EventLog) -> dict[str, np.ndarray]:
    """Metric values on both sides of every event after the first delivery.

    Returns arrays keyed ``t``, ``aos``, ``aoii``, ``aoi``, ``matched``; each
    event contributes its left limit followed by its right limit.
    """
    x = log.initial_state
    est = None
    gen = sync = math.nan
    last_equal = [math.nan] * log.n_states
    out = {k: [] for k in ("t", "aos", "aoii", "aoi", "matched")}

    def snap(t):
        if est is None:
            return
        out["t"].append(t)
        out["aos"].append(aos_value_at(t, x, est, last_equal))
        out["aoii"].append(0.0 if x == est else t - sync)
        out["aoi"].append(t - gen)
        out["matched"].append(x == est)

    for t, kind, val, g in zip(log.times.tolist(), log.kinds.tolist(),
                               log.values.tolist(), log.gen_times.tolist()):
        snap(t)
        if kind == K.JUMP:
            last_equal[x] = t
            if x == est:
                sync = t
            x = val
        else:
            if val != x:
                if est is None:
                    sync = last_equal[val]
                elif x == est:
                    sync = t
            est, gen = val, g
        snap(t)
    return {k: np.asarray(v) for k, v in out.items()}


@dataclass
class ReplicationSummary:
    reports: list[MetricReport]
    mean: dict[str, float]
    # standard error of the mean across independent replications
    se: dict[str, float]
    # standard error from the pooled within-replication batch means
    se_batch: dict[str, float]

    @property
    def reps(self) -> int:
        return len(self.reports)

    def z(self, metric: str, reference: float, *, batch: bool = True) -> float:
        se = (self.se_batch if batch else self.se)[metric]
        return (self.mean[metric] - reference) / se


def run_replication(config: SimConfig, index: int, *, record_log: bool = False):
    """Replication ``index`` of ``config`` exactly as ``replicate`` runs it."""
    return _run(config, _seed_sequence(config.seed, index), record_log)


def replicate(config: SimConfig, reps: int, *, workers: int = 1) -> ReplicationSummary:
    """Independent replications; replication ``i`` draws from stream ``(seed, i)``.

    Results are reduced in replication order, so ``workers`` never changes them.
    """
    if reps < 2:
        raise DomainError(f"need at least 2 replications, got {reps}")

    def one(i):
        return run_replication(config, i)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(one, range(reps)))
    else:
        reports = [one(i) for i in range(reps)]

    vals = np.array([[getattr(r, f"mean_{m}") for m in METRICS] for r in reports])
    weights = np.array([r.measured_time for r in reports])
    mean = (vals * weights[:, None]).sum(axis=0) / weights.sum()
    se = vals.std(axis=0, ddof=1) / math.sqrt(reps)
    batches = np.concatenate([r.batch_means for r in reports])
    if batches.shape[0] > 1:
        se_b = batches.std(axis=0, ddof=1) / math.sqrt(batches.shape[0])
    else:
        se_b = se
    return ReplicationSummary(
        reports=reports,
        mean=dict(zip(METRICS, mean.tolist())),
        se=dict(zip(METRICS, se.tolist())),
        se_batch=dict(zip(METRICS, se_b.tolist())),
    )
