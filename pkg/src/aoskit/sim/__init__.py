from .engine import (
    METRICS,
    EventLog,
    MetricReport,
    ReplicationSummary,
    SimConfig,
    UnderSampleError,
    aos_value_at,
    breakpoint_curves,
    integrate_metrics,
    replicate,
    run_replication,
    simulate,
)

__all__ = [
    "METRICS",
    "EventLog",
    "MetricReport",
    "ReplicationSummary",
    "SimConfig",
    "UnderSampleError",
    "aos_value_at",
    "breakpoint_curves",
    "integrate_metrics",
    "replicate",
    "run_replication",
    "simulate",
]
