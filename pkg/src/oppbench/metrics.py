"""The three benchmark metrics plus Student-t confidence intervals.

Delivery probability counts each message's first arrival once; cost counts
completed transmissions per delivered message (the delivering hop included
by default); latency averages first-delivery times of delivered messages.
"""

import math
from dataclasses import dataclass, field

from scipy import stats

from .engine import MS_PER_SECOND

COST_INCLUDE = "include_delivered"
COST_EXCLUDE = "exclude_delivered"


@dataclass(slots=True)
class RunReport:
    protocol: str
    ttl_s: int
    seed: int
    created: int
    delivered: int
    transmissions: int
    latencies_ms: list[int] = field(default_factory=list)
    cost_mode: str = COST_INCLUDE


def delivery_probability(report: RunReport) -> float | None:
    if report.created == 0:
        return None
    return report.delivered / report.created


def cost(report: RunReport) -> float | None:
    if report.delivered == 0:
        return None
    transmissions = report.transmissions
    if report.cost_mode == COST_EXCLUDE:
        transmissions -= report.delivered
    return transmissions / report.delivered


def latency_mean_s(report: RunReport) -> float | None:
    if not report.latencies_ms:
        return None
    return sum(report.latencies_ms) / len(report.latencies_ms) / MS_PER_SECOND


def confidence_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """(mean, half-width) using Student t with n-1 degrees of freedom."""
    n = len(samples)
    if n < 2:
        raise ValueError("confidence interval needs at least 2 samples")
    mean = sum(samples) / n
    var = sum((x - mean) ** 2 for x in samples) / (n - 1)
    t = float(stats.t.ppf(0.5 + level / 2, n - 1))
    return mean, t * math.sqrt(var / n)


@dataclass(slots=True)
class CellSummary:
    protocol: str
    ttl_s: int
    n: int
    delivery_mean: float | None
    delivery_ci: float | None
    cost_mean: float | None
    cost_ci: float | None
    latency_mean: float | None
    latency_ci: float | None


def _summarize(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    if len(values) == 1:
        return values[0], None
    return confidence_interval(values)


def summarize_cell(reports: list[RunReport]) -> CellSummary:
    head = reports[0]
    deliveries = [v for v in (delivery_probability(r) for r in reports) if v is not None]
    costs = [v for v in (cost(r) for r in reports) if v is not None]
    lats = [v for v in (latency_mean_s(r) for r in reports) if v is not None]
    d_mean, d_ci = _summarize(deliveries)
    c_mean, c_ci = _summarize(costs)
    l_mean, l_ci = _summarize(lats)
    return CellSummary(
        head.protocol, head.ttl_s, len(reports), d_mean, d_ci, c_mean, c_ci, l_mean, l_ci
    )


REPORT_HEADER = "protocol,ttl_s,seed,created,delivered,delivery_prob,transmissions,cost,latency_mean_s"
SUMMARY_HEADER = (
    "protocol,ttl_s,n,delivery_prob_mean,delivery_prob_ci,cost_mean,cost_ci,"
    "latency_mean_s_mean,latency_mean_s_ci"
)


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def report_row(report: RunReport) -> str:
    return ",".join(
        [
            report.protocol,
            str(report.ttl_s),
            str(report.seed),
            str(report.created),
            str(report.delivered),
            _fmt(delivery_probability(report)),
            str(report.transmissions),
            _fmt(cost(report)),
            _fmt(latency_mean_s(report)),
        ]
    )


def summary_row(cell: CellSummary) -> str:
    return ",".join(
        [
            cell.protocol,
            str(cell.ttl_s),
            str(cell.n),
            _fmt(cell.delivery_mean),
            _fmt(cell.delivery_ci),
            _fmt(cell.cost_mean),
            _fmt(cell.cost_ci),
            _fmt(cell.latency_mean),
            _fmt(cell.latency_ci),
        ]
    )
