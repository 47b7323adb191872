"""Mission-level outcome metrics and cross-replication statistics.

One :class:`MissionMetrics` per replication, Student-t confidence intervals
across replications, and attack-versus-baseline comparison with a
configurable significance threshold on the reduction in completed plans.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

from scipy import stats as _scipy_stats

SIGNIFICANT_REDUCTION = 0.10

CSV_HEADER = (
    "replication,plans_completed,plans_corrupted_undetected,corrupted_fraction,"
    "mean_completion_delay_s,blocked_s,attack_duration_s,confidentiality_exposure_s"
)


class EmptyInput(Exception):
    pass


class BaselineZero(Exception):
    pass


@dataclass(frozen=True)
class MissionMetrics:
    plans_completed: int
    plans_corrupted_undetected: int
    corrupted_fraction: float
    mean_completion_delay_s: float
    blocked_s: float
    attack_duration_s: float
    confidentiality_exposure_s: float


METRIC_NAMES = [f.name for f in fields(MissionMetrics)]


def collect(mission_result, attack_timeline=None) -> MissionMetrics:
    """Reduce final work-item records and the attack timeline to metrics.

    ``mean_completion_delay_s`` is the mean creation-to-completion time of
    finished items; the delay attributable to an attack is the delta of this
    value against the baseline run (see :func:`compare`).
    """
    items = mission_result.items
    completed = [i for i in items if i.outcome == "completed_clean"]
    corrupted = [i for i in items if i.outcome == "completed_corrupted"]
    finished = completed + corrupted
    if finished:
        mean_completion = sum(i.completed_at - i.created_at for i in finished) / len(finished)
    else:
        mean_completion = 0.0

    attack_s = 0.0
    exposure_s = 0.0
    if attack_timeline is not None:
        from .threat import attack_duration, MissingOnset

        try:
            duration = attack_duration(attack_timeline)
            attack_s = duration.seconds
        except MissingOnset:
            attack_s = 0.0
        exposure_s = _confidentiality_exposure(attack_timeline)

    n_done = len(completed) + len(corrupted)
    return MissionMetrics(
        plans_completed=len(completed),
        plans_corrupted_undetected=len(corrupted),
        corrupted_fraction=len(corrupted) / max(1, n_done),
        mean_completion_delay_s=mean_completion,
        blocked_s=sum(mission_result.blocked_time.values()),
        attack_duration_s=attack_s,
        confidentiality_exposure_s=exposure_s,
    )


def _confidentiality_exposure(timeline) -> float:
    onset = None
    exposure = 0.0
    for entry in timeline.entries:
        if entry.kind == "effect_onset" and entry.detail.startswith("confidentiality"):
            onset = entry.time
        elif entry.kind == "effect_end" and onset is not None:
            exposure += entry.time - onset
            onset = None
    if onset is not None:
        exposure += timeline.horizon - onset
    return exposure


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    stdev: float
    ci_halfwidth: float | None
    min: float
    max: float
    n: int


@dataclass
class ReplicationSummary:
    n: int
    per_metric: dict[str, MetricSummary]

    def __getitem__(self, name: str) -> MetricSummary:
        return self.per_metric[name]


def aggregate(metrics: Sequence[MissionMetrics]) -> ReplicationSummary:
    """Mean, sample stdev, 95% t-interval half-width, min, max per metric."""
    if not metrics:
        raise EmptyInput("no replications to aggregate")
    n = len(metrics)
    per_metric: dict[str, MetricSummary] = {}
    for name in METRIC_NAMES:
        values = [float(getattr(m, name)) for m in metrics]
        # fsum keeps the result independent of replication order.
        mean = math.fsum(values) / n
        if n >= 2:
            var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
            stdev = math.sqrt(var)
            t = float(_scipy_stats.t.ppf(0.975, n - 1))
            half = t * stdev / math.sqrt(n)
        else:
            stdev = 0.0
            half = None
        per_metric[name] = MetricSummary(mean, stdev, half, min(values), max(values), n)
    return ReplicationSummary(n, per_metric)


@dataclass
class ComparisonReport:
    deltas: dict[str, float]
    percent_reduction: float
    significant: bool
    threshold: float


def compare(
    attack: ReplicationSummary,
    baseline: ReplicationSummary,
    threshold: float = SIGNIFICANT_REDUCTION,
) -> ComparisonReport:
    """Attack-minus-baseline deltas and the completed-plans reduction.

    The significance flag trips when mean plans_completed drops by at least
    ``threshold`` (default 10%) relative to baseline.
    """
    base_mean = baseline["plans_completed"].mean
    if base_mean == 0:
        raise BaselineZero("baseline completed no plans; reduction undefined")
    deltas = {
        name: attack[name].mean - baseline[name].mean for name in METRIC_NAMES
    }
    reduction = (base_mean - attack["plans_completed"].mean) / base_mean
    return ComparisonReport(
        deltas=deltas,
        percent_reduction=reduction,
        significant=reduction >= threshold,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Serialization


def metrics_csv(metrics: Iterable[MissionMetrics]) -> str:
    lines = [CSV_HEADER]
    for k, m in enumerate(metrics):
        lines.append(
            f"{k},{m.plans_completed},{m.plans_corrupted_undetected},"
            f"{m.corrupted_fraction!r},{m.mean_completion_delay_s!r},"
            f"{m.blocked_s!r},{m.attack_duration_s!r},{m.confidentiality_exposure_s!r}"
        )
    return "\n".join(lines) + "\n"


def parse_metrics_csv(text: str) -> list[MissionMetrics]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"metrics CSV header must be {CSV_HEADER!r}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        out.append(
            MissionMetrics(
                plans_completed=int(parts[1]),
                plans_corrupted_undetected=int(parts[2]),
                corrupted_fraction=float(parts[3]),
                mean_completion_delay_s=float(parts[4]),
                blocked_s=float(parts[5]),
                attack_duration_s=float(parts[6]),
                confidentiality_exposure_s=float(parts[7]),
            )
        )
    return out


def summary_text(summary: ReplicationSummary, title: str = "summary") -> str:
    buf = io.StringIO()
    buf.write(f"{title} (n={summary.n})\n")
    for name in METRIC_NAMES:
        s = summary[name]
        ci = f" ci95=+/-{s.ci_halfwidth:.4g}" if s.ci_halfwidth is not None else ""
        buf.write(
            f"  {name}: mean={s.mean:.6g} stdev={s.stdev:.4g}{ci}"
            f" min={s.min:.6g} max={s.max:.6g}\n"
        )
    return buf.getvalue()


def comparison_text(report: ComparisonReport) -> str:
    buf = io.StringIO()
    buf.write("attack vs baseline\n")
    for name in METRIC_NAMES:
        buf.write(f"  delta {name}: {report.deltas[name]:+.6g}\n")
    buf.write(
        f"  percent_reduction_plans_completed: {report.percent_reduction * 100:.2f}%\n"
    )
    flag = "yes" if report.significant else "no"
    buf.write(f"  significant (>= {report.threshold * 100:.0f}% reduction): {flag}\n")
    return buf.getvalue()
