"""Small statistical helpers shared by the estimators and the audits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats


def wilson_ci(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=level, method="wilson"
    )
    return (float(ci.low), float(ci.high))


@dataclass
class ExperimentReport:
    """Estimator output with provenance."""

    estimate: float
    replicates: int
    ci_low: float
    ci_high: float
    seed: int
    config_hash: str
    extra: dict = field(default_factory=dict)

    def as_row(self):
        row = {
            "estimate": self.estimate,
            "replicates": self.replicates,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }
        row.update(self.extra)
        return row


def proportion_report(successes, trials, seed, config_hash, level=0.95, **extra):
    lo, hi = wilson_ci(successes, trials, level)
    est = successes / trials if trials else float("nan")
    return ExperimentReport(est, int(trials), lo, hi, int(seed), config_hash, dict(extra))


def poisson_mean_z(counts, mean):
    """z-score of the sample mean of Poisson counts against ``mean``."""
    counts = np.asarray(counts, dtype=float)
    se = np.sqrt(mean / counts.size)
    return (counts.mean() - mean) / se
