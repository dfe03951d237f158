import os
from dataclasses import dataclass

import numpy as np
import pytest

from etfilter.harness import CASE_BOUNDS, ExperimentConfig, ExperimentSummary, run_monte_carlo
from etfilter.model import LinearGaussianModel


def random_spd(rng: np.random.Generator, dim: int, jitter: float = 0.1) -> np.ndarray:
    base = rng.normal(size=(dim, dim))
    return base @ base.T + jitter * np.eye(dim)


def random_model(rng: np.random.Generator, n: int, p: int) -> LinearGaussianModel:
    """Random stable observable-ish model for equivalence tests."""
    a = rng.normal(size=(n, n))
    a *= 0.9 / max(np.abs(np.linalg.eigvals(a)).max(), 1e-9)
    return LinearGaussianModel(
        A=a,
        C=rng.normal(size=(p, n)),
        Q=random_spd(rng, n),
        R=random_spd(rng, p),
        x0_mean=rng.normal(size=n),
        x0_cov=random_spd(rng, n),
    )


@dataclass(frozen=True)
class BenchmarkResults:
    """All three benchmark cases at a shared trial count."""

    summaries: dict[str, ExperimentSummary]
    trials: int
    rate_band: float


@pytest.fixture(scope="session")
def benchmark_results() -> BenchmarkResults:
    """Full three-case Monte Carlo run shared by the expensive tests.

    ETFILTER_ACCEPTANCE_TRIALS scales the run; below the reference 5000 trials
    the rate comparison band widens from 0.02 to 0.035.
    """
    trials = int(os.environ.get("ETFILTER_ACCEPTANCE_TRIALS", "5000"))
    summaries = {
        case: run_monte_carlo(
            ExperimentConfig(case=case, trials=trials, steps=101, seed=1234, rate_trial_index=40)
        )
        for case in sorted(CASE_BOUNDS)
    }
    return BenchmarkResults(
        summaries=summaries,
        trials=trials,
        rate_band=0.02 if trials >= 5000 else 0.035,
    )
