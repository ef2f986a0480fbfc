from __future__ import annotations

from scipy.stats import beta


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for ``successes / trials``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    alpha = 1.0 - level
    lo = 0.0 if successes == 0 else float(beta.ppf(alpha / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return lo, hi


def halfwidth(interval: tuple[float, float]) -> float:
    return (interval[1] - interval[0]) / 2.0
