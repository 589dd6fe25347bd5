"""Privacy/utility measurement: plausible-deniability statistics, empirical
metric-DP verification on a transition matrix, Bayesian posteriors over the
input word, and the distance-minimizing inference attack.

These tools report what a mechanism actually delivers; they never assume a
formal guarantee holds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingStore
from .errors import ConfigError, UnreachableObservationError
from .randomizers import TransitionMatrix
from .samplers import RngStream


@dataclass(frozen=True)
class DeniabilityStats:
    """Monte Carlo deniability surface for one word: the probability the
    word survives unchanged, the observed substitution support, and the
    empirical output entropy in nats."""

    word: int
    n_trials: int
    p_unchanged: float
    support_size: int
    entropy: float

    def to_dict(self) -> dict:
        return {
            "word": self.word,
            "n_trials": self.n_trials,
            "p_unchanged": self.p_unchanged,
            "support_size": self.support_size,
            "entropy": self.entropy,
        }


@dataclass(frozen=True)
class Posterior:
    observed: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        assert np.all(p >= 0) and abs(p.sum() - 1.0) <= 1e-9
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class MetricDpReport:
    """Worst observed log-ratio excess over the metric-DP bound.

    max_violation uses the point estimates; slack_at_worst is the 3-sigma
    binomial slack for that triple, and satisfied means no triple exceeds
    the bound by more than its slack.
    """

    epsilon: float
    sample_count: int
    max_violation: float
    worst_triple: tuple[int, int, int]
    slack_at_worst: float
    max_violation_adjusted: float
    satisfied: bool

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "sample_count": self.sample_count,
            "max_violation": self.max_violation,
            "worst_triple": list(self.worst_triple),
            "slack_at_worst": self.slack_at_worst,
            "max_violation_adjusted": self.max_violation_adjusted,
            "satisfied": self.satisfied,
        }


def deniability_stats(
    store: EmbeddingStore, rng: RngStream, mechanism, w: int, n_trials: int
) -> DeniabilityStats:
    """Estimate the deniability surface of `mechanism` at word w.

    mechanism must expose perturb_batch(rng, w, n) -> word-id array (the
    Mechanism class does; test stubs can too).
    """
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    w = store.check_id(w)
    outs = np.asarray(mechanism.perturb_batch(rng, w, n_trials))
    counts = np.bincount(outs, minlength=len(store))
    freqs = counts / n_trials
    nz = freqs[freqs > 0]
    return DeniabilityStats(
        word=w,
        n_trials=n_trials,
        p_unchanged=float(freqs[w]),
        support_size=int(nz.size),
        entropy=float(-(nz * np.log(nz)).sum()),
    )


def verify_metric_dp(
    matrix: TransitionMatrix, store: EmbeddingStore, epsilon: float, alpha: float = 1e-3
) -> MetricDpReport:
    """Check ln P[w1 -> y] - ln P[w2 -> y] <= eps * d(w1, w2) on the
    estimated matrix, for every triple.

    Zero denominator estimates are replaced by the exact one-sided
    Clopper-Pearson upper bound at level alpha (1 - alpha^(1/n)); zero
    numerator estimates give no evidence of violation and are skipped.
    """
    if matrix.size != len(store):
        raise ConfigError("matrix size does not match the store vocabulary")
    n = matrix.sample_count
    if n < 1:
        raise ConfigError("matrix carries no sample count")
    p = matrix.probs
    dist = store.pairwise_distances()
    cp_upper = 1.0 - alpha ** (1.0 / n)

    max_violation = -np.inf
    worst = (0, 0, 0)
    slack_at_worst = 0.0
    max_adjusted = -np.inf
    for y in range(matrix.size):
        col = p[:, y]
        has_num = col > 0
        if not np.any(has_num):
            continue
        log_num = np.where(has_num, np.log(np.where(has_num, col, 1.0)), -np.inf)
        log_den = np.log(np.where(col > 0, col, cp_upper))
        viol = log_num[:, None] - log_den[None, :] - epsilon * dist
        np.fill_diagonal(viol, -np.inf)
        # delta-method standard error of ln p-hat; zero cells already carry
        # a conservative bound, so their slack is zero
        se = np.where(col > 0, np.sqrt((1.0 - col) / (np.maximum(col, 1e-300) * n)), 0.0)
        slack = 3.0 * (se[:, None] + se[None, :])
        adjusted = viol - slack
        idx = np.unravel_index(np.argmax(viol), viol.shape)
        if viol[idx] > max_violation:
            max_violation = float(viol[idx])
            worst = (int(idx[0]), int(idx[1]), y)
            slack_at_worst = float(slack[idx])
        max_adjusted = max(max_adjusted, float(np.max(adjusted)))
    return MetricDpReport(
        epsilon=epsilon,
        sample_count=n,
        max_violation=max_violation,
        worst_triple=worst,
        slack_at_worst=slack_at_worst,
        max_violation_adjusted=max_adjusted,
        satisfied=bool(max_adjusted <= 0.0),
    )


def posterior(prior, matrix: TransitionMatrix, observed: int) -> Posterior:
    """Bayes posterior over input words given the mechanism output."""
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (matrix.size,) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise ConfigError("prior must be a probability vector over the vocabulary")
    if not 0 <= observed < matrix.size:
        raise ConfigError(f"observed id {observed} outside [0, {matrix.size})")
    joint = prior * matrix.probs[:, observed]
    total = joint.sum()
    if total <= 0:
        raise UnreachableObservationError(
            f"observed word {observed} has zero likelihood under every input"
        )
    return Posterior(observed=observed, probs=joint / total)


def optimal_attack(store: EmbeddingStore, post: Posterior) -> int:
    """Adversary guess minimizing the posterior-expected embedding distance
    to the true word; ties break to the lowest id."""
    expected = store.pairwise_distances() @ post.probs
    return int(np.argmin(expected))


def attack_accuracy(
    store: EmbeddingStore,
    rng: RngStream,
    matrix: TransitionMatrix,
    prior,
    n_trials: int,
    mechanism=None,
) -> float:
    """Fraction of trials where the Bayes attack recovers the true word.

    Inputs are drawn from the prior; outputs come from `mechanism` when
    given, otherwise from the transition matrix itself. The attacker always
    uses the matrix for its posterior (it knows the mechanism and prior).
    """
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (matrix.size,) or abs(prior.sum() - 1.0) > 1e-9:
        raise ConfigError("prior must be a probability vector over the vocabulary")

    # precompute the attack decision for every reachable observation
    decisions = np.full(matrix.size, -1, dtype=np.int64)
    for y in range(matrix.size):
        if (prior * matrix.probs[:, y]).sum() > 0:
            decisions[y] = optimal_attack(store, posterior(prior, matrix, y))

    truths = rng.gen.choice(matrix.size, size=n_trials, p=prior)
    observed = np.empty(n_trials, dtype=np.int64)
    if mechanism is None:
        cum = np.cumsum(matrix.probs, axis=1)
        u = rng.gen.uniform(size=n_trials)
        for i in range(n_trials):
            observed[i] = np.searchsorted(cum[truths[i]], u[i], side="right")
        np.clip(observed, 0, matrix.size - 1, out=observed)
    else:
        for w in np.unique(truths):
            mask = truths == w
            observed[mask] = mechanism.perturb_batch(rng.fork(int(w)), int(w), int(mask.sum()))
    hits = decisions[observed] == truths
    return float(np.mean(hits))
