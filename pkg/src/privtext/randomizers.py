"""Word-level privacy mechanisms over the embedding metric space.

Five variants share the same skeleton (perturb the word vector, project the
noisy point back to the vocabulary):

- baseline:        radial Laplacian noise with density exp(-eps * ||z||)
- density:         noise modulated by a KDE prior over the embedding,
                   sampled with a random-walk Metropolis-Hastings chain
- smooth:          baseline with the noise scale calibrated per word to the
                   beta-smooth sensitivity bound (normalized so beta = 0
                   reproduces the baseline exactly)
- trunc_distance:  outputs restricted to the radius-tau admissible ball,
                   either by projecting into it or by spending the residual
                   tail mass on a uniform draw outside it
- trunc_knn:       outputs restricted to the word's k nearest neighbors

Every operation takes an explicit RngStream and is deterministic given it.
No formal privacy guarantee is claimed for the smooth or truncated
variants; the analysis module measures what they actually provide.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .embeddings import EmbeddingStore
from .errors import ConfigError, InvalidWordIdError
from .samplers import (
    MultivariateLaplaceParam,
    RngStream,
    sample_mv_laplace,
    sample_mv_laplace_truncated,
    truncation_mass,
)
from .sensitivity import SensitivityProfile, build_profile

logger = logging.getLogger(__name__)

VARIANTS = ("baseline", "density", "smooth", "trunc_distance", "trunc_knn")
TRUNC_STRATEGIES = ("project", "residual")

MATRIX_TSV_MAGIC = "#privtext-matrix-v1"


@dataclass(frozen=True)
class MHParams:
    """Metropolis-Hastings chain knobs for the density variant.

    proposal_step=None resolves to the store's mean nearest-neighbor
    distance, a step comparable to the local geometry.
    """

    burn_in: int = 1000
    thin: int = 10
    proposal_step: float | None = None

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1:
            raise ConfigError("burn_in must be >= 0 and thin >= 1")
        if self.proposal_step is not None and not self.proposal_step > 0:
            raise ConfigError("proposal_step must be > 0")


@dataclass(frozen=True)
class MechanismConfig:
    """Tagged mechanism descriptor. Only the active variant's parameters
    may be set; anything else is rejected."""

    variant: str
    epsilon: float
    sigma: float | None = None          # density: KDE bandwidth
    beta: float | None = None           # smooth
    tau: float | None = None            # trunc_distance
    k: int | None = None                # trunc_knn
    trunc_strategy: str | None = None   # trunc_distance
    mh: MHParams | None = None          # density

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        allowed = {
            "baseline": (),
            "density": ("sigma", "mh"),
            "smooth": ("beta",),
            "trunc_distance": ("tau", "trunc_strategy"),
            "trunc_knn": ("k",),
        }[self.variant]
        for name in ("sigma", "beta", "tau", "k", "trunc_strategy", "mh"):
            if getattr(self, name) is not None and name not in allowed:
                raise ConfigError(f"{name} is not a parameter of variant {self.variant!r}")
        if self.variant == "density":
            if self.sigma is not None and not self.sigma > 0:
                raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        elif self.variant == "smooth":
            if self.beta is None or self.beta < 0:
                raise ConfigError("smooth variant requires beta >= 0")
        elif self.variant == "trunc_distance":
            if self.tau is None or not self.tau > 0:
                raise ConfigError("trunc_distance variant requires tau > 0")
            strategy = self.trunc_strategy or "project"
            if strategy not in TRUNC_STRATEGIES:
                raise ConfigError(f"unknown truncation strategy {strategy!r}")
            object.__setattr__(self, "trunc_strategy", strategy)
        elif self.variant == "trunc_knn":
            if self.k is None or self.k < 1:
                raise ConfigError("trunc_knn variant requires k >= 1")

    def to_dict(self) -> dict:
        out = {"variant": self.variant, "epsilon": self.epsilon}
        for name in ("sigma", "beta", "tau", "k", "trunc_strategy"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.mh is not None:
            out["mh"] = {
                "burn_in": self.mh.burn_in,
                "thin": self.mh.thin,
                "proposal_step": self.mh.proposal_step,
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MechanismConfig":
        data = dict(data)
        mh = data.pop("mh", None)
        if mh is not None:
            mh = MHParams(**mh)
        try:
            return cls(mh=mh, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic |W| x |W| estimate of Pr[M(w) = u]."""

    probs: np.ndarray
    sample_count: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        assert p.ndim == 2 and p.shape[0] == p.shape[1]
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
        object.__setattr__(self, "probs", p)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def row(self, w: int) -> np.ndarray:
        if not 0 <= w < self.size:
            raise InvalidWordIdError(f"word id {w} outside [0, {self.size})")
        return self.probs[w]


# ---------------------------------------------------------------------------
# baseline mechanism

def perturb_with_noise(store: EmbeddingStore, w: int, z) -> int:
    """Project phi(w) + z back to the vocabulary (deterministic half of
    every additive mechanism; also the zero-noise test hook)."""
    return store.nearest_word(store.vector(w) + np.asarray(z, dtype=np.float64))


def perturb_baseline(store: EmbeddingStore, rng: RngStream, w: int, epsilon: float) -> int:
    z = sample_mv_laplace(rng, MultivariateLaplaceParam(store.dim, epsilon))
    return perturb_with_noise(store, w, z)


def _baseline_batch(store, rng, w, epsilon, n) -> np.ndarray:
    z = sample_mv_laplace(rng, MultivariateLaplaceParam(store.dim, epsilon), size=n)
    return store.nearest_words(store.vector(w)[None, :] + z)


# ---------------------------------------------------------------------------
# density-modulated mechanism

def kde_log_prior(store: EmbeddingStore, z, sigma: float) -> float:
    """Log of the unnormalized RBF kernel density over the vocabulary."""
    return float(_kde_log_prior_batch(store, np.asarray(z, dtype=np.float64)[None, :], sigma)[0])


def _kde_log_prior_batch(store, points, sigma) -> np.ndarray:
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    # squared distances (n, |W|) without materializing the difference tensor
    p2 = np.einsum("ij,ij->i", points, points)
    v2 = np.einsum("ij,ij->i", store.vectors, store.vectors)
    sq = p2[:, None] - 2.0 * points @ store.vectors.T + v2[None, :]
    np.maximum(sq, 0.0, out=sq)
    return logsumexp(-sq / (2.0 * sigma**2), axis=1)


def density_log_target(store: EmbeddingStore, w: int, epsilon: float, sigma: float, z) -> float:
    """Unnormalized log density of the modulated mechanism, centered at w."""
    z = np.asarray(z, dtype=np.float64)
    return kde_log_prior(store, z, sigma) - epsilon * float(
        np.linalg.norm(z - store.vector(w))
    )


def mh_log_acceptance(
    store: EmbeddingStore, w: int, epsilon: float, sigma: float, current, proposal
) -> float:
    """log min(1, p(proposal)/p(current)) under symmetric proposals."""
    delta = density_log_target(store, w, epsilon, sigma, proposal) - density_log_target(
        store, w, epsilon, sigma, current
    )
    return min(0.0, delta)


def resolve_mh(store: EmbeddingStore, mh: MHParams | None) -> MHParams:
    mh = mh or MHParams()
    if mh.proposal_step is None:
        mh = replace(mh, proposal_step=store.mean_nn_distance())
    return mh


def resolve_sigma(store: EmbeddingStore, sigma: float | None) -> float:
    return sigma if sigma is not None else store.median_nn_distance()


def _mh_points_batch(store, rng, w, epsilon, sigma, mh, n) -> np.ndarray:
    """Run n independent MH chains in lockstep; return one retained point each.

    Chains start at phi(w); burn_in steps are discarded, then thin more
    steps are taken and the final state is the retained draw.
    """
    sigma = resolve_sigma(store, sigma)
    mh = resolve_mh(store, mh)
    center = store.vector(w)
    x = np.tile(center, (n, 1))
    logp = _kde_log_prior_batch(store, x, sigma) - epsilon * np.zeros(n)
    gen = rng.gen
    for _ in range(mh.burn_in + mh.thin):
        prop = x + mh.proposal_step * gen.standard_normal(x.shape)
        logp_prop = _kde_log_prior_batch(store, prop, sigma) - epsilon * np.linalg.norm(
            prop - center, axis=1
        )
        accept = np.log(gen.uniform(size=n)) < logp_prop - logp
        x[accept] = prop[accept]
        logp[accept] = logp_prop[accept]
    assert np.all(np.isfinite(x)), "MH chain reached a non-finite state"
    return x


def perturb_density(
    store: EmbeddingStore,
    rng: RngStream,
    w: int,
    epsilon: float,
    sigma: float | None = None,
    mh_params: MHParams | None = None,
) -> int:
    w = store.check_id(w)
    point = _mh_points_batch(store, rng, w, epsilon, sigma, mh_params, 1)[0]
    return store.nearest_word(point)


# ---------------------------------------------------------------------------
# smooth-sensitivity calibration

def _smooth_epsilon(epsilon: float, profile: SensitivityProfile, w: int) -> float:
    smooth = profile.per_word_smooth[w]
    if smooth <= 0:
        raise ConfigError(f"smooth sensitivity is 0 at word {w}; cannot calibrate")
    return epsilon * profile.global_sensitivity / smooth


def perturb_smooth(
    store: EmbeddingStore, rng: RngStream, w: int, epsilon: float, profile: SensitivityProfile
) -> int:
    """Baseline noise with per-word scale smooth(w)/global: less noise in
    dense regions, baseline noise at the worst-case word."""
    if len(profile.per_word_smooth) != len(store):
        raise ConfigError("sensitivity profile does not match the store")
    w = store.check_id(w)
    return perturb_baseline(store, rng, w, _smooth_epsilon(epsilon, profile, w))


def _smooth_batch(store, rng, w, epsilon, profile, n) -> np.ndarray:
    if len(profile.per_word_smooth) != len(store):
        raise ConfigError("sensitivity profile does not match the store")
    return _baseline_batch(store, rng, w, _smooth_epsilon(epsilon, profile, w), n)


# ---------------------------------------------------------------------------
# truncated mechanisms

def _admissible_ball(store, w, tau) -> np.ndarray:
    dists = np.linalg.norm(store.vectors - store.vectors[w], axis=1)
    ids = np.nonzero(dists <= tau)[0]
    if w not in ids:
        ids = np.sort(np.append(ids, w))
    return ids


def _trunc_distance_batch(store, rng, w, epsilon, tau, strategy, n) -> np.ndarray:
    w = store.check_id(w)
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    param = MultivariateLaplaceParam(store.dim, epsilon)
    inside_ids = _admissible_ball(store, w, tau)
    outside_ids = np.setdiff1d(np.arange(len(store)), inside_ids)

    def project(count):
        z = sample_mv_laplace_truncated(rng, param, tau, size=count)
        return store.nearest_words(store.vector(w)[None, :] + z, candidate_ids=inside_ids)

    if strategy == "project":
        return project(n)
    if strategy != "residual":
        raise ConfigError(f"unknown truncation strategy {strategy!r}")
    if outside_ids.size == 0:
        logger.warning(
            "residual truncation at word %d has an empty out-region; falling back to project",
            w,
        )
        return project(n)
    p_in = truncation_mass(param, tau)
    inside = rng.gen.uniform(size=n) < p_in
    out = np.empty(n, dtype=np.int64)
    n_in = int(inside.sum())
    if n_in:
        out[inside] = project(n_in)
    n_out = n - n_in
    if n_out:
        out[~inside] = rng.gen.choice(outside_ids, size=n_out)
    return out


def perturb_trunc_distance(
    store: EmbeddingStore,
    rng: RngStream,
    w: int,
    epsilon: float,
    tau: float,
    strategy: str = "project",
) -> int:
    return int(_trunc_distance_batch(store, rng, w, epsilon, tau, strategy, 1)[0])


def _trunc_knn_batch(store, rng, w, epsilon, k, n) -> np.ndarray:
    w = store.check_id(w)
    if not 1 <= k <= len(store) - 1:
        raise ConfigError(f"k={k} out of range [1, {len(store) - 1}]")
    cands = np.sort(np.append(store.k_nearest(w, k).ids(), w))
    z = sample_mv_laplace(rng, MultivariateLaplaceParam(store.dim, epsilon), size=n)
    return store.nearest_words(store.vector(w)[None, :] + z, candidate_ids=cands)


def perturb_trunc_knn(store: EmbeddingStore, rng: RngStream, w: int, epsilon: float, k: int) -> int:
    return int(_trunc_knn_batch(store, rng, w, epsilon, k, 1)[0])


# ---------------------------------------------------------------------------
# dispatch, sentences, and the precomputed transition matrix

class Mechanism:
    """A configured mechanism bound to a store, exposing single-draw and
    vectorized batch perturbation with the same output distribution."""

    def __init__(
        self,
        store: EmbeddingStore,
        config: MechanismConfig,
        profile: SensitivityProfile | None = None,
    ):
        self.store = store
        self.config = config
        if config.variant == "smooth" and profile is None:
            profile = build_profile(store, config.beta)
        self.profile = profile

    def perturb(self, rng: RngStream, w: int) -> int:
        return int(self.perturb_batch(rng, w, 1)[0])

    def perturb_batch(self, rng: RngStream, w: int, n: int) -> np.ndarray:
        store, cfg = self.store, self.config
        w = store.check_id(w)
        if cfg.variant == "baseline":
            return _baseline_batch(store, rng, w, cfg.epsilon, n)
        if cfg.variant == "density":
            points = _mh_points_batch(store, rng, w, cfg.epsilon, cfg.sigma, cfg.mh, n)
            return store.nearest_words(points)
        if cfg.variant == "smooth":
            return _smooth_batch(store, rng, w, cfg.epsilon, self.profile, n)
        if cfg.variant == "trunc_distance":
            return _trunc_distance_batch(
                store, rng, w, cfg.epsilon, cfg.tau, cfg.trunc_strategy, n
            )
        if cfg.variant == "trunc_knn":
            return _trunc_knn_batch(store, rng, w, cfg.epsilon, cfg.k, n)
        raise ConfigError(f"unknown variant {cfg.variant!r}")


def perturb_sentence(
    store: EmbeddingStore,
    rng: RngStream,
    words,
    config: MechanismConfig,
    profile: SensitivityProfile | None = None,
) -> list[int]:
    """Apply the configured mechanism independently at every position.

    Any invalid id aborts the whole sentence before any output is produced.
    """
    ids = [store.check_id(w) for w in words]
    mech = Mechanism(store, config, profile)
    return [mech.perturb(rng, w) for w in ids]


def build_transition_matrix(
    store: EmbeddingStore,
    rng: RngStream,
    config: MechanismConfig,
    samples_per_word: int,
    profile: SensitivityProfile | None = None,
) -> TransitionMatrix:
    """Monte Carlo estimate of the full output distribution, one row per
    input word, each row from its own forked stream."""
    if samples_per_word < 1:
        raise ConfigError(f"samples_per_word must be >= 1, got {samples_per_word}")
    mech = Mechanism(store, config, profile)
    n_words = len(store)
    probs = np.empty((n_words, n_words), dtype=np.float64)
    for w in range(n_words):
        outs = mech.perturb_batch(rng.fork(w), w, samples_per_word)
        probs[w] = np.bincount(outs, minlength=n_words) / samples_per_word
    return TransitionMatrix(probs=probs, sample_count=samples_per_word)


def sample_from_matrix(rng: RngStream, matrix: TransitionMatrix, w: int) -> int:
    return int(rng.gen.choice(matrix.size, p=matrix.row(w)))


def matrix_to_tsv(store: EmbeddingStore, matrix: TransitionMatrix) -> str:
    """TSV serialization: input word, output word, probability; zero
    entries omitted."""
    lines = [MATRIX_TSV_MAGIC, f"#samples {matrix.sample_count}"]
    for w in range(matrix.size):
        row = matrix.probs[w]
        for u in np.nonzero(row)[0]:
            lines.append(f"{store.words[w]}\t{store.words[u]}\t{row[u]:.12g}")
    return "\n".join(lines) + "\n"


def matrix_from_tsv(store: EmbeddingStore, text: str) -> TransitionMatrix:
    lines = text.splitlines()
    if not lines or lines[0] != MATRIX_TSV_MAGIC:
        raise ConfigError("not a privtext transition-matrix TSV")
    sample_count = 0
    probs = np.zeros((len(store), len(store)))
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("#samples"):
            sample_count = int(line.split()[1])
            continue
        if line.startswith("#"):
            continue
        w_str, u_str, p_str = line.split("\t")
        probs[store.word_id(w_str), store.word_id(u_str)] = float(p_str)
    return TransitionMatrix(probs=probs, sample_count=sample_count)
