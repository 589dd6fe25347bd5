"""End-to-end localize -> amplify -> curate protocol simulation.

n simulated users each release m words through a configured randomizer;
the batch then passes through an ordered amplifier chain and finally the
curator computes a word-frequency histogram with utility accounting
against the pre-noise histogram of the same sampled corpus.

Every phase draws from streams forked off one root seed, so a (config,
seed) pair reproduces byte-identical reports regardless of how the
per-user work would be scheduled.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .amplification import AmplifierConfig, Message, amplified_epsilon, apply_amplifier
from .embeddings import EmbeddingStore
from .errors import ConfigError
from .randomizers import Mechanism, MechanismConfig
from .samplers import RngStream
from .sensitivity import SensitivityProfile

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CorpusSpec:
    """Where user words come from: a synthetic Zipf(s) draw over the
    vocabulary, or explicit per-user word lists."""

    kind: str = "zipf"  # zipf | words
    s: float = 1.1
    words_per_user: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        if self.kind == "zipf":
            if not self.s > 0:
                raise ConfigError(f"zipf exponent must be > 0, got {self.s}")
        elif self.kind == "words":
            if not self.words_per_user:
                raise ConfigError("words corpus requires words_per_user")
        else:
            raise ConfigError(f"unknown corpus kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "zipf":
            return {"kind": "zipf", "s": self.s}
        return {"kind": "words", "words_per_user": [list(u) for u in self.words_per_user]}

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusSpec":
        if data.get("kind") == "words":
            return cls(kind="words", words_per_user=tuple(tuple(u) for u in data["words_per_user"]))
        return cls(kind="zipf", s=float(data.get("s", 1.1)))


@dataclass(frozen=True)
class ProtocolConfig:
    n_users: int
    m_per_user: int
    mechanism: MechanismConfig
    amplifiers: tuple[AmplifierConfig, ...] = ()
    seed: int = 0
    corpus: CorpusSpec = field(default_factory=CorpusSpec)

    def __post_init__(self):
        if self.n_users < 1 or self.m_per_user < 1:
            raise ConfigError("n_users and m_per_user must be >= 1")
        object.__setattr__(self, "amplifiers", tuple(self.amplifiers))

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "m_per_user": self.m_per_user,
            "mechanism": self.mechanism.to_dict(),
            "amplifiers": [a.to_dict() for a in self.amplifiers],
            "seed": self.seed,
            "corpus": self.corpus.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolConfig":
        return cls(
            n_users=int(data["n_users"]),
            m_per_user=int(data["m_per_user"]),
            mechanism=MechanismConfig.from_dict(data["mechanism"]),
            amplifiers=tuple(AmplifierConfig.from_dict(a) for a in data.get("amplifiers", [])),
            seed=int(data.get("seed", 0)),
            corpus=CorpusSpec.from_dict(data.get("corpus", {"kind": "zipf"})),
        )


@dataclass(frozen=True)
class CuratorReport:
    histogram: dict[int, int]
    true_histogram: dict[int, int]
    utility_l1: float
    utility_tv: float
    metadata: dict

    def to_json(self, store: EmbeddingStore) -> str:
        """Deterministic JSON rendering with word strings as keys."""
        payload = {
            "schema_version": SCHEMA_VERSION,
            "histogram": {store.words[w]: c for w, c in sorted(self.histogram.items())},
            "true_histogram": {store.words[w]: c for w, c in sorted(self.true_histogram.items())},
            "utility_l1": self.utility_l1,
            "utility_tv": self.utility_tv,
            "metadata": self.metadata,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def sample_corpus(store: EmbeddingStore, rng: RngStream, config: ProtocolConfig) -> np.ndarray:
    """(n_users, m_per_user) array of input word ids."""
    n, m = config.n_users, config.m_per_user
    spec = config.corpus
    if spec.kind == "zipf":
        probs = np.arange(1, len(store) + 1, dtype=np.float64) ** (-spec.s)
        probs /= probs.sum()
        return rng.gen.choice(len(store), size=(n, m), p=probs)
    rows = spec.words_per_user
    if len(rows) != n or any(len(r) != m for r in rows):
        raise ConfigError("words_per_user shape does not match (n_users, m_per_user)")
    return np.array([[store.word_id(w) for w in row] for row in rows], dtype=np.int64)


def run_local_phase(
    store: EmbeddingStore,
    rng: RngStream,
    config: ProtocolConfig,
    inputs: np.ndarray | None = None,
    profile: SensitivityProfile | None = None,
) -> list[Message]:
    """Perturb every user's words through the configured mechanism, one
    forked stream per user."""
    if inputs is None:
        inputs = sample_corpus(store, rng.fork_named("corpus"), config)
    mech = Mechanism(store, config.mechanism, profile)
    messages = []
    for i in range(config.n_users):
        user_rng = rng.fork_named("user").fork(i)
        for j in range(config.m_per_user):
            out = mech.perturb(user_rng, int(inputs[i, j]))
            messages.append(Message(user_id=i, slot=j, payload=out))
    return messages


def run_amplifiers(
    rng: RngStream, messages: list[Message], amplifiers: tuple[AmplifierConfig, ...]
) -> list[Message]:
    """Apply the amplifier chain left to right, one forked stream per stage."""
    for idx, amp in enumerate(amplifiers):
        messages = apply_amplifier(rng.fork(idx), messages, amp)
    return messages


def run_curator(messages: list[Message]) -> dict[int, int]:
    """Exact payload frequency histogram."""
    hist = dict(Counter(m.payload for m in messages))
    assert sum(hist.values()) == len(messages)
    return hist


def _l1(hist: dict[int, int], true_hist: dict[int, int]) -> float:
    keys = set(hist) | set(true_hist)
    return float(sum(abs(hist.get(k, 0) - true_hist.get(k, 0)) for k in keys))


def run_protocol(
    store: EmbeddingStore, config: ProtocolConfig, profile: SensitivityProfile | None = None
) -> CuratorReport:
    """Compose the three phases and account for utility loss.

    utility_l1 compares the amplified histogram against the pre-noise
    histogram of the same sampled corpus, isolating mechanism error from
    corpus sampling error.
    """
    root = RngStream(config.seed)
    inputs = sample_corpus(store, root.fork_named("corpus"), config)
    messages = run_local_phase(store, root.fork_named("local"), config, inputs, profile)
    amplified = run_amplifiers(root.fork_named("amplify"), messages, config.amplifiers)

    hist = run_curator(amplified)
    true_hist = dict(Counter(int(w) for w in inputs.ravel()))
    l1 = _l1(hist, true_hist)
    true_total = sum(true_hist.values())
    tv = l1 / (2.0 * true_total) if true_total else 0.0

    metadata: dict = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "n_messages_local": len(messages),
        "n_messages_amplified": len(amplified),
    }
    for amp in config.amplifiers:
        if amp.kind == "subsample":
            metadata["amplified_epsilon"] = amplified_epsilon(config.mechanism.epsilon, amp.q)
    return CuratorReport(
        histogram=hist,
        true_histogram=true_hist,
        utility_l1=l1,
        utility_tv=tv,
        metadata=metadata,
    )
