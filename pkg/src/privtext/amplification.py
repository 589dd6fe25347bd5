"""Post-randomization privacy amplifiers: shuffle, sub-sample, k-threshold,
plus the randomized-response primitive and the sub-sampling epsilon
accounting.

Amplifiers never look at payload semantics; they only rearrange or drop
messages. The shuffler is simulated in-process (no MPC/mixnet transport).
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError
from .samplers import RngStream, sample_permutation


@dataclass(frozen=True)
class Message:
    """One randomized submission. user_id is None once provenance has been
    erased by the shuffler."""

    user_id: int | None
    slot: int
    payload: int


@dataclass(frozen=True)
class AmplifierConfig:
    kind: str               # shuffle | subsample | kthreshold
    q: float | None = None  # subsample fraction
    k: int | None = None    # kthreshold multiplicity

    def __post_init__(self):
        if self.kind == "shuffle":
            if self.q is not None or self.k is not None:
                raise ConfigError("shuffle takes no parameters")
        elif self.kind == "subsample":
            if self.q is None or not 0 < self.q <= 1:
                raise ConfigError(f"subsample requires q in (0, 1], got {self.q}")
            if self.k is not None:
                raise ConfigError("k is not a subsample parameter")
        elif self.kind == "kthreshold":
            if self.k is None or self.k < 1:
                raise ConfigError(f"kthreshold requires k >= 1, got {self.k}")
            if self.q is not None:
                raise ConfigError("q is not a kthreshold parameter")
        else:
            raise ConfigError(f"unknown amplifier kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.q is not None:
            out["q"] = self.q
        if self.k is not None:
            out["k"] = self.k
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AmplifierConfig":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def shuffle_batch(rng: RngStream, batch: list[Message]) -> list[Message]:
    """Uniformly permute payloads and erase provenance.

    The payload multiset is preserved exactly; every output carries
    user_id=None and its new position as the slot.
    """
    perm = sample_permutation(rng, len(batch))
    out = [Message(user_id=None, slot=i, payload=batch[j].payload) for i, j in enumerate(perm)]
    assert Counter(m.payload for m in out) == Counter(m.payload for m in batch)
    return out


def subsample_batch(rng: RngStream, batch: list[Message], q: float) -> list[Message]:
    """Keep each message independently with probability q (Poisson
    sub-sampling)."""
    if not 0 < q <= 1:
        raise ConfigError(f"q must be in (0, 1], got {q}")
    keep = rng.gen.uniform(size=len(batch)) < q
    return [m for m, kept in zip(batch, keep) if kept]


def kthreshold_batch(batch: list[Message], k: int) -> list[Message]:
    """Drop messages whose exact payload occurs fewer than k times in the
    batch; survivors keep their order."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    counts = Counter(m.payload for m in batch)
    out = [m for m in batch if counts[m.payload] >= k]
    assert all(counts[m.payload] >= k for m in out)
    return out


def apply_amplifier(rng: RngStream, batch: list[Message], config: AmplifierConfig) -> list[Message]:
    if config.kind == "shuffle":
        return shuffle_batch(rng, batch)
    if config.kind == "subsample":
        return subsample_batch(rng, batch, config.q)
    if config.kind == "kthreshold":
        return kthreshold_batch(batch, config.k)
    raise ConfigError(f"unknown amplifier kind {config.kind!r}")


def randomized_response(rng: RngStream, b: int, epsilon: float) -> int:
    """Warner randomized response: report b with probability
    e^eps / (1 + e^eps), else the flipped bit."""
    if b not in (0, 1):
        raise ConfigError(f"b must be 0 or 1, got {b}")
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    p = math.exp(epsilon) / (1.0 + math.exp(epsilon))
    return b if rng.gen.uniform() < p else 1 - b


def amplified_epsilon(epsilon: float, q: float) -> dict:
    """Sub-sampling amplification accounting: eps' ~= q * eps.

    This is the first-order approximation, reported as such; no tighter
    bound is computed.
    """
    if not 0 < q <= 1:
        raise ConfigError(f"q must be in (0, 1], got {q}")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    return {"epsilon": epsilon, "q": q, "epsilon_amplified": q * epsilon, "approximation": True}


# ---------------------------------------------------------------------------
# JSON-lines batch files

def messages_to_jsonl(store, batch: list[Message]) -> str:
    lines = []
    for m in batch:
        lines.append(
            json.dumps(
                {"user": m.user_id, "slot": m.slot, "word": store.words[m.payload]},
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def messages_from_jsonl(store, text: str) -> list[Message]:
    batch = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        batch.append(
            Message(
                user_id=rec["user"],
                slot=int(rec["slot"]),
                payload=store.word_id(rec["word"]),
            )
        )
    return batch
