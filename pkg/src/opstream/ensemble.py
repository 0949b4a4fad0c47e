"""Per-family one-class HMM ensembles.

Each family (including the pooled "benign" family) is represented by several
HMMs, each trained on a disjoint subset of the family's sequences covering at
most 30% of them. A sample's family score is the arithmetic mean of the
members' log-likelihood-per-opcode values, and a family accepts the sample
when that score reaches the family's calibrated threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .codec import DEFAULT_ALPHABET_SIZE, DEFAULT_TOP_K, EncodingTable
from .errors import CapViolationError, EmptyCorpusError, SubsetExhaustedError
from .hmm import HmmParams, baum_welch_train, init_params, llpo

SUBSET_SHARE_CAP = 0.30


@dataclass
class FamilyModel:
    """Named ensemble of one-class HMMs with an LLPO acceptance threshold."""

    name: str
    members: list[HmmParams]
    threshold: float = float("-inf")
    subset_manifest: list[list[str]] = field(default_factory=list)


@dataclass
class RunConfig:
    """Training hyperparameters, persisted with the registry."""

    n_states: int = 2
    ensemble_size: int = 5
    subset_size: int = 20
    max_iters: int = 200
    window_len: int = 100
    threshold_percentile: float = 0.05
    seed: int = 0
    top_k: int = DEFAULT_TOP_K
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self) -> None:
        for name in ("n_states", "ensemble_size", "subset_size", "max_iters", "window_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.threshold_percentile < 1.0:
            raise ValueError("threshold_percentile must be in [0, 1)")
        self.split_fractions = tuple(float(f) for f in self.split_fractions)


@dataclass
class ModelRegistry:
    """All trained family models plus the shared encoding and config."""

    families: dict[str, FamilyModel]
    encoding: EncodingTable
    config: RunConfig

    def __post_init__(self) -> None:
        expected = self.encoding.alphabet_size
        for family in self.families.values():
            for member in family.members:
                if member.n_symbols != expected:
                    raise ValueError(
                        f"family {family.name!r} has a member with "
                        f"{member.n_symbols} symbols; encoding defines {expected}"
                    )

    @property
    def family_names(self) -> list[str]:
        return list(self.families)


def subset_cap(total: int) -> int:
    """Largest allowed subset size: 30% of the family, at least 1."""
    return max(1, math.ceil(SUBSET_SHARE_CAP * total))


def train_family(
    name: str,
    sequences: list,
    ensemble_size: int,
    subset_size: int,
    hmm_config: tuple,
    n_symbols: int = DEFAULT_ALPHABET_SIZE,
) -> FamilyModel:
    """Train one family ensemble on disjoint, deterministically drawn subsets.

    ``hmm_config`` is ``(n_states, max_iters, seed)``. Sequences are shuffled
    by the seed and member ``i`` trains on the ``i``-th consecutive slice of
    ``subset_size`` sequences. The returned model's threshold is -inf until
    calibrated.
    """
    n_states, max_iters, seed = hmm_config
    total = len(sequences)
    if total == 0:
        raise EmptyCorpusError(f"family {name!r} has no training sequences")
    cap = subset_cap(total)
    if subset_size > cap:
        raise CapViolationError(
            f"subset_size {subset_size} exceeds 30% cap {cap} of {total} sequences"
        )
    if ensemble_size * subset_size > total:
        raise SubsetExhaustedError(
            f"{ensemble_size} disjoint subsets of {subset_size} need "
            f"{ensemble_size * subset_size} sequences; family {name!r} has {total}"
        )

    root = np.random.SeedSequence(seed) if isinstance(seed, int) else seed
    children = root.spawn(ensemble_size + 1)
    order = np.random.default_rng(children[0]).permutation(total)

    members: list[HmmParams] = []
    manifest: list[list[str]] = []
    for i in range(ensemble_size):
        picks = order[i * subset_size:(i + 1) * subset_size]
        subset = [sequences[int(k)] for k in picks]
        manifest.append([
            getattr(s, "source_id", "") or f"index-{int(k)}"
            for s, k in zip(subset, picks)
        ])
        start = init_params(n_states, n_symbols, children[i + 1])
        report = baum_welch_train(start, subset, max_iters=max_iters)
        members.append(report.final_params)
    return FamilyModel(name=name, members=members, subset_manifest=manifest)


def member_votes(model: FamilyModel, obs) -> list[float]:
    """Per-member LLPO scores, in member order."""
    return [llpo(member, obs) for member in model.members]


def score_family(model: FamilyModel, obs) -> float:
    """Mean member LLPO; members are summed left to right."""
    total = 0.0
    for member in model.members:
        total += llpo(member, obs)
    return total / len(model.members)


def calibration_windows(sequences: list, window_len: int) -> list[np.ndarray]:
    """Slice sequences into non-overlapping window-length segments.

    Thresholds are applied to sliding windows at classification time, so
    calibration scores segments of the same length. Sequences shorter than
    the window contribute themselves whole.
    """
    windows: list[np.ndarray] = []
    for seq in sequences:
        symbols = getattr(seq, "symbols", None)
        if symbols is None:
            symbols = np.asarray(seq, dtype=np.int32)
        if symbols.shape[0] <= window_len:
            windows.append(symbols)
            continue
        for start in range(0, symbols.shape[0] - window_len + 1, window_len):
            windows.append(symbols[start:start + window_len])
    return windows


def calibrate_threshold(
    model: FamilyModel,
    validation: list,
    percentile: float = 0.05,
) -> FamilyModel:
    """Set the acceptance threshold from in-family validation scores.

    The threshold is the ``percentile`` quantile (linear interpolation) of
    ``score_family`` over the validation sequences, so roughly
    ``1 - percentile`` of in-family material scores at or above it.
    """
    if not validation:
        raise EmptyCorpusError(f"family {model.name!r} has no validation sequences")
    scores = [score_family(model, v) for v in validation]
    threshold = float(np.quantile(scores, percentile))
    return replace(model, threshold=threshold)
