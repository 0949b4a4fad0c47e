"""Incremental classification of an opcode stream against family ensembles.

One sliding window per family is kept; each arriving symbol drops the oldest
window entry (once the window is full) and appends the new one, and every
family rescoring produces a per-step decision:

* every family scores below its threshold: the sample looks like a new,
  never-trained family;
* exactly one family scores at or above its threshold: the sample is
  assigned to that family;
* several families accept: the verdict is pending and the window is extended
  to break the tie.

Tie-breaking doubles the window each round (drawing on the buffered stream
suffix, up to ``max_extension`` symbols); in every round each tied family
stays in contention only if a majority of its ensemble members accepts the
extended window. If the extension budget runs out with several families
still standing, the highest mean LLPO wins.

The score delta between consecutive windows is computed and reported on
every step as a diagnostic signal; verdicts are driven by the threshold
rules alone.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .codec import ObservationSequence
from .ensemble import FamilyModel, ModelRegistry, member_votes, score_family
from .errors import (
    EmptySequenceError,
    StateError,
    SymbolRangeError,
    UnknownFamilyError,
)

NEW_FAMILY = "NEW_FAMILY"
DEFAULT_MAX_EXTENSION = 2000


class Verdict(str, Enum):
    ASSIGNED = "assigned"
    NEW_FAMILY = "new_family"
    PENDING = "pending"
    WARMUP = "warmup"


@dataclass
class StepDecision:
    """Outcome of scoring one arriving symbol."""

    verdict: Verdict
    family: str | None
    per_family_scores: dict[str, float]
    accepting_families: set[str]
    delta: dict[str, float]


@dataclass
class ClassificationDecision:
    """Final verdict for one sample."""

    final_family: str
    confidence: float
    symbols_consumed: int
    tie_rounds: int


@dataclass
class StreamState:
    """Mutable per-sample analysis state; single writer, immutable registry."""

    registry: ModelRegistry
    window_len: int
    windows: dict[str, deque]
    live_buffer: list[int]
    last_scores: dict[str, float]
    decision_log: list[StepDecision] = field(default_factory=list)


def _check_symbol(value: int, alphabet_size: int) -> int:
    value = int(value)
    if not 0 <= value < alphabet_size:
        raise SymbolRangeError(
            f"symbol {value} outside alphabet [0, {alphabet_size})"
        )
    return value


def init_stream(
    registry: ModelRegistry,
    window_len: int,
    seed_windows: dict[str, ObservationSequence] | None = None,
) -> StreamState:
    """Create analysis state, optionally pre-filling per-family windows.

    A seed window must hold exactly ``window_len - 1`` symbols (the next push
    completes it) or be empty for a cold start; families without a seed
    start empty and report warmup verdicts until every window is full.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    alphabet = registry.encoding.alphabet_size
    seed_windows = seed_windows or {}
    for name in seed_windows:
        if name not in registry.families:
            raise UnknownFamilyError(f"seed window for unknown family {name!r}")

    windows: dict[str, deque] = {}
    for name in registry.families:
        seed = seed_windows.get(name)
        symbols: list[int] = []
        if seed is not None:
            raw = seed.symbols if isinstance(seed, ObservationSequence) else np.asarray(seed)
            symbols = [_check_symbol(s, alphabet) for s in raw]
            if len(symbols) not in (0, window_len - 1):
                raise ValueError(
                    f"seed window for {name!r} must hold 0 or {window_len - 1} symbols"
                )
        windows[name] = deque(symbols, maxlen=window_len)

    return StreamState(
        registry=registry,
        window_len=window_len,
        windows=windows,
        live_buffer=[],
        last_scores={name: float("nan") for name in registry.families},
        decision_log=[],
    )


def push_symbol(state: StreamState, sym: int) -> StepDecision:
    """Consume one symbol: slide every window, rescore, apply the rules."""
    sym = _check_symbol(sym, state.registry.encoding.alphabet_size)
    state.live_buffer.append(sym)

    scores: dict[str, float] = {}
    delta: dict[str, float] = {}
    all_full = True
    for name, family in state.registry.families.items():
        window = state.windows[name]
        window.append(sym)  # deque maxlen drops the oldest entry when full
        window_arr = np.fromiter(window, dtype=np.int32, count=len(window))
        score = score_family(family, window_arr)
        scores[name] = score
        delta[name] = score - state.last_scores[name]
        state.last_scores[name] = score
        if len(window) < state.window_len:
            all_full = False

    if not all_full:
        decision = StepDecision(
            verdict=Verdict.WARMUP,
            family=None,
            per_family_scores=scores,
            accepting_families=set(),
            delta=delta,
        )
    else:
        accepting = {
            name for name, family in state.registry.families.items()
            if scores[name] >= family.threshold
        }
        if not accepting:
            verdict, family_name = Verdict.NEW_FAMILY, None
        elif len(accepting) == 1:
            verdict, family_name = Verdict.ASSIGNED, next(iter(accepting))
        else:
            verdict, family_name = Verdict.PENDING, None
        decision = StepDecision(
            verdict=verdict,
            family=family_name,
            per_family_scores=scores,
            accepting_families=accepting,
            delta=delta,
        )
    state.decision_log.append(decision)
    return decision


def _margin(scores: dict[str, float], winner: str | None) -> float:
    """Winning score minus runner-up; top-two gap when there is no winner."""
    ordered = sorted(scores.values(), reverse=True)
    if len(ordered) < 2:
        return 0.0
    if winner is None:
        return ordered[0] - ordered[1]
    best_other = max(v for k, v in scores.items() if k != winner)
    return scores[winner] - best_other


def resolve_tie(
    state: StreamState,
    max_extension: int = DEFAULT_MAX_EXTENSION,
) -> ClassificationDecision:
    """Break a pending multi-family tie by growing the scored window.

    Requires the latest step verdict to be pending. Window length doubles
    each round over the buffered stream (capped at ``max_extension`` symbols
    and at the buffer length); a tied family survives a round when a
    majority of its members accepts. One survivor wins outright; none left
    means a new family; budget exhaustion falls back to highest mean LLPO.
    """
    if not state.decision_log or state.decision_log[-1].verdict is not Verdict.PENDING:
        raise StateError("resolve_tie requires the latest verdict to be pending")

    families = state.registry.families
    contenders = [n for n in families if n in state.decision_log[-1].accepting_families]
    buffer = np.asarray(state.live_buffer, dtype=np.int32)
    limit = min(max_extension, buffer.shape[0])

    tie_rounds = 0
    length = min(state.window_len, limit)
    window = buffer[-length:]
    while len(contenders) > 1 and length < limit:
        length = min(2 * length, limit)
        window = buffer[-length:]
        tie_rounds += 1
        survivors = []
        for name in contenders:
            family = families[name]
            votes = member_votes(family, window)
            accepted = sum(1 for v in votes if v >= family.threshold)
            if 2 * accepted > len(votes):
                survivors.append(name)
        if not survivors:
            contenders = []
            break
        contenders = survivors

    final_scores = {name: score_family(families[name], window) for name in families}
    consumed = len(state.live_buffer)
    if not contenders:
        return ClassificationDecision(
            final_family=NEW_FAMILY,
            confidence=_margin(final_scores, None),
            symbols_consumed=consumed,
            tie_rounds=tie_rounds,
        )
    if len(contenders) == 1:
        winner = contenders[0]
    else:
        winner = max(contenders, key=lambda n: final_scores[n])
    return ClassificationDecision(
        final_family=winner,
        confidence=_margin(final_scores, winner),
        symbols_consumed=consumed,
        tie_rounds=tie_rounds,
    )


def _decide_direct(registry: ModelRegistry, symbols: np.ndarray) -> ClassificationDecision:
    """Apply the threshold rules to one whole short sequence."""
    scores = {name: score_family(f, symbols) for name, f in registry.families.items()}
    accepting = [n for n, f in registry.families.items() if scores[n] >= f.threshold]
    if not accepting:
        winner = NEW_FAMILY
        margin_of = None
    elif len(accepting) == 1:
        winner = accepting[0]
        margin_of = winner
    else:
        # End of stream with a standing tie: highest mean LLPO wins.
        winner = max(accepting, key=lambda n: scores[n])
        margin_of = winner
    return ClassificationDecision(
        final_family=winner,
        confidence=_margin(scores, margin_of),
        symbols_consumed=int(symbols.shape[0]),
        tie_rounds=0,
    )


def classify_sequence(
    registry: ModelRegistry,
    obs: ObservationSequence | np.ndarray,
    window_len: int,
    max_extension: int = DEFAULT_MAX_EXTENSION,
) -> ClassificationDecision:
    """Batch convenience over the streaming engine.

    Symbols are pushed one at a time; the first decisive step verdict
    (assigned or new-family) ends the analysis. A tie still pending when the
    sequence is exhausted goes to ``resolve_tie``. Sequences shorter than
    the window are scored whole against every family under the same rules.
    """
    symbols = obs.symbols if isinstance(obs, ObservationSequence) else np.asarray(obs, dtype=np.int32)
    if symbols.shape[0] < 1:
        raise EmptySequenceError("cannot classify an empty sequence")

    if symbols.shape[0] < window_len:
        return _decide_direct(registry, symbols)

    state = init_stream(registry, window_len)
    for i, sym in enumerate(symbols):
        decision = push_symbol(state, int(sym))
        if decision.verdict is Verdict.ASSIGNED:
            return ClassificationDecision(
                final_family=decision.family,
                confidence=_margin(decision.per_family_scores, decision.family),
                symbols_consumed=i + 1,
                tie_rounds=0,
            )
        if decision.verdict is Verdict.NEW_FAMILY:
            return ClassificationDecision(
                final_family=NEW_FAMILY,
                confidence=_margin(decision.per_family_scores, None),
                symbols_consumed=i + 1,
                tie_rounds=0,
            )
    return resolve_tie(state, max_extension=max_extension)


def detect(
    registry: ModelRegistry,
    obs: ObservationSequence | np.ndarray,
    window_len: int,
) -> str:
    """Binary verdict: ``"benign"`` or ``"malware"``.

    Anything not assigned to the benign family, including a flagged new
    family, counts as malware.
    """
    if "benign" not in registry.families:
        raise UnknownFamilyError('detection requires a family named "benign"')
    decision = classify_sequence(registry, obs, window_len)
    return "benign" if decision.final_family == "benign" else "malware"
