"""Evaluation harness: splits, synthetic corpora, accuracy reports, sweeps.

Real malware corpora are not shipped; benchmarks run on synthetic families
sampled from ground-truth HMMs over the shared symbol alphabet. Reports are
exported as CSV (per-sample scores, summary metrics, and the observation
length sweep) for external plotting.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import ObservationSequence
from .ensemble import ModelRegistry, score_family
from .errors import EmptyCorpusError, StratificationError, UnknownFamilyError
from .hmm import HmmParams
from .stream import NEW_FAMILY, classify_sequence, detect

SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class LabeledDataset:
    """Labeled sequences plus index lists for train/validation/test."""

    sequences: list[ObservationSequence]
    split: dict[str, list[int]] = field(default_factory=dict)

    def subset(self, name: str) -> list[ObservationSequence]:
        return [self.sequences[i] for i in self.split.get(name, [])]


@dataclass
class PerSampleRow:
    sample_index: int
    true_label: str
    predicted: str
    family_llpo: dict[str, float]


@dataclass
class EvaluationReport:
    """Accuracy, confusion counts, and per-sample scores for one eval run."""

    mode: str
    accuracy: float
    confusion: dict[str, dict[str, int]]
    per_sample: list[PerSampleRow]
    false_positive_rate: float | None = None
    false_negative_rate: float | None = None


@dataclass
class SweepResult:
    """Classification accuracy at each evaluated observation length."""

    lengths: list[int]
    accuracy_at: list[float]


def stratified_split(
    labels: list[str],
    fractions: tuple[float, float, float],
    seed: int,
) -> dict[str, list[int]]:
    """Deterministic per-label shuffle and split into train/validation/test."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be three positive values")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    by_label: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_label.setdefault(label, []).append(i)
    rng = np.random.default_rng(seed)
    split: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    for label in sorted(by_label):
        indices = np.array(by_label[label])
        if indices.size < 3:
            raise StratificationError(
                f"label {label!r} has {indices.size} samples; need >= 3 to split"
            )
        indices = indices[rng.permutation(indices.size)]
        n_train = int(fractions[0] * indices.size)
        n_val = int(fractions[1] * indices.size)
        split["train"].extend(int(i) for i in indices[:n_train])
        split["validation"].extend(int(i) for i in indices[n_train:n_train + n_val])
        split["test"].extend(int(i) for i in indices[n_train + n_val:])
    return split


def split_dataset(
    data: LabeledDataset,
    fractions: tuple[float, float, float],
    seed: int,
) -> LabeledDataset:
    """Return the dataset with a fresh stratified split over its labels."""
    labels = [s.label or "" for s in data.sequences]
    return LabeledDataset(
        sequences=data.sequences,
        split=stratified_split(labels, fractions, seed),
    )


def synth_generate(
    generator: HmmParams,
    n_sequences: int,
    length: int,
    seed: int,
    label: str,
) -> list[ObservationSequence]:
    """Sample observation sequences from a ground-truth HMM.

    All chains advance in lockstep (one emission draw and one transition
    draw per step across the batch), deterministically per seed.
    """
    if n_sequences < 1 or length < 1:
        raise ValueError("n_sequences and length must be >= 1")
    rng = np.random.default_rng(seed)
    cum_a = np.cumsum(generator.transition, axis=1)
    cum_b = np.cumsum(generator.emission, axis=1)
    cum_pi = np.cumsum(generator.initial)
    n_states = generator.n_states
    n_symbols = generator.n_symbols

    states = np.minimum(
        np.searchsorted(cum_pi, rng.random(n_sequences)), n_states - 1
    )
    out = np.empty((n_sequences, length), dtype=np.int32)
    for t in range(length):
        u = rng.random(n_sequences)
        sym = (cum_b[states] <= u[:, None]).sum(axis=1)
        out[:, t] = np.minimum(sym, n_symbols - 1)
        v = rng.random(n_sequences)
        nxt = (cum_a[states] <= v[:, None]).sum(axis=1)
        states = np.minimum(nxt, n_states - 1)

    return [
        ObservationSequence(symbols=out[i], label=label, source_id=f"{label}-{i:04d}")
        for i in range(n_sequences)
    ]


def _test_sequences(test: LabeledDataset) -> list[tuple[int, ObservationSequence]]:
    indices = test.split.get("test", [])
    if not indices:
        raise EmptyCorpusError("the dataset has an empty test split")
    return [(i, test.sequences[i]) for i in indices]


def _family_llpo(registry: ModelRegistry, seq: ObservationSequence) -> dict[str, float]:
    return {name: score_family(f, seq) for name, f in registry.families.items()}


def evaluate_detection(
    registry: ModelRegistry,
    test: LabeledDataset,
    window_len: int,
) -> EvaluationReport:
    """Binary malware-vs-benign accuracy over the test split."""
    if "benign" not in registry.families:
        raise UnknownFamilyError('detection requires a family named "benign"')
    rows: list[PerSampleRow] = []
    confusion = {t: {p: 0 for p in ("benign", "malware")} for t in ("benign", "malware")}
    correct = 0
    samples = _test_sequences(test)
    for index, seq in samples:
        truth = "benign" if seq.label == "benign" else "malware"
        predicted = detect(registry, seq, window_len)
        confusion[truth][predicted] += 1
        if predicted == truth:
            correct += 1
        rows.append(PerSampleRow(index, truth, predicted, _family_llpo(registry, seq)))
    total = len(samples)
    n_benign = sum(confusion["benign"].values())
    n_malware = sum(confusion["malware"].values())
    fpr = confusion["benign"]["malware"] / n_benign if n_benign else 0.0
    fnr = confusion["malware"]["benign"] / n_malware if n_malware else 0.0
    return EvaluationReport(
        mode="detect",
        accuracy=correct / total,
        confusion=confusion,
        per_sample=rows,
        false_positive_rate=fpr,
        false_negative_rate=fnr,
    )


def evaluate_classification(
    registry: ModelRegistry,
    test: LabeledDataset,
    window_len: int,
) -> EvaluationReport:
    """Multi-class family accuracy over the test split.

    Predictions may land in the extra new-family column, which never counts
    as correct for a sample whose true family was trained.
    """
    samples = _test_sequences(test)
    true_labels = sorted({seq.label or "" for _, seq in samples})
    predicted_labels = sorted(registry.families) + [NEW_FAMILY]
    confusion = {
        t: {p: 0 for p in sorted(set(predicted_labels) | set(true_labels))}
        for t in true_labels
    }
    rows: list[PerSampleRow] = []
    correct = 0
    for index, seq in samples:
        truth = seq.label or ""
        decision = classify_sequence(registry, seq, window_len)
        predicted = decision.final_family
        confusion[truth][predicted] += 1
        if predicted == truth:
            correct += 1
        rows.append(PerSampleRow(index, truth, predicted, _family_llpo(registry, seq)))
    return EvaluationReport(
        mode="classify",
        accuracy=correct / len(samples),
        confusion=confusion,
        per_sample=rows,
    )


def length_sweep(
    registry: ModelRegistry,
    test: LabeledDataset,
    lengths: list[int],
) -> SweepResult:
    """Classification accuracy after truncating test sequences to each length.

    Sequences shorter than a given length are skipped at that length; the
    window length comes from the registry config.
    """
    if not lengths or any(l < 1 for l in lengths):
        raise ValueError("lengths must be non-empty and all >= 1")
    if sorted(lengths) != list(lengths):
        raise ValueError("lengths must be sorted ascending")
    window_len = registry.config.window_len
    samples = _test_sequences(test)
    out_lengths: list[int] = []
    out_accuracy: list[float] = []
    for length in lengths:
        correct = 0
        total = 0
        for _, seq in samples:
            if len(seq) < length:
                continue
            truncated = seq.symbols[:length]
            decision = classify_sequence(registry, truncated, window_len)
            total += 1
            if decision.final_family == (seq.label or ""):
                correct += 1
        if total == 0:
            continue
        out_lengths.append(length)
        out_accuracy.append(correct / total)
    if not out_lengths:
        raise EmptyCorpusError("every test sequence is shorter than the smallest length")
    return SweepResult(lengths=out_lengths, accuracy_at=out_accuracy)


def export_report(report: EvaluationReport | SweepResult, path: str | Path) -> list[Path]:
    """Write the report as CSV files under ``path``; returns written paths.

    ``EvaluationReport`` produces ``per_sample.csv`` (sample index, true
    label, prediction, one LLPO column per family) and ``summary.csv``
    (metric/value pairs plus flattened confusion counts). ``SweepResult``
    produces ``sweep.csv``. Floats are written with full round-trip
    precision and deterministic ordering.
    """
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if isinstance(report, SweepResult):
        sweep_path = out_dir / "sweep.csv"
        with sweep_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["length", "accuracy"])
            for length, acc in zip(report.lengths, report.accuracy_at):
                writer.writerow([length, repr(float(acc))])
        written.append(sweep_path)
        return written

    families = sorted(report.per_sample[0].family_llpo) if report.per_sample else []
    per_sample_path = out_dir / "per_sample.csv"
    with per_sample_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "true_label", "predicted"]
                        + [f"llpo_{f}" for f in families])
        for row in report.per_sample:
            writer.writerow(
                [row.sample_index, row.true_label, row.predicted]
                + [repr(float(row.family_llpo[f])) for f in families]
            )
    written.append(per_sample_path)

    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["mode", report.mode])
        writer.writerow(["accuracy", repr(float(report.accuracy))])
        if report.false_positive_rate is not None:
            writer.writerow(["false_positive_rate", repr(float(report.false_positive_rate))])
        if report.false_negative_rate is not None:
            writer.writerow(["false_negative_rate", repr(float(report.false_negative_rate))])
        for truth in sorted(report.confusion):
            for predicted in sorted(report.confusion[truth]):
                writer.writerow(
                    [f"confusion[{truth}][{predicted}]", report.confusion[truth][predicted]]
                )
    written.append(summary_path)
    return written
