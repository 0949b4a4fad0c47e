"""Shared test constructions: generator HMMs and hand-built registries."""
from __future__ import annotations

import numpy as np

import opstream as op

ALPHABET_SIZE = 27
WINDOW_LEN = 100

# Disjoint 9-symbol bands keep the three families' emission rows at least
# 0.4 apart in total variation while leaving plenty of overlap mass, so
# single-symbol decisions stay noisy and accuracy grows with length.
FAMILY_BANDS = {"benign": 0, "stealer": 9, "dropper": 18}
FAMILY_TRANSITIONS = {
    "benign": [[0.92, 0.08], [0.15, 0.85]],
    "stealer": [[0.88, 0.12], [0.10, 0.90]],
    "dropper": [[0.95, 0.05], [0.25, 0.75]],
}


def band_emission(band_start: int) -> np.ndarray:
    """Two emission rows boosting one 9-symbol band of the 27-symbol space."""
    band = np.arange(band_start, band_start + 9)
    row0 = np.full(ALPHABET_SIZE, (1.0 - 9 * 0.07037) / 18)
    row0[band] = 0.07037
    row1 = np.full(ALPHABET_SIZE, 0.3 / 18)
    row1[band[:5]] = 0.1
    row1[band[5:]] = 0.05
    rows = np.vstack([row0, row1])
    return rows / rows.sum(axis=1, keepdims=True)


def benchmark_generators() -> dict[str, op.HmmParams]:
    return {
        name: op.HmmParams(
            transition=FAMILY_TRANSITIONS[name],
            emission=band_emission(start),
            initial=[0.6, 0.4],
        )
        for name, start in FAMILY_BANDS.items()
    }


def novel_generator() -> op.HmmParams:
    """A fourth family no registry is trained on; spreads over all bands."""
    boosted = np.arange(0, ALPHABET_SIZE, 3)
    row0 = np.full(ALPHABET_SIZE, 0.25 / 18)
    row0[boosted] = 0.75 / 9
    row1 = np.full(ALPHABET_SIZE, 0.35 / 18)
    row1[boosted[:5]] = 0.65 / 5
    rows = np.vstack([row0 / row0.sum(), row1 / row1.sum()])
    return op.HmmParams(
        transition=[[0.9, 0.1], [0.2, 0.8]],
        emission=rows,
        initial=[0.5, 0.5],
    )


def identity_table() -> op.EncodingTable:
    """An encoding table mapping the fixed vocabulary onto itself."""
    return op.EncodingTable(
        rank_of={op.MNEMONIC_VOCAB[i]: i for i in range(op.DEFAULT_TOP_K)},
        corpus_counts={m: 1000 - i for i, m in enumerate(op.MNEMONIC_VOCAB)},
    )


def single_state_model(emission_row, name: str, threshold: float) -> op.FamilyModel:
    params = op.HmmParams(transition=[[1.0]], emission=[emission_row], initial=[1.0])
    return op.FamilyModel(name=name, members=[params], threshold=threshold)


def manual_registry(models: list[op.FamilyModel], window_len: int = WINDOW_LEN,
                    **config_overrides) -> op.ModelRegistry:
    """Registry over hand-built models; alphabet size must match members."""
    n_symbols = models[0].members[0].n_symbols
    table = op.EncodingTable(
        rank_of={op.MNEMONIC_VOCAB[i]: i for i in range(n_symbols - 1)},
        corpus_counts={op.MNEMONIC_VOCAB[i]: 1000 - i for i in range(n_symbols)},
        top_k=n_symbols - 1,
    )
    config = op.RunConfig(window_len=window_len, seed=0, top_k=n_symbols - 1,
                          **config_overrides)
    return op.ModelRegistry(
        families={m.name: m for m in models}, encoding=table, config=config
    )


def two_symbol_registry(window_len: int = 8) -> op.ModelRegistry:
    """Two single-state families over a binary alphabet.

    Family "flat" emits both symbols equally (LLPO is always ln 0.5); family
    "zeroes" strongly prefers symbol 0. Thresholds: flat accepts everything
    above -0.75, zeroes everything above -1.0.
    """
    flat = single_state_model([0.5, 0.5], "flat", threshold=-0.75)
    zeroes = single_state_model([0.9, 0.1], "zeroes", threshold=-1.0)
    return manual_registry([flat, zeroes], window_len=window_len)


def vocab_traces(sequences: list[op.ObservationSequence]) -> list[op.OpcodeTrace]:
    """Render encoded sequences back into mnemonic traces via the vocabulary."""
    vocab = np.asarray(op.MNEMONIC_VOCAB)
    return [
        op.OpcodeTrace(opcodes=tuple(vocab[s.symbols].tolist()), source_id=s.source_id)
        for s in sequences
    ]


def build_benchmark_registry(
    n_train: int = 200,
    n_val: int = 50,
    n_test: int = 50,
    length: int = 5000,
    config: op.RunConfig | None = None,
):
    """Full library-path benchmark: synth, alphabet, encode, train, calibrate.

    Returns ``(registry, encoded, generators)`` where ``encoded`` maps family
    name to ``(train, validation, test)`` lists of encoded sequences.
    """
    if config is None:
        config = op.RunConfig(seed=29)
    generators = benchmark_generators()
    total = n_train + n_val + n_test
    raw: dict[str, list[op.ObservationSequence]] = {}
    for k, (name, gen) in enumerate(sorted(generators.items())):
        raw[name] = op.synth_generate(gen, total, length, seed=10_000 + k, label=name)

    train_traces = []
    for name in sorted(raw):
        train_traces.extend(vocab_traces(raw[name][:n_train]))
    table = op.build_alphabet(train_traces, top_k=config.top_k)

    def encode_all(seqs: list[op.ObservationSequence]) -> list[op.ObservationSequence]:
        out = []
        for trace, src in zip(vocab_traces(seqs), seqs):
            enc = op.encode_trace(trace, table)
            enc.label = src.label
            out.append(enc)
        return out

    encoded: dict[str, tuple[list, list, list]] = {}
    families: dict[str, op.FamilyModel] = {}
    root = np.random.SeedSequence(config.seed)
    seeds = root.spawn(len(raw))
    for k, name in enumerate(sorted(raw)):
        seqs = encode_all(raw[name])
        train = seqs[:n_train]
        validation = seqs[n_train:n_train + n_val]
        test = seqs[n_train + n_val:]
        encoded[name] = (train, validation, test)
        model = op.train_family(
            name, train,
            ensemble_size=config.ensemble_size,
            subset_size=config.subset_size,
            hmm_config=(config.n_states, config.max_iters, seeds[k]),
            n_symbols=table.alphabet_size,
        )
        windows = op.calibration_windows(validation, config.window_len)
        families[name] = op.calibrate_threshold(
            model, windows, config.threshold_percentile
        )

    registry = op.ModelRegistry(families=families, encoding=table, config=config)
    return registry, encoded, generators


def test_dataset(encoded: dict[str, tuple[list, list, list]]) -> op.LabeledDataset:
    """Wrap the benchmark's per-family test lists as a LabeledDataset."""
    sequences: list[op.ObservationSequence] = []
    test_idx: list[int] = []
    for name in sorted(encoded):
        for seq in encoded[name][2]:
            test_idx.append(len(sequences))
            sequences.append(seq)
    return op.LabeledDataset(
        sequences=sequences,
        split={"train": [], "validation": [], "test": test_idx},
    )
