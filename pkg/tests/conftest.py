from __future__ import annotations

import numpy as np
import pytest

import opstream as op

import helpers


@pytest.fixture(scope="session")
def tiny_registry():
    """Small trained registry over the three benchmark families.

    Kept fast (short sequences, few iterations); used wherever trained
    models matter more than benchmark-scale accuracy.
    """
    generators = helpers.benchmark_generators()
    datasets: dict[str, list[op.ObservationSequence]] = {}
    families: dict[str, op.FamilyModel] = {}
    window_len = 50
    for k, (name, gen) in enumerate(sorted(generators.items())):
        seqs = op.synth_generate(gen, 60, 800, seed=500 + k, label=name)
        datasets[name] = seqs
        model = op.train_family(
            name, seqs[:40], ensemble_size=2, subset_size=10,
            hmm_config=(2, 40, 900 + k), n_symbols=helpers.ALPHABET_SIZE,
        )
        windows = op.calibration_windows(seqs[40:50], window_len)
        families[name] = op.calibrate_threshold(model, windows, 0.05)
    registry = op.ModelRegistry(
        families=families,
        encoding=helpers.identity_table(),
        config=op.RunConfig(seed=1, window_len=window_len, ensemble_size=2,
                            subset_size=10, max_iters=40),
    )
    return registry, datasets
