"""Command-line entry point: train, classify, eval, synth.

Corpus layout is one subdirectory per family, each file a plain-text opcode
trace. ``train`` builds the shared alphabet from the training split, trains
every family ensemble, calibrates thresholds on the validation split, and
writes a registry. ``classify`` scores a trace (batch) or standard input
(stream, one JSON decision record per symbol, flushed as produced).
``eval`` re-derives the train/validation/test split from the registry config
and reports on the test split. ``synth`` samples trace files from generator
HMMs described in a JSON spec.

Exit codes:
    0  success
    2  command-line usage error
    3  corpus layout or trace parse error
    4  configuration/validation error (caps, dimensions, unknown family, ...)
    5  empty input (sequence or corpus)
    6  malformed registry
    7  filesystem I/O error
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .codec import (
    MNEMONIC_VOCAB,
    EncodingTable,
    ObservationSequence,
    OpcodeTrace,
    build_alphabet,
    encode_trace,
    parse_trace,
)
from .ensemble import (
    FamilyModel,
    ModelRegistry,
    RunConfig,
    calibrate_threshold,
    calibration_windows,
    score_family,
    train_family,
)
from .errors import (
    CapViolationError,
    CorpusLayoutError,
    DimensionError,
    EmptyCorpusError,
    EmptySequenceError,
    OpstreamError,
    ParseError,
    RegistryFormatError,
    StateError,
    StratificationError,
    SubsetExhaustedError,
    SymbolRangeError,
    UnknownFamilyError,
)
from .evaluate import (
    LabeledDataset,
    evaluate_classification,
    evaluate_detection,
    export_report,
    length_sweep,
    stratified_split,
)
from .hmm import HmmParams
from .registry import load_registry, save_registry
from .stream import classify_sequence, init_stream, push_symbol

EXIT_OK = 0
EXIT_LAYOUT = 3
EXIT_VALIDATION = 4
EXIT_EMPTY = 5
EXIT_REGISTRY = 6
EXIT_IO = 7

_CONFIG_FIELDS = (
    "n_states", "ensemble_size", "subset_size", "max_iters",
    "window_len", "threshold_percentile", "top_k",
)


def _load_corpus(corpus_dir: Path) -> dict[str, list[OpcodeTrace]]:
    if not corpus_dir.is_dir():
        raise CorpusLayoutError(f"corpus directory not found: {corpus_dir}")
    families: dict[str, list[OpcodeTrace]] = {}
    for family_dir in sorted(p for p in corpus_dir.iterdir() if p.is_dir()):
        traces = []
        for trace_path in sorted(p for p in family_dir.iterdir() if p.is_file()):
            source_id = f"{family_dir.name}/{trace_path.name}"
            traces.append(parse_trace(trace_path.read_bytes(), source_id=source_id))
        if traces:
            families[family_dir.name] = traces
    if not families:
        raise CorpusLayoutError(f"no family subdirectories with traces under {corpus_dir}")
    return families


def _build_config(args: argparse.Namespace) -> RunConfig:
    fields: dict = {}
    if getattr(args, "config", None):
        fields.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if getattr(args, "split", None):
        fields["split_fractions"] = tuple(float(x) for x in args.split.split(","))
    fields["seed"] = args.seed
    return RunConfig(**fields)


def cmd_train(args: argparse.Namespace) -> int:
    config = _build_config(args)
    corpus = _load_corpus(Path(args.corpus))
    if len(corpus) < 2:
        raise CorpusLayoutError("training needs at least 2 family subdirectories")
    if args.require_benign and "benign" not in corpus:
        raise CorpusLayoutError('corpus has no "benign" family subdirectory')

    all_traces = [(name, trace) for name, traces in corpus.items() for trace in traces]
    labels = [name for name, _ in all_traces]
    split = stratified_split(labels, config.split_fractions, config.seed)

    table = build_alphabet(
        (all_traces[i][1] for i in split["train"]), top_k=config.top_k
    )

    def encoded(indices: list[int]) -> dict[str, list[ObservationSequence]]:
        grouped: dict[str, list[ObservationSequence]] = {name: [] for name in corpus}
        for i in indices:
            name, trace = all_traces[i]
            seq = encode_trace(trace, table)
            seq.label = name
            grouped[name].append(seq)
        return grouped

    train_seqs = encoded(split["train"])
    val_seqs = encoded(split["validation"])

    root = np.random.SeedSequence(config.seed)
    family_seeds = root.spawn(len(corpus))
    families: dict[str, FamilyModel] = {}
    for i, name in enumerate(sorted(corpus)):
        model = train_family(
            name,
            train_seqs[name],
            ensemble_size=config.ensemble_size,
            subset_size=config.subset_size,
            hmm_config=(config.n_states, config.max_iters, family_seeds[i]),
            n_symbols=table.alphabet_size,
        )
        windows = calibration_windows(val_seqs[name], config.window_len)
        model = calibrate_threshold(model, windows, config.threshold_percentile)
        families[name] = model
        mean_llpo = sum(score_family(model, s) for s in train_seqs[name]) / len(train_seqs[name])
        print(
            f"trained {name}: {len(model.members)} members, "
            f"mean train LLPO {mean_llpo:.4f}, threshold {model.threshold:.4f}"
        )

    registry = ModelRegistry(families=families, encoding=table, config=config)
    save_registry(registry, args.out)
    print(f"registry written to {args.out}")
    return EXIT_OK


def _read_trace_input(args: argparse.Namespace) -> bytes | str:
    if args.trace:
        return Path(args.trace).read_bytes()
    return sys.stdin.read()


def _encode_token(token: str, table: EncodingTable) -> int:
    return table.rank_of.get(token.upper(), table.catch_all)


def _jsonable(value: float) -> float | None:
    return value if math.isfinite(value) else None


def cmd_classify(args: argparse.Namespace) -> int:
    reg_file = load_registry(args.registry)
    registry = reg_file.registry
    window_len = args.window_len or registry.config.window_len

    if args.mode == "batch":
        trace = parse_trace(_read_trace_input(args))
        seq = encode_trace(trace, registry.encoding)
        decision = classify_sequence(registry, seq, window_len)
        record = {
            "mode": "batch",
            "family": decision.final_family,
            "confidence": _jsonable(decision.confidence),
            "symbols_consumed": decision.symbols_consumed,
            "tie_rounds": decision.tie_rounds,
        }
        print(json.dumps(record))
        return EXIT_OK

    state = init_stream(registry, window_len)
    step = 0
    source = open(args.trace, "r", encoding="utf-8") if args.trace else sys.stdin
    try:
        for line in source:
            if line.lstrip().startswith("#"):
                continue
            for token in line.split():
                symbol = _encode_token(token, registry.encoding)
                decision = push_symbol(state, symbol)
                step += 1
                record = {
                    "step": step,
                    "mnemonic": token.upper(),
                    "symbol": symbol,
                    "verdict": decision.verdict.value,
                    "family": decision.family,
                    "scores": {k: _jsonable(v) for k, v in decision.per_family_scores.items()},
                    "accepting": sorted(decision.accepting_families),
                    "delta": {k: _jsonable(v) for k, v in decision.delta.items()},
                }
                print(json.dumps(record), flush=True)
    finally:
        if source is not sys.stdin:
            source.close()
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    reg_file = load_registry(args.registry)
    registry = reg_file.registry
    config = registry.config
    window_len = args.window_len or config.window_len

    corpus = _load_corpus(Path(args.corpus))
    all_traces = [(name, trace) for name, traces in corpus.items() for trace in traces]
    labels = [name for name, _ in all_traces]
    split = stratified_split(labels, config.split_fractions, config.seed)
    sequences = []
    for name, trace in all_traces:
        seq = encode_trace(trace, registry.encoding)
        seq.label = name
        sequences.append(seq)
    dataset = LabeledDataset(sequences=sequences, split=split)

    out_dir = Path(args.out)
    if args.task == "detect":
        report = evaluate_detection(registry, dataset, window_len)
        export_report(report, out_dir)
        print(f"detection accuracy: {report.accuracy:.4f} "
              f"(FPR {report.false_positive_rate:.4f}, FNR {report.false_negative_rate:.4f})")
    elif args.task == "classify":
        report = evaluate_classification(registry, dataset, window_len)
        export_report(report, out_dir)
        print(f"classification accuracy: {report.accuracy:.4f}")
    else:
        lengths = [int(x) for x in args.lengths.split(",")]
        sweep = length_sweep(registry, dataset, lengths)
        export_report(sweep, out_dir)
        pairs = ", ".join(f"{l}:{a:.4f}" for l, a in zip(sweep.lengths, sweep.accuracy_at))
        print(f"sweep accuracy by length: {pairs}")
    print(f"reports written to {out_dir}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    # Imported here to keep module import light for the common commands.
    from .evaluate import synth_generate

    spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    families = spec.get("families", [])
    if not families:
        raise ValueError("generator spec must list at least one family")

    out_dir = Path(args.out)
    root = np.random.SeedSequence(args.seed)
    seeds = root.spawn(len(families))
    for i, body in enumerate(families):
        name = body["name"]
        try:
            generator = HmmParams(
                transition=body["transition"],
                emission=body["emission"],
                initial=body["initial"],
            )
        except ValueError as exc:
            raise ValueError(f"family {name!r}: {exc}") from exc
        if generator.n_symbols > len(MNEMONIC_VOCAB):
            raise ValueError(
                f"family {name!r} uses {generator.n_symbols} symbols; "
                f"the mnemonic vocabulary has {len(MNEMONIC_VOCAB)}"
            )
        sequences = synth_generate(
            generator,
            n_sequences=int(body["sequences"]),
            length=int(body["length"]),
            seed=seeds[i],
            label=name,
        )
        family_dir = out_dir / name
        family_dir.mkdir(parents=True, exist_ok=True)
        for j, seq in enumerate(sequences):
            names = [MNEMONIC_VOCAB[s] for s in seq.symbols]
            lines = [" ".join(names[k:k + 20]) for k in range(0, len(names), 20)]
            (family_dir / f"{name}-{j:04d}.txt").write_text(
                "\n".join(lines) + "\n", encoding="utf-8"
            )
        print(f"wrote {len(sequences)} traces for family {name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opstream",
        description="Incremental opcode-stream malware detection and classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train family ensembles from a corpus")
    train.add_argument("--corpus", required=True, help="family-per-subdirectory corpus")
    train.add_argument("--out", required=True, help="registry output path")
    train.add_argument("--seed", required=True, type=int)
    train.add_argument("--config", help="JSON file with config fields; flags override")
    train.add_argument("--states", dest="n_states", type=int)
    train.add_argument("--ensemble-size", dest="ensemble_size", type=int)
    train.add_argument("--subset-size", dest="subset_size", type=int)
    train.add_argument("--iters", dest="max_iters", type=int)
    train.add_argument("--window-len", dest="window_len", type=int)
    train.add_argument("--threshold-percentile", dest="threshold_percentile", type=float)
    train.add_argument("--top-k", dest="top_k", type=int)
    train.add_argument("--split", help="train,validation,test fractions (e.g. 0.6,0.2,0.2)")
    train.add_argument("--require-benign", action="store_true")
    train.set_defaults(func=cmd_train)

    classify = sub.add_parser("classify", help="classify one trace or a live stream")
    classify.add_argument("--registry", required=True)
    classify.add_argument("--trace", help="trace file; omit to read standard input")
    classify.add_argument("--mode", choices=("batch", "stream"), default="batch")
    classify.add_argument("--window-len", dest="window_len", type=int)
    classify.set_defaults(func=cmd_classify)

    evaluate = sub.add_parser("eval", help="evaluate a registry on a corpus test split")
    evaluate.add_argument("--registry", required=True)
    evaluate.add_argument("--corpus", required=True)
    evaluate.add_argument("--task", choices=("detect", "classify", "sweep"), required=True)
    evaluate.add_argument("--out", required=True, help="directory for CSV reports")
    evaluate.add_argument("--lengths", default="10,100,1000", help="sweep lengths (csv)")
    evaluate.add_argument("--window-len", dest="window_len", type=int)
    evaluate.set_defaults(func=cmd_eval)

    synth = sub.add_parser("synth", help="sample a synthetic corpus from generator HMMs")
    synth.add_argument("--spec", required=True, help="generator spec JSON")
    synth.add_argument("--out", required=True, help="corpus output directory")
    synth.add_argument("--seed", required=True, type=int)
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusLayoutError, ParseError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LAYOUT
    except (EmptySequenceError, EmptyCorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except RegistryFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGISTRY
    except (
        CapViolationError, SubsetExhaustedError, StratificationError,
        DimensionError, SymbolRangeError, UnknownFamilyError, StateError,
        OpstreamError, ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
