"""Versioned on-disk registry: encoding table, family ensembles, config.

The registry is one human-readable JSON document. Matrices are stored as
row-major arrays of decimals; Python's shortest-repr float serialization
round-trips exactly, so a loaded registry scores bit-identically to the one
that was saved. Loading re-validates every stochastic row.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from .codec import EncodingTable
from .ensemble import FamilyModel, ModelRegistry, RunConfig
from .errors import RegistryFormatError
from .hmm import HmmParams

FORMAT_VERSION = 1


@dataclass
class RegistryFile:
    """A registry plus its persistence metadata."""

    registry: ModelRegistry
    created_at: str
    format_version: int = FORMAT_VERSION


def _params_to_dict(params: HmmParams) -> dict:
    return {
        "n_states": params.n_states,
        "n_symbols": params.n_symbols,
        "transition": params.transition.tolist(),
        "emission": params.emission.tolist(),
        "initial": params.initial.tolist(),
    }


def _params_from_dict(doc: dict) -> HmmParams:
    params = HmmParams(
        transition=doc["transition"],
        emission=doc["emission"],
        initial=doc["initial"],
    )
    if params.n_states != doc["n_states"] or params.n_symbols != doc["n_symbols"]:
        raise RegistryFormatError("stored matrix shapes disagree with declared dimensions")
    return params


def to_document(reg_file: RegistryFile) -> dict:
    registry = reg_file.registry
    return {
        "format_version": reg_file.format_version,
        "created_at": reg_file.created_at,
        "encoding": registry.encoding.to_dict(),
        "config": asdict(registry.config),
        "families": {
            name: {
                "threshold": family.threshold,
                "subset_manifest": family.subset_manifest,
                "members": [_params_to_dict(m) for m in family.members],
            }
            for name, family in registry.families.items()
        },
    }


def from_document(doc: dict) -> RegistryFile:
    try:
        version = int(doc["format_version"])
        if version != FORMAT_VERSION:
            raise RegistryFormatError(f"unsupported registry format_version {version}")
        config_doc = dict(doc["config"])
        config_doc["split_fractions"] = tuple(config_doc["split_fractions"])
        families = {
            name: FamilyModel(
                name=name,
                members=[_params_from_dict(m) for m in body["members"]],
                threshold=float(body["threshold"]),
                subset_manifest=[list(s) for s in body["subset_manifest"]],
            )
            for name, body in doc["families"].items()
        }
        registry = ModelRegistry(
            families=families,
            encoding=EncodingTable.from_dict(doc["encoding"]),
            config=RunConfig(**config_doc),
        )
        return RegistryFile(
            registry=registry,
            created_at=str(doc["created_at"]),
            format_version=version,
        )
    except RegistryFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise RegistryFormatError(f"malformed registry document: {exc}") from exc


def save_registry(
    registry: ModelRegistry | RegistryFile,
    path: str | Path,
    created_at: str | None = None,
) -> RegistryFile:
    """Serialize to ``path``; ``created_at`` defaults to the current UTC time."""
    if isinstance(registry, RegistryFile):
        reg_file = registry
    else:
        stamp = created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
        reg_file = RegistryFile(registry=registry, created_at=stamp)
    # -inf thresholds (uncalibrated models) are not valid JSON literals.
    text = json.dumps(to_document(reg_file), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")
    return reg_file


def load_registry(path: str | Path) -> RegistryFile:
    """Parse and validate a registry document."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegistryFormatError(f"registry is not valid JSON: {exc}") from exc
    return from_document(doc)
