"""Catalog of externally authored AttackPattern SDOs.

DISARM publishes its techniques as STIX AttackPattern objects; the encoder
reuses those originals (ids and timestamps intact) instead of minting new
ones, so technique objects correlate across platforms that already know
DISARM's ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Union

from disinfox.errors import CatalogError, InvalidIdentifier
from disinfox.taxonomy import validate_technique_id


def external_technique_id(attack_pattern: dict) -> str | None:
    """The ``mitre-attack`` external_id of an AttackPattern, if present."""
    for reference in attack_pattern.get("external_references") or []:
        if isinstance(reference, dict) and reference.get("source_name") == "mitre-attack":
            external_id = reference.get("external_id")
            if isinstance(external_id, str):
                return external_id
    return None


@dataclass(frozen=True)
class AttackPatternCatalog:
    entries: dict[str, dict] = field(default_factory=dict)

    def __contains__(self, technique_id: str) -> bool:
        return self.get(technique_id) is not None

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, technique_id: str) -> dict | None:
        # keys were normalized at load; normalize the query the same way
        try:
            return self.entries.get(validate_technique_id(technique_id))
        except InvalidIdentifier:
            return None


def load_attack_pattern_catalog(source: Union[str, bytes, IO, list, dict]) -> AttackPatternCatalog:
    """Build a catalog from a JSON array of AttackPattern SDOs or a bundle.

    Entries are keyed by their ``mitre-attack`` external_id; originals are
    preserved verbatim. Entries without that reference, and duplicate
    external ids, are rejected with context.
    """
    if isinstance(source, (list, dict)):
        document = source
    else:
        raw = source.read() if hasattr(source, "read") else source
        try:
            document = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"catalog source is not valid JSON: {exc}") from exc

    if isinstance(document, dict):
        objects = document.get("objects")
        if not isinstance(objects, list):
            raise CatalogError("catalog bundle has no 'objects' array")
    elif isinstance(document, list):
        objects = document
    else:
        raise CatalogError("catalog source must be a JSON array or bundle")

    entries: dict[str, dict] = {}
    for index, obj in enumerate(objects):
        context = f"catalog entry {index}"
        if not isinstance(obj, dict) or obj.get("type") != "attack-pattern":
            raise CatalogError(f"{context}: not an attack-pattern object")
        external_id = external_technique_id(obj)
        if external_id is None:
            raise CatalogError(
                f"{context} ({obj.get('id', 'no id')}): no mitre-attack external_reference"
            )
        try:
            technique_id = validate_technique_id(external_id)
        except InvalidIdentifier as exc:
            raise CatalogError(f"{context}: {exc}") from exc
        if technique_id in entries:
            raise CatalogError(f"duplicate catalog external_id {technique_id}")
        entries[technique_id] = obj
    return AttackPatternCatalog(entries=entries)


def load_catalog_file(path: str) -> AttackPatternCatalog:
    with open(path, "r", encoding="utf-8") as handle:
        return load_attack_pattern_catalog(handle)


def load_default_catalog() -> AttackPatternCatalog:
    """The DISARM attack-pattern subset bundled with the package."""
    seed = resources.files("disinfox.data").joinpath("disarm_attack_patterns.json")
    return load_attack_pattern_catalog(seed.read_text(encoding="utf-8"))
