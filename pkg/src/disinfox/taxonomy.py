"""DISARM matrix: phases, tactics, and techniques.

Loads the matrix from a JSON document (see ``docs/taxonomy-schema.md``) and
answers the lookups every other module validates against. A loaded
:class:`Taxonomy` is immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import IO, Union

from disinfox.errors import InvalidIdentifier, TaxonomyError, TechniqueNotFound

TECHNIQUE_ID_RE = re.compile(r"^T\d{4}(?:\.\d{3})?$")
TACTIC_ID_RE = re.compile(r"^TA\d{2}$")

KILL_CHAIN_NAME = "mitre-attack"
REFERENCE_URL_TEMPLATE = (
    "https://github.com/DISARMFoundation/DISARMframeworks/blob/main/"
    "generated_pages/techniques/{id}.md"
)


class Phase(str, Enum):
    PLAN = "PLAN"
    PREPARE = "PREPARE"
    EXECUTE = "EXECUTE"
    ASSESS = "ASSESS"


def validate_technique_id(text: str) -> str:
    """Normalize and validate a technique id like ``T0002`` or ``T0115.003``.

    Trims surrounding whitespace and uppercases the leading ``T``. Raises
    :class:`InvalidIdentifier` on any other deviation from the pattern.
    """
    if not isinstance(text, str):
        raise InvalidIdentifier(f"technique id must be text, got {type(text).__name__}")
    candidate = text.strip()
    if candidate[:1] in ("t", "T"):
        candidate = "T" + candidate[1:]
    if not TECHNIQUE_ID_RE.match(candidate):
        raise InvalidIdentifier(f"not a technique id: {text!r}")
    return candidate


def validate_tactic_id(text: str) -> str:
    candidate = text.strip().upper() if isinstance(text, str) else ""
    if not TACTIC_ID_RE.match(candidate):
        raise InvalidIdentifier(f"not a tactic id: {text!r}")
    return candidate


def slugify_tactic(name: str) -> str:
    """Kill-chain slug for a tactic name: ``Plan Objectives`` -> ``plan-objectives``.

    ``&`` is spelled out as ``and`` before slugging, and any run of
    non-alphanumeric characters collapses to a single hyphen.
    """
    spelled = name.replace("&", " and ")
    slug = re.sub(r"[^a-z0-9]+", "-", spelled.lower())
    return slug.strip("-")


@dataclass(frozen=True)
class Tactic:
    id: str
    name: str
    phase: Phase

    @property
    def kill_chain_slug(self) -> str:
        return slugify_tactic(self.name)


@dataclass(frozen=True)
class Technique:
    id: str
    name: str
    description: str
    tactic_id: str
    reference_url: str

    @property
    def parent_id(self) -> str | None:
        """Parent technique id for sub-techniques, else None."""
        if "." in self.id:
            return self.id.split(".", 1)[0]
        return None


@dataclass(frozen=True)
class Taxonomy:
    version: str
    tactics: dict[str, Tactic]
    techniques: dict[str, Technique]

    def lookup_technique(self, technique_id: str) -> Technique:
        """Return the technique for a (possibly unnormalized) id.

        Raises :class:`InvalidIdentifier` on malformed input and
        :class:`TechniqueNotFound` when the id is absent.
        """
        tid = validate_technique_id(technique_id)
        try:
            return self.techniques[tid]
        except KeyError:
            raise TechniqueNotFound(f"technique {tid} not in taxonomy") from None

    def lookup_tactic(self, tactic_id: str) -> Tactic:
        tid = validate_tactic_id(tactic_id)
        try:
            return self.tactics[tid]
        except KeyError:
            raise TechniqueNotFound(f"tactic {tid} not in taxonomy") from None

    def tactic_of(self, technique_id: str) -> Tactic:
        return self.tactics[self.lookup_technique(technique_id).tactic_id]

    def kill_chain_phase_of(self, technique_id: str) -> tuple[str, str]:
        """Kill-chain entry for a technique: ``("mitre-attack", <tactic slug>)``."""
        return KILL_CHAIN_NAME, self.tactic_of(technique_id).kill_chain_slug

    def phase_of(self, technique_id: str) -> Phase:
        return self.tactic_of(technique_id).phase

    def has_technique(self, technique_id: str) -> bool:
        try:
            self.lookup_technique(technique_id)
        except (InvalidIdentifier, TechniqueNotFound):
            return False
        return True

    def to_document(self) -> dict:
        """Serialize back to the taxonomy-document shape (round-trip safe)."""
        return {
            "version": self.version,
            "tactics": [
                {
                    "id": t.id,
                    "name": t.name,
                    "phase": t.phase.value,
                    "kill_chain_slug": t.kill_chain_slug,
                }
                for t in sorted(self.tactics.values(), key=lambda t: t.id)
            ],
            "techniques": [
                {
                    "id": t.id,
                    "name": t.name,
                    "description": t.description,
                    "tactic_id": t.tactic_id,
                    "reference_url": t.reference_url,
                }
                for t in sorted(self.techniques.values(), key=lambda t: t.id)
            ],
        }


def _require(record: dict, field: str, context: str) -> str:
    value = record.get(field)
    if not isinstance(value, str) or not value.strip():
        raise TaxonomyError(f"{context}: missing or empty field {field!r}")
    return value.strip()


def load_taxonomy(source: Union[str, bytes, IO]) -> Taxonomy:
    """Parse and validate a taxonomy document.

    ``source`` may be a JSON string, bytes, or an open text/binary stream.
    The whole document is rejected on the first structural violation:
    duplicate ids, a technique referencing an unknown tactic, or a
    sub-technique without its parent.
    """
    raw = source.read() if hasattr(source, "read") else source
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"taxonomy document is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise TaxonomyError("taxonomy document must be a JSON object")

    version = document.get("version")
    if not isinstance(version, str) or not version:
        raise TaxonomyError("taxonomy document must carry a non-empty 'version'")

    tactics_raw = document.get("tactics")
    if not isinstance(tactics_raw, list) or not tactics_raw:
        raise TaxonomyError("no tactics defined")
    techniques_raw = document.get("techniques")
    if not isinstance(techniques_raw, list):
        raise TaxonomyError("taxonomy document must carry a 'techniques' array")

    tactics: dict[str, Tactic] = {}
    for index, record in enumerate(tactics_raw):
        context = f"tactics[{index}]"
        if not isinstance(record, dict):
            raise TaxonomyError(f"{context}: not an object")
        try:
            tactic_id = validate_tactic_id(_require(record, "id", context))
        except InvalidIdentifier as exc:
            raise TaxonomyError(f"{context}: {exc}") from exc
        if tactic_id in tactics:
            raise TaxonomyError(f"{context}: duplicate tactic id {tactic_id}")
        phase_text = _require(record, "phase", context)
        try:
            phase = Phase(phase_text)
        except ValueError:
            raise TaxonomyError(
                f"{context}: phase must be one of "
                f"{[p.value for p in Phase]}, got {phase_text!r}"
            ) from None
        tactics[tactic_id] = Tactic(id=tactic_id, name=_require(record, "name", context), phase=phase)

    techniques: dict[str, Technique] = {}
    for index, record in enumerate(techniques_raw):
        context = f"techniques[{index}]"
        if not isinstance(record, dict):
            raise TaxonomyError(f"{context}: not an object")
        try:
            technique_id = validate_technique_id(_require(record, "id", context))
        except InvalidIdentifier as exc:
            raise TaxonomyError(f"{context}: {exc}") from exc
        if technique_id in techniques:
            raise TaxonomyError(f"{context}: duplicate technique id {technique_id}")
        try:
            tactic_id = validate_tactic_id(_require(record, "tactic_id", context))
        except InvalidIdentifier as exc:
            raise TaxonomyError(f"{context}: {exc}") from exc
        if tactic_id not in tactics:
            raise TaxonomyError(
                f"{context}: technique {technique_id} references unknown tactic {tactic_id}"
            )
        reference_url = record.get("reference_url") or REFERENCE_URL_TEMPLATE.format(id=technique_id)
        if reference_url != REFERENCE_URL_TEMPLATE.format(id=technique_id):
            raise TaxonomyError(
                f"{context}: reference_url does not follow the DISARM generated-pages pattern"
            )
        techniques[technique_id] = Technique(
            id=technique_id,
            name=_require(record, "name", context),
            description=_require(record, "description", context),
            tactic_id=tactic_id,
            reference_url=reference_url,
        )

    for technique in techniques.values():
        parent = technique.parent_id
        if parent is not None and parent not in techniques:
            raise TaxonomyError(
                f"sub-technique {technique.id} has no parent {parent} in the taxonomy"
            )

    return Taxonomy(version=version, tactics=tactics, techniques=techniques)


def load_taxonomy_file(path: str) -> Taxonomy:
    with open(path, "r", encoding="utf-8") as handle:
        return load_taxonomy(handle)


def load_default_taxonomy() -> Taxonomy:
    """The DISARM subset bundled with the package."""
    seed = resources.files("disinfox.data").joinpath("disarm_taxonomy.json")
    return load_taxonomy(seed.read_text(encoding="utf-8"))
