"""Incident record ⇄ STIX 2.1 bundle translation.

Encoding maps one incident to: an intrusion-set, a threat-actor, one
location per country, one attack-pattern per technique, and the uses /
attributed-to / targets relationships tying them together. Catalog
attack-patterns are embedded verbatim (original timestamps and authorship
preserved); techniques absent from the catalog are synthesized from the
taxonomy and attributed to this platform's own identity object.

With an injected fixed clock, encoding is fully deterministic: same record
in, byte-identical canonical bundle out.
"""

from __future__ import annotations

import copy
import json
from datetime import datetime, timezone
from typing import Callable, Optional, Union

from disinfox.errors import CodecError, IncidentValidationError, TechniqueNotFound
from disinfox.incidents import (
    ACTOR_TYPES,
    MANDATORY_LABELS,
    ActorRef,
    CountryRef,
    IncidentRecord,
    SourceRef,
    new_incident,
    normalize,
)
from disinfox.stix.catalog import AttackPatternCatalog, external_technique_id
from disinfox.stix.ids import deterministic_id, relationship_id
from disinfox.stix.validation import ValidationReport, validate_bundle
from disinfox.taxonomy import KILL_CHAIN_NAME, REFERENCE_URL_TEMPLATE, Taxonomy
from disinfox.timestamps import format_timestamp, parse_timestamp

SPEC_VERSION = "2.1"
PLATFORM_IDENTITY_NAME = "disinfox"
SOURCE_REFERENCE_NAME = "report"

Clock = Callable[[], datetime]


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


def platform_identity_id() -> str:
    return deterministic_id("identity", PLATFORM_IDENTITY_NAME)


def _synthesize_attack_pattern(technique_id: str, taxonomy: Taxonomy, now: str) -> dict:
    technique = taxonomy.lookup_technique(technique_id)
    kill_chain_name, slug = taxonomy.kill_chain_phase_of(technique_id)
    return {
        "type": "attack-pattern",
        "spec_version": SPEC_VERSION,
        "id": deterministic_id("attack-pattern", technique_id),
        "created": now,
        "modified": now,
        "created_by_ref": platform_identity_id(),
        "name": technique.name,
        "description": technique.description,
        "external_references": [
            {
                "source_name": KILL_CHAIN_NAME,
                "external_id": technique.id,
                "url": REFERENCE_URL_TEMPLATE.format(id=technique.id),
            }
        ],
        "kill_chain_phases": [
            {"kill_chain_name": kill_chain_name, "phase_name": slug}
        ],
    }


def encode_incident(
    record: IncidentRecord,
    taxonomy: Taxonomy,
    catalog: Optional[AttackPatternCatalog] = None,
    clock: Optional[Clock] = None,
) -> dict:
    """Encode one incident record as a STIX bundle (plain dict).

    Every technique must resolve through the catalog (preferred) or the
    taxonomy; otherwise :class:`TechniqueNotFound` is raised. Freshly minted
    objects take created = modified = the clock's now; catalog
    attack-patterns keep their original timestamps.
    """
    record = normalize(record)
    now = format_timestamp(parse_timestamp((clock or _utc_now)()))

    intrusion_set_id = deterministic_id("intrusion-set", record.name)
    intrusion_set = {
        "type": "intrusion-set",
        "spec_version": SPEC_VERSION,
        "id": intrusion_set_id,
        "created": now,
        "modified": now,
        "name": record.name,
        "description": record.description,
        "first_seen": format_timestamp(record.first_seen),
        "labels": list(record.labels),
    }
    if record.sources:
        intrusion_set["external_references"] = [
            {
                "source_name": SOURCE_REFERENCE_NAME,
                "url": source.url,
                **({"description": source.title} if source.title else {}),
            }
            for source in record.sources
        ]

    threat_actor = {
        "type": "threat-actor",
        "spec_version": SPEC_VERSION,
        "id": deterministic_id("threat-actor", record.actor.name),
        "created": now,
        "modified": now,
        "name": record.actor.name,
        "labels": ["threat-actor"],
        "threat_actor_types": [record.actor.actor_type],
    }

    locations = [
        {
            "type": "location",
            "spec_version": SPEC_VERSION,
            "id": deterministic_id("location", country.name),
            "created": now,
            "modified": now,
            "name": country.name,
            "country": country.name,
        }
        for country in record.countries
    ]

    attack_patterns = []
    synthesized = False
    for technique_id in record.techniques:
        from_catalog = catalog.get(technique_id) if catalog is not None else None
        if from_catalog is not None:
            pattern = copy.deepcopy(from_catalog)
            pattern.setdefault("spec_version", SPEC_VERSION)
        else:
            pattern = _synthesize_attack_pattern(technique_id, taxonomy, now)
            synthesized = True
        attack_patterns.append(pattern)

    objects = [intrusion_set, threat_actor, *locations, *attack_patterns]
    if synthesized:
        objects.append(
            {
                "type": "identity",
                "spec_version": SPEC_VERSION,
                "id": platform_identity_id(),
                "created": now,
                "modified": now,
                "name": PLATFORM_IDENTITY_NAME,
                "identity_class": "system",
            }
        )

    def _relationship(relationship_type: str, target_ref: str) -> dict:
        return {
            "type": "relationship",
            "spec_version": SPEC_VERSION,
            "id": relationship_id(relationship_type, intrusion_set_id, target_ref),
            "created": now,
            "modified": now,
            "relationship_type": relationship_type,
            "source_ref": intrusion_set_id,
            "target_ref": target_ref,
        }

    objects.extend(_relationship("uses", pattern["id"]) for pattern in attack_patterns)
    objects.append(_relationship("attributed-to", threat_actor["id"]))
    objects.extend(_relationship("targets", location["id"]) for location in locations)

    return {
        "type": "bundle",
        "id": deterministic_id("bundle", intrusion_set_id),
        "objects": objects,
    }


def _decode_record(
    intrusion_set: dict,
    by_id: dict[str, dict],
    relationships: list[dict],
    report: ValidationReport,
) -> Optional[IncidentRecord]:
    incident_id = intrusion_set.get("id", "intrusion-set")

    actor: Optional[ActorRef] = None
    countries: list[CountryRef] = []
    techniques: list[str] = []
    for relationship in relationships:
        if relationship.get("source_ref") != incident_id:
            continue
        target = by_id.get(relationship.get("target_ref"))
        if target is None:
            continue  # dangling refs are already report errors
        relationship_type = relationship.get("relationship_type")
        if relationship_type == "attributed-to" and target.get("type") == "threat-actor":
            actor_types = target.get("threat_actor_types") or []
            actor_type = actor_types[0] if actor_types else "unknown"
            if actor_type not in ACTOR_TYPES:
                report.warn(
                    target.get("id", "threat-actor"),
                    "actor-type",
                    f"unrecognized actor type {actor_type!r}, using 'unknown'",
                )
                actor_type = "unknown"
            actor = ActorRef(name=target.get("name") or "", actor_type=actor_type)
        elif relationship_type == "targets" and target.get("type") == "location":
            countries.append(CountryRef(target.get("country") or target.get("name") or ""))
        elif relationship_type == "uses" and target.get("type") == "attack-pattern":
            technique_id = external_technique_id(target)
            if technique_id is None:
                report.error(
                    target.get("id", "attack-pattern"),
                    "technique-ref",
                    "attack-pattern lacks a mitre-attack external_id",
                )
            else:
                techniques.append(technique_id)

    if actor is None:
        report.error(incident_id, "record", "no attributed-to threat-actor found")
        return None

    labels = intrusion_set.get("labels") or []
    sources = [
        SourceRef(url=reference["url"], title=reference.get("description"))
        for reference in intrusion_set.get("external_references") or []
        if isinstance(reference, dict)
        and reference.get("source_name") != KILL_CHAIN_NAME
        and reference.get("url")
    ]
    try:
        return new_incident(
            name=intrusion_set.get("name") or "",
            description=intrusion_set.get("description") or "",
            first_seen=intrusion_set.get("first_seen") or intrusion_set.get("created") or "",
            actor=actor,
            countries=countries,
            techniques=techniques,
            sources=sources,
            labels=[label for label in labels if label not in MANDATORY_LABELS],
        )
    except IncidentValidationError as exc:
        for field_name, message in exc.field_errors:
            report.error(incident_id, "record", f"{field_name}: {message}")
        return None


def decode_bundle(
    document: Union[bytes, str, dict],
) -> tuple[list[IncidentRecord], ValidationReport]:
    """Decode every incident in a bundle back to domain records.

    Raises :class:`CodecError` only on structural failure (malformed JSON or
    not a bundle). Everything else, including dangling references and
    per-record reconstruction failures, lands in the report; salvageable
    records are still returned. Techniques are accepted on id syntax alone,
    so records from a peer with a richer taxonomy survive the trip.
    """
    if isinstance(document, (bytes, str)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise CodecError(f"malformed JSON: {exc}") from None

    report = validate_bundle(document)
    if not isinstance(document, dict) or not isinstance(document.get("objects"), list):
        raise CodecError("document is not a STIX bundle")

    objects = [obj for obj in document["objects"] if isinstance(obj, dict)]
    by_id = {obj["id"]: obj for obj in objects if isinstance(obj.get("id"), str)}
    relationships = [obj for obj in objects if obj.get("type") == "relationship"]

    records = []
    for obj in objects:
        if obj.get("type") == "intrusion-set":
            record = _decode_record(obj, by_id, relationships, report)
            if record is not None:
                records.append(record)
    return records, report
