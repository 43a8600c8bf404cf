"""Domain-level disinformation incident records.

Wire-format independent: validation, normalization, and semantic equality
live here; STIX translation lives in :mod:`disinfox.stix`. Records are
immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime

from disinfox.errors import IncidentValidationError, InvalidIdentifier, TechniqueNotFound
from disinfox.taxonomy import Taxonomy, validate_technique_id
from disinfox.timestamps import parse_timestamp

ACTOR_TYPES = frozenset({"nation-state", "organization", "group", "individual", "unknown"})
MANDATORY_LABELS = ("incident", "disinformation")


@dataclass(frozen=True)
class ActorRef:
    name: str
    actor_type: str = "unknown"


@dataclass(frozen=True)
class CountryRef:
    name: str


@dataclass(frozen=True)
class SourceRef:
    url: str
    title: str | None = None


@dataclass(frozen=True)
class IncidentRecord:
    name: str
    description: str
    first_seen: datetime
    actor: ActorRef
    countries: tuple[CountryRef, ...]
    techniques: tuple[str, ...]
    labels: tuple[str, ...] = MANDATORY_LABELS
    sources: tuple[SourceRef, ...] = field(default_factory=tuple)


def _normalize_labels(labels) -> tuple[str, ...]:
    extras = sorted({label.strip() for label in labels if label and label.strip()} - set(MANDATORY_LABELS))
    return MANDATORY_LABELS + tuple(extras)


def _dedupe_countries(countries: list[CountryRef]) -> tuple[CountryRef, ...]:
    # case-insensitive dedupe keeps the first spelling seen, then sorts
    seen: dict[str, CountryRef] = {}
    for country in countries:
        seen.setdefault(country.name.casefold(), country)
    return tuple(sorted(seen.values(), key=lambda c: c.name.casefold()))


def new_incident(
    name: str,
    description: str,
    first_seen,
    actor: ActorRef,
    countries,
    techniques,
    sources=(),
    labels=(),
    taxonomy: Taxonomy | None = None,
    strict: bool = False,
) -> IncidentRecord:
    """Validate and normalize a new incident record.

    All field failures are collected and raised together as a single
    :class:`IncidentValidationError`. With ``strict=True`` every technique
    must also exist in ``taxonomy``; otherwise only the id syntax is checked.
    """
    errors: list[tuple[str, str]] = []

    name = (name or "").strip()
    if not name:
        errors.append(("name", "must be non-empty"))
    description = (description or "").strip()
    if not description:
        errors.append(("description", "must be non-empty"))

    try:
        first_seen_utc = parse_timestamp(first_seen)
    except ValueError as exc:
        errors.append(("first_seen", str(exc)))
        first_seen_utc = None

    actor_name = (actor.name or "").strip() if actor else ""
    actor_type = (actor.actor_type or "").strip() if actor else ""
    if not actor_name:
        errors.append(("actor.name", "must be non-empty"))
    if actor_type not in ACTOR_TYPES:
        errors.append(("actor.actor_type", f"must be one of {sorted(ACTOR_TYPES)}"))

    clean_countries: list[CountryRef] = []
    for index, country in enumerate(countries or ()):
        country_name = (country.name if isinstance(country, CountryRef) else str(country)).strip()
        if not country_name:
            errors.append((f"countries[{index}]", "must be non-empty"))
        else:
            clean_countries.append(CountryRef(country_name))

    clean_techniques: list[str] = []
    for index, technique in enumerate(techniques or ()):
        try:
            tid = validate_technique_id(technique)
        except InvalidIdentifier as exc:
            errors.append((f"techniques[{index}]", str(exc)))
            continue
        if strict and taxonomy is not None and not taxonomy.has_technique(tid):
            errors.append((f"techniques[{index}]", f"technique {tid} not in taxonomy"))
            continue
        clean_techniques.append(tid)
    if not (techniques or ()):
        errors.append(("techniques", "at least one technique required"))

    clean_sources: list[SourceRef] = []
    for index, source in enumerate(sources or ()):
        url = (source.url or "").strip()
        if not url:
            errors.append((f"sources[{index}].url", "must be non-empty"))
            continue
        title = source.title.strip() if source.title and source.title.strip() else None
        clean_sources.append(SourceRef(url=url, title=title))

    if errors:
        raise IncidentValidationError(errors)

    return IncidentRecord(
        name=name,
        description=description,
        first_seen=first_seen_utc,
        actor=ActorRef(name=actor_name, actor_type=actor_type),
        countries=_dedupe_countries(clean_countries),
        techniques=tuple(sorted(set(clean_techniques))),
        labels=_normalize_labels(labels),
        sources=tuple(clean_sources),
    )


def normalize(record: IncidentRecord) -> IncidentRecord:
    """Trim text fields, dedupe and sort techniques and countries. Idempotent."""
    return replace(
        record,
        name=record.name.strip(),
        description=record.description.strip(),
        first_seen=parse_timestamp(record.first_seen),
        actor=ActorRef(record.actor.name.strip(), record.actor.actor_type.strip()),
        countries=_dedupe_countries([CountryRef(c.name.strip()) for c in record.countries]),
        techniques=tuple(sorted({t.strip() for t in record.techniques})),
        labels=_normalize_labels(record.labels),
        sources=tuple(
            SourceRef(s.url.strip(), s.title.strip() if s.title else None) for s in record.sources
        ),
    )


def semantic_equal(a: IncidentRecord, b: IncidentRecord) -> bool:
    """True iff the normalized records agree on every field.

    Countries and sources compare unordered; country names compare
    case-insensitively because they already share a deterministic id.
    """
    na, nb = normalize(a), normalize(b)
    return (
        na.name == nb.name
        and na.description == nb.description
        and na.first_seen == nb.first_seen
        and na.actor == nb.actor
        and sorted(c.name.casefold() for c in na.countries)
            == sorted(c.name.casefold() for c in nb.countries)
        and na.techniques == nb.techniques
        and na.labels == nb.labels
        and sorted(na.sources, key=lambda s: (s.url, s.title or "")) ==
            sorted(nb.sources, key=lambda s: (s.url, s.title or ""))
    )


def resolve_techniques(record: IncidentRecord, taxonomy: Taxonomy) -> None:
    """Strict check that every technique id resolves; raises on the first miss."""
    for technique in record.techniques:
        if not taxonomy.has_technique(technique):
            raise TechniqueNotFound(f"technique {technique} not in taxonomy")


def to_json(record: IncidentRecord) -> dict:
    """Domain JSON representation (API POST body and web UI shape)."""
    from disinfox.timestamps import format_timestamp

    return {
        "name": record.name,
        "description": record.description,
        "first_seen": format_timestamp(record.first_seen),
        "actor": {"name": record.actor.name, "actor_type": record.actor.actor_type},
        "countries": [c.name for c in record.countries],
        "techniques": list(record.techniques),
        "labels": list(record.labels),
        "sources": [
            {"url": s.url, **({"title": s.title} if s.title else {})} for s in record.sources
        ],
    }


def from_json(payload: dict, taxonomy: Taxonomy | None = None, strict: bool = False) -> IncidentRecord:
    """Build a validated record from the domain JSON representation.

    Shape problems and field failures are aggregated into one
    :class:`IncidentValidationError` so API clients see every issue at once.
    """
    if not isinstance(payload, dict):
        raise IncidentValidationError([("body", "must be a JSON object")])

    shape_errors: list[tuple[str, str]] = []
    actor_raw = payload.get("actor")
    if actor_raw is not None and not isinstance(actor_raw, dict):
        shape_errors.append(("actor", "must be an object"))
        actor_raw = None
    actor = ActorRef(
        name=str((actor_raw or {}).get("name") or ""),
        actor_type=str((actor_raw or {}).get("actor_type") or ""),
    )

    def _string_list(field_name: str) -> list:
        value = payload.get(field_name) or []
        if not isinstance(value, list):
            shape_errors.append((field_name, "must be an array"))
            return []
        return value

    sources = []
    for index, entry in enumerate(_string_list("sources")):
        if isinstance(entry, dict):
            sources.append(SourceRef(url=str(entry.get("url") or ""), title=entry.get("title")))
        else:
            shape_errors.append((f"sources[{index}]", "must be an object"))

    try:
        record = new_incident(
            name=str(payload.get("name") or ""),
            description=str(payload.get("description") or ""),
            first_seen=payload.get("first_seen") or "",
            actor=actor,
            countries=[CountryRef(str(c)) for c in _string_list("countries")],
            techniques=[str(t) for t in _string_list("techniques")],
            sources=sources,
            labels=[str(label) for label in _string_list("labels")],
            taxonomy=taxonomy,
            strict=strict,
        )
    except IncidentValidationError as exc:
        raise IncidentValidationError(shape_errors + exc.field_errors) from None
    if shape_errors:
        raise IncidentValidationError(shape_errors)
    return record
