"""Public HTTP exchange API: browse, submit, export, and feed endpoints.

Reads are open; writes require an ``X-API-Key`` header matching a
configured key (compared in constant time). Every non-2xx response body is
a single ErrorBody: ``{"code", "message", "details"?}``.
"""

from __future__ import annotations

import hmac
import json
import os
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException
from starlette.staticfiles import StaticFiles

from disinfox import __version__
from disinfox.errors import (
    ConfigError,
    CsvHeaderError,
    IncidentValidationError,
    NotFoundError,
    StoreError,
    TechniqueNotFound,
)
from disinfox.incidents import from_json, to_json
from disinfox.ingest import commit_incident, ingest_csv
from disinfox.stix.canonical import canonical_bundle_bytes
from disinfox.stix.catalog import AttackPatternCatalog
from disinfox.stix.ids import is_stix_id
from disinfox.store import MAX_FEED_LIMIT, MAX_PAGE_SIZE, Store
from disinfox.taxonomy import Taxonomy

WRITE_ROLES = frozenset({"submitter", "admin"})


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, details: Optional[list] = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details

    def body(self) -> dict:
        payload = {"code": self.code, "message": self.message}
        if self.details is not None:
            payload["details"] = self.details
        return payload


def load_api_keys(path: str) -> dict[str, str]:
    """Read the keys file: a JSON array of {"token", "role"} objects."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read API keys file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"API keys file {path} is not valid JSON: {exc}") from None
    if isinstance(document, dict):
        document = document.get("keys", [])
    if not isinstance(document, list):
        raise ConfigError(f"API keys file {path} must hold a JSON array")
    keys: dict[str, str] = {}
    for index, entry in enumerate(document):
        if not isinstance(entry, dict) or not entry.get("token"):
            raise ConfigError(f"API keys file {path}: entry {index} lacks a token")
        role = entry.get("role", "submitter")
        if role not in WRITE_ROLES:
            raise ConfigError(f"API keys file {path}: entry {index} has unknown role {role!r}")
        keys[str(entry["token"])] = role
    return keys


def _check_key(request: Request, keys: dict[str, str]) -> str:
    presented = request.headers.get("X-API-Key")
    if not presented:
        raise ApiError(401, "unauthorized", "missing X-API-Key header")
    for token, role in keys.items():
        if hmac.compare_digest(presented.encode(), token.encode()) and role in WRITE_ROLES:
            return role
    raise ApiError(401, "unauthorized", "unrecognized API key")


def _int_param(raw: Optional[str], name: str, default: int, minimum: int, maximum: int) -> int:
    if raw is None or raw == "":
        value = default
    else:
        try:
            value = int(raw)
        except ValueError:
            raise ApiError(400, "invalid-paging", f"{name} must be an integer") from None
    if not minimum <= value <= maximum:
        raise ApiError(
            400, "invalid-paging", f"{name} must be between {minimum} and {maximum}"
        )
    return value


def create_app(
    store: Store,
    taxonomy: Taxonomy,
    catalog: Optional[AttackPatternCatalog] = None,
    api_keys: Optional[dict[str, str]] = None,
    cors_origins: Optional[list[str]] = None,
    ui_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="disinfox", version=__version__, docs_url=None, redoc_url=None)
    keys = dict(api_keys or {})

    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins
        or [o.strip() for o in os.environ.get("DISINFOX_CORS_ORIGINS", "*").split(",")],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.taxonomy = taxonomy
    app.state.catalog = catalog

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        code = {404: "not-found", 405: "method-not-allowed"}.get(exc.status_code, "http-error")
        return JSONResponse(status_code=exc.status_code, content={"code": code, "message": str(exc.detail)})

    @app.exception_handler(RequestValidationError)
    async def _request_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"code": "invalid-request", "message": str(exc)}
        )

    @app.exception_handler(StoreError)
    async def _store_error(request: Request, exc: StoreError):
        return JSONResponse(status_code=500, content={"code": "storage", "message": str(exc)})

    @app.get("/api/v1/health")
    async def health():
        return {
            "status": "ok",
            "version": __version__,
            "incident_count": store.incident_count,
            "head_seq": store.head_seq,
        }

    @app.get("/api/v1/taxonomy")
    async def taxonomy_document():
        return taxonomy.to_document()

    @app.get("/api/v1/incidents")
    async def list_incidents(
        request: Request,
        page: Optional[str] = None,
        page_size: Optional[str] = None,
        actor: Optional[str] = None,
        country: Optional[str] = None,
        technique: Optional[str] = None,
    ):
        page_number = _int_param(page, "page", 1, 1, 10**9)
        size = _int_param(page_size, "page_size", 50, 1, MAX_PAGE_SIZE)
        items, total = store.list_incidents(
            page=page_number, page_size=size, actor=actor, country=country, technique=technique
        )
        return {
            "items": [item.to_dict() for item in items],
            "total": total,
            "page": page_number,
            "page_size": size,
        }

    @app.get("/api/v1/incidents/{incident_id}/stix")
    async def export_incident(incident_id: str):
        if not is_stix_id(incident_id):
            raise ApiError(400, "invalid-id", f"malformed STIX id {incident_id!r}")
        try:
            bundle = store.bundle_for(incident_id)
        except NotFoundError as exc:
            raise ApiError(404, "not-found", str(exc)) from None
        return Response(content=canonical_bundle_bytes(bundle), media_type="application/json")

    @app.post("/api/v1/incidents")
    async def submit_incident(request: Request):
        _check_key(request, keys)
        try:
            payload = json.loads(await request.body() or b"null")
        except json.JSONDecodeError as exc:
            raise ApiError(400, "invalid-json", f"request body is not JSON: {exc}") from None
        try:
            record = from_json(payload, taxonomy=taxonomy, strict=True)
        except IncidentValidationError as exc:
            raise ApiError(
                422,
                "validation",
                "incident failed validation",
                details=[
                    {"field": field, "message": message} for field, message in exc.field_errors
                ],
            ) from None
        try:
            incident_id, disposition = commit_incident(record, store, taxonomy, catalog=catalog)
        except TechniqueNotFound as exc:
            raise ApiError(
                422, "validation", "incident failed validation",
                details=[{"field": "techniques", "message": str(exc)}],
            ) from None
        body = {"id": incident_id, "disposition": disposition, "incident": to_json(record)}
        status = 201 if disposition == "added" else 200
        headers = {"Location": f"/api/v1/incidents/{incident_id}/stix"} if status == 201 else None
        return JSONResponse(status_code=status, content=body, headers=headers)

    @app.post("/api/v1/incidents/bulk")
    async def bulk_ingest(request: Request):
        _check_key(request, keys)
        raw = await request.body()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ApiError(400, "encoding", f"body is not UTF-8: {exc}") from None
        try:
            report = ingest_csv(text, store, taxonomy, catalog=catalog)
        except CsvHeaderError as exc:
            raise ApiError(400, "csv-header", str(exc)) from None
        return report.to_dict()

    @app.get("/api/v1/stix/objects")
    async def feed(since_seq: Optional[str] = None, limit: Optional[str] = None):
        cursor = _int_param(since_seq, "since_seq", 0, 0, 2**62)
        page_limit = _int_param(limit, "limit", 500, 1, MAX_FEED_LIMIT)
        page = store.objects_since(cursor, page_limit)
        return {
            "objects": [row.to_dict() for row in page.objects],
            "next_seq": page.next_seq,
            "more": page.more,
        }

    if ui_dir:
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
