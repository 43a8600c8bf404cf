/**
 * HTML renderers for every page fragment.
 *
 * All functions return markup strings built from API payloads without
 * re-deriving anything the server already computed, which keeps the views
 * testable against response fixtures.
 */

import { renderGraphSvg } from "./graph.js";
import type {
  BulkReport,
  IncidentPage,
  IncidentSummary,
  StixBundle,
  StixObject,
  TaxonomyDocument,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderErrorBanner(code: string, message: string): string {
  return (
    `<div class="banner banner-error" role="alert">` +
    `<strong>${escapeHtml(code)}</strong> ${escapeHtml(message)}` +
    `<button class="banner-dismiss" data-action="dismiss-banner" type="button">×</button></div>`
  );
}

export function renderNotFound(incidentId: string): string {
  return (
    `<section class="not-found"><h2>Not found</h2>` +
    `<p>No incident with id <code>${escapeHtml(incidentId)}</code>.</p>` +
    `<p><a href="#/incidents">Back to the list</a></p></section>`
  );
}

function dateOnly(timestamp: string): string {
  return timestamp.split("T")[0];
}

function renderIncidentRow(item: IncidentSummary): string {
  const countries = item.countries.map((c) => escapeHtml(c)).join(", ");
  return (
    `<tr data-id="${escapeHtml(item.id)}">` +
    `<td><a href="#/incidents/${escapeHtml(item.id)}">${escapeHtml(item.name)}</a></td>` +
    `<td>${escapeHtml(item.actor)}</td>` +
    `<td>${countries}</td>` +
    `<td class="numeric">${item.technique_count}</td>` +
    `<td>${escapeHtml(dateOnly(item.first_seen))}</td></tr>`
  );
}

/** The incident table plus pager; row set mirrors the API page exactly. */
export function renderIncidentList(page: IncidentPage): string {
  const pageCount = Math.max(Math.ceil(page.total / page.page_size), 1);
  const rows = page.items.map(renderIncidentRow).join("");
  const body =
    page.items.length > 0
      ? rows
      : `<tr><td colspan="5" class="empty">No incidents match the current filters.</td></tr>`;
  return (
    `<table class="incident-table"><thead><tr>` +
    `<th>Name</th><th>Actor</th><th>Countries</th><th>Techniques</th><th>First seen</th>` +
    `</tr></thead><tbody>${body}</tbody></table>` +
    `<nav class="pager" data-page="${page.page}" data-page-count="${pageCount}">` +
    `<button data-action="prev-page" type="button"${page.page <= 1 ? " disabled" : ""}>Prev</button>` +
    `<span>page ${page.page} of ${pageCount} (${page.total} incidents)</span>` +
    `<button data-action="next-page" type="button"${page.page >= pageCount ? " disabled" : ""}>Next</button>` +
    `</nav>`
  );
}

function findIncident(bundle: StixBundle): StixObject | undefined {
  return bundle.objects.find((object) => object.type === "intrusion-set");
}

interface PhaseSection {
  phase: string;
  tacticName: string;
  patterns: StixObject[];
}

/**
 * Group the bundle's attack-patterns by DISARM phase and tactic using the
 * kill-chain slug each pattern carries; patterns whose slug is not in the
 * taxonomy land in a trailing "OTHER" section rather than being dropped.
 */
export function groupPatternsByPhase(
  bundle: StixBundle,
  taxonomy: TaxonomyDocument,
): PhaseSection[] {
  const bySlug = new Map(taxonomy.tactics.map((tactic) => [tactic.kill_chain_slug, tactic]));
  const sections = new Map<string, PhaseSection>();
  for (const object of bundle.objects) {
    if (object.type !== "attack-pattern") continue;
    const slug = object.kill_chain_phases?.[0]?.phase_name ?? "";
    const tactic = bySlug.get(slug);
    const key = tactic ? `${tactic.phase}|${tactic.name}` : "OTHER|";
    let section = sections.get(key);
    if (!section) {
      section = { phase: tactic?.phase ?? "OTHER", tacticName: tactic?.name ?? "", patterns: [] };
      sections.set(key, section);
    }
    section.patterns.push(object);
  }
  const order = ["PLAN", "PREPARE", "EXECUTE", "ASSESS", "OTHER"];
  return [...sections.values()].sort(
    (a, b) =>
      order.indexOf(a.phase) - order.indexOf(b.phase) || a.tacticName.localeCompare(b.tacticName),
  );
}

function externalId(object: StixObject): string {
  for (const reference of object.external_references ?? []) {
    if (reference.external_id) return reference.external_id;
  }
  return "";
}

/** Detail page: fields, country chips, techniques grouped by phase, graph, export button. */
export function renderIncidentDetail(bundle: StixBundle, taxonomy: TaxonomyDocument): string {
  const incident = findIncident(bundle);
  if (!incident) {
    return renderErrorBanner("bundle", "bundle holds no incident");
  }
  const actor = bundle.objects.find((object) => object.type === "threat-actor");
  const countries = bundle.objects.filter((object) => object.type === "location");

  const chips = countries
    .map((country) => `<span class="chip chip-country">${escapeHtml(country.name ?? "")}</span>`)
    .join("");
  const actorLine = actor
    ? `<span class="chip chip-actor">${escapeHtml(actor.name ?? "")}</span>`
    : "";

  const sections = groupPatternsByPhase(bundle, taxonomy)
    .map((section) => {
      const label =
        section.phase === "OTHER"
          ? "Other"
          : `${section.phase}${section.tacticName ? ` · ${section.tacticName}` : ""}`;
      const items = section.patterns
        .map(
          (pattern) =>
            `<li><code>${escapeHtml(externalId(pattern))}</code> ${escapeHtml(pattern.name ?? "")}</li>`,
        )
        .join("");
      return `<section class="phase-section"><h3>${escapeHtml(label)}</h3><ul>${items}</ul></section>`;
    })
    .join("");

  const sourceLinks = (incident.external_references ?? [])
    .filter((reference) => reference.url)
    .map(
      (reference) =>
        `<li><a href="${escapeHtml(reference.url ?? "")}" rel="noopener">` +
        `${escapeHtml(reference.url ?? "")}</a></li>`,
    )
    .join("");

  return (
    `<article class="incident-detail" data-id="${escapeHtml(incident.id)}">` +
    `<h2>${escapeHtml(incident.name ?? "")}</h2>` +
    `<p class="meta">first seen ${escapeHtml(dateOnly(String(incident.first_seen ?? "")))}` +
    ` · ${actorLine} ${chips}</p>` +
    `<p class="description">${escapeHtml(incident.description ?? "")}</p>` +
    (sourceLinks ? `<h3>Sources</h3><ul class="sources">${sourceLinks}</ul>` : "") +
    `<div class="detail-columns"><div class="techniques">${sections}</div>` +
    `<figure class="graph-panel">${renderGraphSvg(bundle, { seed: 7 })}` +
    `<figcaption>${bundle.objects.length} STIX objects</figcaption></figure></div>` +
    `<p><button data-action="export-bundle" data-id="${escapeHtml(incident.id)}" type="button">` +
    `Download STIX bundle</button></p></article>`
  );
}

export function renderBulkReport(report: BulkReport): string {
  const rows = report.row_errors
    .map(
      (error) =>
        `<li>row ${error.row}: ${escapeHtml(error.message)}</li>`,
    )
    .join("");
  return (
    `<div class="bulk-report">` +
    `<p>added ${report.added}, updated ${report.updated}, skipped ${report.skipped}, ` +
    `errors ${report.row_errors.length}</p>` +
    (rows ? `<ul class="row-errors">${rows}</ul>` : "") +
    `</div>`
  );
}
