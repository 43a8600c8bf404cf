/**
 * Browser entry point: hash routing and DOM wiring.
 *
 * State lives in the URL hash and sessionStorage (API key) only; every
 * displayed fact comes from an API payload.
 */

import { ApiClient, ApiError } from "./api.js";
import { groupTaxonomy, renderTechniquePicker } from "./taxonomy-view.js";
import type { IncidentFormModel, IncidentListFilters, TaxonomyDocument } from "./types.js";
import { mapServerDetails, validateIncidentForm, ACTOR_TYPES } from "./validation.js";
import {
  escapeHtml,
  renderBulkReport,
  renderErrorBanner,
  renderIncidentDetail,
  renderIncidentList,
  renderNotFound,
} from "./views.js";

export type Route =
  | { page: "list"; filters: IncidentListFilters }
  | { page: "detail"; id: string }
  | { page: "submit" }
  | { page: "upload" };

/** Parse the location hash into a route; unknown hashes fall back to the list. */
export function parseRoute(hash: string): Route {
  const trimmed = hash.replace(/^#\/?/, "");
  const [path, query = ""] = trimmed.split("?");
  if (path === "submit") return { page: "submit" };
  if (path === "upload") return { page: "upload" };
  const detail = /^incidents\/([^/]+)$/.exec(path);
  if (detail) return { page: "detail", id: detail[1] };

  const params = new URLSearchParams(query);
  const filters: IncidentListFilters = {};
  const page = Number(params.get("page"));
  if (Number.isInteger(page) && page > 0) filters.page = page;
  for (const key of ["actor", "country", "technique"] as const) {
    const value = params.get(key);
    if (value) filters[key] = value;
  }
  return { page: "list", filters };
}

export function routeToHash(route: Route): string {
  switch (route.page) {
    case "submit":
      return "#/submit";
    case "upload":
      return "#/upload";
    case "detail":
      return `#/incidents/${route.id}`;
    case "list": {
      const params = new URLSearchParams();
      if (route.filters.page && route.filters.page > 1) params.set("page", String(route.filters.page));
      for (const key of ["actor", "country", "technique"] as const) {
        const value = route.filters[key];
        if (value) params.set(key, value);
      }
      const query = params.toString();
      return `#/incidents${query ? `?${query}` : ""}`;
    }
  }
}

const API_KEY_STORAGE = "disinfox-api-key";

function apiBase(): string {
  const override = (globalThis as { DISINFOX_API_BASE?: string }).DISINFOX_API_BASE;
  return override ?? "";
}

class App {
  private readonly client = new ApiClient(apiBase());
  private readonly main: HTMLElement;
  private taxonomyDocument: TaxonomyDocument | null = null;
  private selectedTechniques = new Set<string>();

  constructor(root: Document) {
    this.main = root.getElementById("main")!;
    root.defaultView?.addEventListener("hashchange", () => void this.render());
    this.main.addEventListener("click", (event) => void this.onClick(event));
    this.main.addEventListener("submit", (event) => void this.onSubmit(event));
    this.main.addEventListener("change", (event) => this.onChange(event));
  }

  private get apiKey(): string {
    return sessionStorage.getItem(API_KEY_STORAGE) ?? "";
  }

  private banner(code: string, message: string): void {
    this.main.insertAdjacentHTML("afterbegin", renderErrorBanner(code, message));
  }

  private async taxonomy(): Promise<TaxonomyDocument> {
    if (!this.taxonomyDocument) {
      this.taxonomyDocument = await this.client.taxonomy();
    }
    return this.taxonomyDocument;
  }

  async render(): Promise<void> {
    const route = parseRoute(location.hash);
    try {
      switch (route.page) {
        case "list":
          await this.renderList(route.filters);
          break;
        case "detail":
          await this.renderDetail(route.id);
          break;
        case "submit":
          await this.renderSubmit();
          break;
        case "upload":
          this.renderUpload();
          break;
      }
    } catch (error) {
      if (error instanceof ApiError) {
        this.main.innerHTML = "";
        this.banner(error.code, error.message);
      } else {
        this.main.innerHTML = "";
        this.banner("network", String(error));
      }
    }
  }

  private async renderList(filters: IncidentListFilters): Promise<void> {
    const page = await this.client.listIncidents(filters);
    this.main.innerHTML =
      `<section class="list-page"><form class="filters" data-role="filters">` +
      `<input name="actor" placeholder="actor" value="${escapeHtml(filters.actor ?? "")}">` +
      `<input name="country" placeholder="country" value="${escapeHtml(filters.country ?? "")}">` +
      `<input name="technique" placeholder="technique id" value="${escapeHtml(filters.technique ?? "")}">` +
      `<button type="submit">Filter</button></form>` +
      renderIncidentList(page) +
      `</section>`;
  }

  private async renderDetail(incidentId: string): Promise<void> {
    try {
      const [bundle, taxonomy] = await Promise.all([
        this.client.exportIncident(incidentId),
        this.taxonomy(),
      ]);
      this.main.innerHTML = renderIncidentDetail(bundle, taxonomy);
    } catch (error) {
      if (error instanceof ApiError && (error.status === 404 || error.status === 400)) {
        this.main.innerHTML = renderNotFound(incidentId);
        return;
      }
      throw error;
    }
  }

  private async renderSubmit(): Promise<void> {
    const taxonomy = await this.taxonomy();
    const picker = renderTechniquePicker(groupTaxonomy(taxonomy), this.selectedTechniques);
    const options = ACTOR_TYPES.map(
      (type) => `<option value="${type}"${type === "unknown" ? " selected" : ""}>${type}</option>`,
    ).join("");
    this.main.innerHTML =
      `<form class="submit-form" data-role="submit-incident" novalidate>` +
      `<label>API key <input type="password" name="api_key" value="${escapeHtml(this.apiKey)}"></label>` +
      `<label>Name <input name="name" data-field="name"></label>` +
      `<label>Description <textarea name="description" data-field="description"></textarea></label>` +
      `<label>First seen <input name="first_seen" data-field="first_seen" placeholder="2022-06-20"></label>` +
      `<label>Actor <input name="actor_name" data-field="actor.name"></label>` +
      `<label>Actor type <select name="actor_type" data-field="actor.actor_type">${options}</select></label>` +
      `<label>Countries (one per line) <textarea name="countries"></textarea></label>` +
      `<label>Sources (one URL per line) <textarea name="sources"></textarea></label>` +
      `<div data-field="techniques">${picker}</div>` +
      `<p class="hint" data-role="techniques-hint" hidden>Select at least one technique.</p>` +
      `<button type="submit" data-role="submit-button">Submit incident</button>` +
      `<div data-role="form-errors"></div></form>`;
    this.syncSubmitState();
  }

  private renderUpload(): void {
    this.main.innerHTML =
      `<form class="upload-form" data-role="upload-csv">` +
      `<label>API key <input type="password" name="api_key" value="${escapeHtml(this.apiKey)}"></label>` +
      `<label>Incident CSV <textarea name="csv" rows="12" spellcheck="false"></textarea></label>` +
      `<button type="submit">Upload</button>` +
      `<div data-role="report"></div></form>`;
  }

  private collectForm(form: HTMLFormElement): IncidentFormModel {
    const data = new FormData(form);
    const lines = (name: string) =>
      String(data.get(name) ?? "")
        .split("\n")
        .map((line) => line.trim())
        .filter(Boolean);
    return {
      name: String(data.get("name") ?? ""),
      description: String(data.get("description") ?? ""),
      first_seen: String(data.get("first_seen") ?? ""),
      actor: {
        name: String(data.get("actor_name") ?? ""),
        actor_type: String(data.get("actor_type") ?? ""),
      },
      countries: lines("countries"),
      techniques: [...this.selectedTechniques].sort(),
      sources: lines("sources").map((url) => ({ url })),
    };
  }

  private showFieldErrors(form: HTMLFormElement, errors: Record<string, string>): void {
    for (const element of form.querySelectorAll(".field-error")) element.remove();
    for (const element of form.querySelectorAll("[data-field]")) {
      element.classList.remove("invalid");
    }
    for (const [field, message] of Object.entries(errors)) {
      const base = field.replace(/\[\d+\]/, "").replace(/\.url$/, "");
      const target = form.querySelector(`[data-field="${base}"]`) ?? form;
      target.classList.add("invalid");
      target.insertAdjacentHTML(
        "afterend",
        `<p class="field-error">${escapeHtml(field)}: ${escapeHtml(message)}</p>`,
      );
    }
  }

  private syncSubmitState(): void {
    const button = this.main.querySelector<HTMLButtonElement>('[data-role="submit-button"]');
    const hint = this.main.querySelector<HTMLElement>('[data-role="techniques-hint"]');
    if (!button || !hint) return;
    const empty = this.selectedTechniques.size === 0;
    button.disabled = empty;
    hint.hidden = !empty;
  }

  private onChange(event: Event): void {
    const input = event.target as HTMLInputElement;
    if (input.name === "techniques") {
      if (input.checked) this.selectedTechniques.add(input.value);
      else this.selectedTechniques.delete(input.value);
      this.syncSubmitState();
    }
  }

  private async onClick(event: Event): Promise<void> {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    const action = target.dataset.action;
    if (action === "dismiss-banner") {
      target.closest(".banner")?.remove();
    } else if (action === "export-bundle") {
      await this.downloadBundle(target.dataset.id ?? "");
    } else if (action === "prev-page" || action === "next-page") {
      const route = parseRoute(location.hash);
      if (route.page !== "list") return;
      const delta = action === "next-page" ? 1 : -1;
      const page = Math.max((route.filters.page ?? 1) + delta, 1);
      location.hash = routeToHash({ page: "list", filters: { ...route.filters, page } });
    }
  }

  /** Download exactly the bytes the API served; no client re-serialization. */
  private async downloadBundle(incidentId: string): Promise<void> {
    const raw = await this.client.exportIncidentRaw(incidentId);
    const blob = new Blob([raw], { type: "application/json" });
    const url = URL.createObjectURL(blob);
    const anchor = document.createElement("a");
    anchor.href = url;
    anchor.download = `${incidentId}.json`;
    anchor.click();
    URL.revokeObjectURL(url);
  }

  private async onSubmit(event: Event): Promise<void> {
    const form = event.target as HTMLFormElement;
    event.preventDefault();
    if (form.dataset.role === "filters") {
      const data = new FormData(form);
      location.hash = routeToHash({
        page: "list",
        filters: {
          actor: String(data.get("actor") ?? "") || undefined,
          country: String(data.get("country") ?? "") || undefined,
          technique: String(data.get("technique") ?? "") || undefined,
        },
      });
    } else if (form.dataset.role === "submit-incident") {
      await this.submitIncident(form);
    } else if (form.dataset.role === "upload-csv") {
      await this.uploadCsv(form);
    }
  }

  private rememberKey(form: HTMLFormElement): string {
    const key = String(new FormData(form).get("api_key") ?? "");
    sessionStorage.setItem(API_KEY_STORAGE, key);
    return key;
  }

  private async submitIncident(form: HTMLFormElement): Promise<void> {
    const key = this.rememberKey(form);
    const model = this.collectForm(form);
    const localErrors = validateIncidentForm(model);
    if (Object.keys(localErrors).length > 0) {
      this.showFieldErrors(form, localErrors);
      return;
    }
    try {
      const result = await this.client.submitIncident(model, key);
      this.selectedTechniques.clear();
      location.hash = routeToHash({ page: "detail", id: result.id });
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        this.showFieldErrors(form, mapServerDetails(error.details));
      } else if (error instanceof ApiError && error.status === 401) {
        this.banner(error.code, `${error.message} — check the API key`);
      } else if (error instanceof ApiError) {
        this.banner(error.code, error.message);
      } else {
        this.banner("network", `${String(error)} — submit again to retry`);
      }
    }
  }

  private async uploadCsv(form: HTMLFormElement): Promise<void> {
    const key = this.rememberKey(form);
    const csv = String(new FormData(form).get("csv") ?? "");
    const target = form.querySelector('[data-role="report"]')!;
    try {
      const report = await this.client.bulkIngest(csv, key);
      target.innerHTML = renderBulkReport(report);
    } catch (error) {
      if (error instanceof ApiError) {
        target.innerHTML = renderErrorBanner(error.code, error.message);
      } else {
        target.innerHTML = renderErrorBanner("network", String(error));
      }
    }
  }
}

if (typeof document !== "undefined" && document.getElementById("main")) {
  const app = new App(document);
  void app.render();
}
