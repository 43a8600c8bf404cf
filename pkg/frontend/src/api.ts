/**
 * Thin typed client for the exchange API.
 *
 * The fetch implementation is injectable so tests can run without a
 * network; every non-2xx response is raised as an ApiError carrying the
 * server's ErrorBody.
 */

import type {
  BulkReport,
  ErrorBody,
  HealthInfo,
  IncidentFormModel,
  IncidentListFilters,
  IncidentPage,
  StixBundle,
  SubmitResult,
  TaxonomyDocument,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly details?: { field: string; message: string }[];

  constructor(status: number, body: ErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.details = body.details;
  }
}

async function errorBodyOf(response: Response): Promise<ErrorBody> {
  try {
    const body = (await response.json()) as ErrorBody;
    if (body && typeof body.code === "string" && typeof body.message === "string") {
      return body;
    }
  } catch {
    // fall through to the synthesized body
  }
  return { code: `http-${response.status}`, message: response.statusText || "request failed" };
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await errorBodyOf(response));
    }
    return response;
  }

  async health(): Promise<HealthInfo> {
    return (await this.request("/api/v1/health")).json();
  }

  async taxonomy(): Promise<TaxonomyDocument> {
    return (await this.request("/api/v1/taxonomy")).json();
  }

  async listIncidents(filters: IncidentListFilters = {}): Promise<IncidentPage> {
    const params = new URLSearchParams();
    if (filters.page !== undefined) params.set("page", String(filters.page));
    if (filters.page_size !== undefined) params.set("page_size", String(filters.page_size));
    if (filters.actor) params.set("actor", filters.actor);
    if (filters.country) params.set("country", filters.country);
    if (filters.technique) params.set("technique", filters.technique);
    const query = params.toString();
    return (await this.request(`/api/v1/incidents${query ? `?${query}` : ""}`)).json();
  }

  /** Canonical bundle exactly as served; kept as text so downloads stay byte-identical. */
  async exportIncidentRaw(incidentId: string): Promise<string> {
    return (await this.request(`/api/v1/incidents/${incidentId}/stix`)).text();
  }

  async exportIncident(incidentId: string): Promise<StixBundle> {
    return JSON.parse(await this.exportIncidentRaw(incidentId));
  }

  async submitIncident(incident: IncidentFormModel, apiKey: string): Promise<SubmitResult> {
    const response = await this.request("/api/v1/incidents", {
      method: "POST",
      headers: { "Content-Type": "application/json", "X-API-Key": apiKey },
      body: JSON.stringify(incident),
    });
    return response.json();
  }

  async bulkIngest(csvText: string, apiKey: string): Promise<BulkReport> {
    const response = await this.request("/api/v1/incidents/bulk", {
      method: "POST",
      headers: { "Content-Type": "text/csv", "X-API-Key": apiKey },
      body: csvText,
    });
    return response.json();
  }
}
