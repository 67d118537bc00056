/**
 * Typed client for the hub's v1 HTTP API. The dashboard talks to the hub
 * exclusively through this module; there is no privileged side channel.
 */

export interface Session {
  token: string;
  principal_id: string;
  display_name: string;
  role: string;
  expires_at: number;
}

export interface SeriesInfo {
  series_id: string;
  device_token: string;
  label: string | null;
  metric: string;
  unit: string;
  scale: number;
  points: number;
  head: number | null;
}

export interface QueryFrame {
  series_id: string;
  metric: string;
  unit: string;
  points: [number, number][];
}

export interface Annotation {
  id: string;
  author: string;
  selector: string[] | null;
  t_from: number;
  t_to: number;
  text: string;
  created_at: number;
}

export interface ApprovalRequest {
  id: string;
  op: string;
  payload: Record<string, unknown>;
  requested_by: string;
  created_at: number;
  expires_at: number;
  approvals: string[];
  state: "pending" | "approved" | "executed" | "rejected" | "expired";
}

export interface ShareGrant {
  id: string;
  grantee: string;
  purpose: string;
  selector: string[] | null;
  t_from: number;
  t_to: number;
  max_resolution_ms: number;
  expires_at: number;
  revoked: boolean;
}

export interface RetentionTier {
  window_ms: number | null;
  keep_for_ms: number | null;
}

export interface RetentionPolicy {
  tiers: RetentionTier[];
}

export interface Principal {
  id: string;
  display_name: string;
  role: string;
  legacy_contact: boolean;
}

export interface HubStatus {
  instance_id: string;
  bootstrap_needed: boolean;
  series: number;
  time_ms: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export class HubApi {
  /** invoked on any 401 so the shell can route back to the login view */
  onUnauthorized: (() => void) | null = null;

  constructor(
    private base: string = "",
    private token: string | null = null,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    raw?: BodyInit,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await fetch(`${this.base}/api/v1${path}`, {
      method,
      headers,
      body: body !== undefined ? JSON.stringify(body) : raw,
    });
    const type = response.headers.get("Content-Type") ?? "";
    if (!response.ok) {
      let code = "error";
      let message = response.statusText;
      if (type.includes("json")) {
        const doc = (await response.json()) as { code?: string; message?: string };
        code = doc.code ?? code;
        message = doc.message ?? message;
      }
      if (response.status === 401 && path !== "/session" && this.onUnauthorized) {
        this.onUnauthorized();
      }
      throw new ApiError(response.status, code, message);
    }
    if (type.includes("json")) return (await response.json()) as T;
    return (await response.arrayBuffer()) as unknown as T;
  }

  // session -----------------------------------------------------------
  status(): Promise<HubStatus> {
    return this.request("GET", "/status");
  }

  async login(name: string, secret: string): Promise<Session> {
    const session = await this.request<Session>("POST", "/session", { name, secret });
    this.token = session.token;
    return session;
  }

  // data --------------------------------------------------------------
  series(): Promise<SeriesInfo[]> {
    return this.request("GET", "/series");
  }

  query(
    series: string[],
    from: number,
    to: number,
    window: string,
    agg: string,
  ): Promise<QueryFrame[]> {
    const params = new URLSearchParams({
      series: series.join(","),
      from: String(from),
      to: String(to),
      window,
      agg,
    });
    return this.request("GET", `/query?${params}`);
  }

  latest(series?: string[]): Promise<Record<string, { ts: number; value: number }>> {
    const params = series?.length ? `?series=${series.join(",")}` : "";
    return this.request("GET", `/latest${params}`);
  }

  // annotations ---------------------------------------------------------
  annotations(series: string[] | null, from: number, to: number): Promise<Annotation[]> {
    const params = new URLSearchParams({ from: String(from), to: String(to) });
    if (series?.length) params.set("series", series.join(","));
    return this.request("GET", `/annotations?${params}`);
  }

  addAnnotation(
    selector: string[] | null,
    t_from: number,
    t_to: number,
    text: string,
  ): Promise<Annotation> {
    return this.request("POST", "/annotations", { selector, t_from, t_to, text });
  }

  deleteAnnotation(id: string): Promise<void> {
    return this.request("DELETE", `/annotations/${id}`);
  }

  // deletion ------------------------------------------------------------
  deletionPreview(selector: string[], t_from: number, t_to: number): Promise<{ affected_points: number }> {
    return this.request("POST", "/deletions", { selector, t_from, t_to, preview: true });
  }

  deleteRange(selector: string[], t_from: number, t_to: number): Promise<{ tombstone: string }> {
    return this.request("POST", "/deletions", { selector, t_from, t_to });
  }

  // retention -------------------------------------------------------------
  retention(series?: string): Promise<RetentionPolicy> {
    return this.request("GET", `/retention${series ? `?series=${series}` : ""}`);
  }

  setRetention(policy: RetentionPolicy, series?: string): Promise<RetentionPolicy> {
    const body: Record<string, unknown> = { tiers: policy.tiers };
    if (series) body["series"] = series;
    return this.request("PUT", "/retention", body);
  }

  // approvals ---------------------------------------------------------
  approvals(): Promise<ApprovalRequest[]> {
    return this.request("GET", "/approvals");
  }

  requestOperation(op: string, payload: Record<string, unknown>): Promise<ApprovalRequest> {
    return this.request("POST", "/approvals", { op, payload });
  }

  approve(id: string): Promise<ApprovalRequest> {
    return this.request("POST", `/approvals/${id}/approve`);
  }

  reject(id: string): Promise<ApprovalRequest> {
    return this.request("POST", `/approvals/${id}/reject`);
  }

  execute(id: string): Promise<unknown> {
    return this.request("POST", `/approvals/${id}/execute`);
  }

  // grants --------------------------------------------------------------
  grants(): Promise<ShareGrant[]> {
    return this.request("GET", "/grants");
  }

  createGrantRequest(body: {
    grantee: string;
    purpose: string;
    selector: string[] | null;
    t_from: number;
    t_to: number;
    max_resolution_ms: number;
  }): Promise<ApprovalRequest> {
    return this.request("POST", "/grants", body);
  }

  revokeGrant(id: string): Promise<ShareGrant> {
    return this.request("DELETE", `/grants/${id}`);
  }

  grantExport(id: string): Promise<ArrayBuffer> {
    return this.request("GET", `/grants/${id}/export`);
  }

  // lifecycle -----------------------------------------------------------
  exportArchive(options: Record<string, unknown> = {}): Promise<ArrayBuffer> {
    return this.request("POST", "/export", { options });
  }

  importArchive(data: ArrayBuffer, mode = "merge", requestId?: string): Promise<{
    series_added: number;
    points_added: number;
    conflicts: number;
  }> {
    const params = new URLSearchParams({ mode });
    if (requestId) params.set("request", requestId);
    return this.request("POST", `/import?${params}`, undefined, data);
  }

  reinit(requestId: string): Promise<unknown> {
    return this.request("POST", "/lifecycle/reinit", { request_id: requestId });
  }

  handover(requestId: string, keepExport: boolean): Promise<ArrayBuffer | { ok: boolean }> {
    return this.request("POST", "/lifecycle/handover", {
      request_id: requestId,
      keep_export: keepExport,
    });
  }

  transfer(requestId: string): Promise<unknown> {
    return this.request("POST", "/lifecycle/transfer", { request_id: requestId });
  }

  // audit / principals -------------------------------------------------
  audit(limit = 100): Promise<Array<{ seq: number; at: number; actor: string; action: string }>> {
    return this.request("GET", `/audit?limit=${limit}`);
  }

  auditVerify(): Promise<{ ok: boolean; first_bad_seq: number | null }> {
    return this.request("GET", "/audit/verify");
  }

  principals(): Promise<Principal[]> {
    return this.request("GET", "/principals");
  }
}
