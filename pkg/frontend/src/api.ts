/**
 * Typed gateway client. All traffic funnels through request(), which
 * enforces the endpoint table and records every call for contract tests.
 */

import { matchEndpoint } from "./endpoints.js";
import type {
  AuthToken,
  InventoryTree,
  PodStatus,
  Reservation,
  SessionDescriptor,
} from "./types.js";

export interface ResponseLike {
  status: number;
  ok: boolean;
  text(): Promise<string>;
}

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<ResponseLike>;

export interface RecordedRequest {
  method: string;
  path: string;
  endpoint: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public body: Record<string, unknown>,
  ) {
    super(typeof body.message === "string" ? body.message : code);
  }
}

export class ContractViolation extends Error {}

export class ApiClient {
  token: string | null = null;
  readonly recorded: RecordedRequest[] = [];

  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init as RequestInit),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const bare = path.split("?")[0];
    const spec = matchEndpoint(method, bare);
    if (spec === null) {
      throw new ContractViolation(`${method} ${bare} is outside the endpoint table`);
    }
    this.recorded.push({ method, path: bare, endpoint: spec.name });
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const raw = await resp.text();
    if (!resp.ok) {
      let doc: Record<string, unknown> = {};
      try {
        doc = JSON.parse(raw);
      } catch {
        doc = { message: raw };
      }
      throw new ApiError(resp.status, String(doc.error ?? "error"), doc);
    }
    if (raw.trimStart().startsWith("{")) {
      return JSON.parse(raw);
    }
    return raw;
  }

  async login(userId: string, password: string): Promise<AuthToken> {
    const doc = (await this.request("POST", "/auth", {
      user_id: userId,
      password,
    })) as AuthToken;
    this.token = doc.token;
    return doc;
  }

  inventory(): Promise<InventoryTree> {
    return this.request("GET", "/inventory") as Promise<InventoryTree>;
  }

  async listReservations(): Promise<Reservation[]> {
    const doc = (await this.request("GET", "/reservations")) as {
      reservations: Reservation[];
    };
    return doc.reservations;
  }

  createReservation(body: {
    testbed_id: string;
    node_id: string;
    device_ids: string[];
    start: number;
    end: number;
  }): Promise<Reservation> {
    return this.request("POST", "/reservations", body) as Promise<Reservation>;
  }

  async cancelReservation(reservationId: string): Promise<void> {
    await this.request("DELETE", `/reservations/${reservationId}`);
  }

  connect(body: {
    reservation_id: string;
    app: string;
    instance: string;
    wait?: boolean;
  }): Promise<SessionDescriptor> {
    return this.request("POST", "/sessions", body) as Promise<SessionDescriptor>;
  }

  async listSessions(): Promise<SessionDescriptor[]> {
    const doc = (await this.request("GET", "/sessions")) as {
      sessions: SessionDescriptor[];
    };
    return doc.sessions;
  }

  async disconnect(sessionId: string): Promise<void> {
    await this.request("DELETE", `/sessions/${sessionId}`);
  }

  podStatus(name: string): Promise<PodStatus> {
    return this.request("GET", `/pods/${name}`) as Promise<PodStatus>;
  }

  metricsText(): Promise<string> {
    return this.request("GET", "/metrics") as Promise<string>;
  }
}
