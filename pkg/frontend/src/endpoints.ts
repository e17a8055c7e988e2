/**
 * The documented gateway endpoint table (docs/API.md). Every request the
 * portal makes is validated against this list; anything else throws before
 * it leaves the client.
 */

export interface EndpointSpec {
  method: string;
  pattern: RegExp;
  name: string;
}

export const ENDPOINT_TABLE: EndpointSpec[] = [
  { method: "POST", pattern: /^\/auth$/, name: "auth" },
  { method: "GET", pattern: /^\/inventory$/, name: "inventory" },
  { method: "GET", pattern: /^\/reservations$/, name: "listReservations" },
  { method: "POST", pattern: /^\/reservations$/, name: "createReservation" },
  { method: "DELETE", pattern: /^\/reservations\/[^/]+$/, name: "cancelReservation" },
  { method: "POST", pattern: /^\/sessions$/, name: "connect" },
  { method: "GET", pattern: /^\/sessions$/, name: "listSessions" },
  { method: "DELETE", pattern: /^\/sessions\/[^/]+$/, name: "disconnect" },
  { method: "POST", pattern: /^\/sessions\/[^/]+\/files$/, name: "uploadFile" },
  { method: "GET", pattern: /^\/cluster$/, name: "cluster" },
  { method: "GET", pattern: /^\/pods\/[^/]+$/, name: "podStatus" },
  { method: "GET", pattern: /^\/metrics$/, name: "metrics" },
];

export function matchEndpoint(method: string, path: string): EndpointSpec | null {
  for (const spec of ENDPOINT_TABLE) {
    if (spec.method === method && spec.pattern.test(path)) {
      return spec;
    }
  }
  return null;
}
