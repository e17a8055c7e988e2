/** Shapes of the gateway's JSON payloads (docs/API.md). */

export interface Device {
  device_id: string;
  kind: string;
  node_id: string;
  layout_pos: [number, number];
}

export interface Testbed {
  testbed_id: string;
  name: string;
  edge_nodes: string[];
  devices: Device[];
}

export interface Lab {
  lab_id: string;
  name: string;
  testbeds: Testbed[];
}

export interface InventoryTree {
  labs: Lab[];
}

export interface Reservation {
  reservation_id: string;
  user_id: string;
  testbed_id: string;
  node_id: string;
  device_ids: string[];
  start: number;
  end: number;
}

export interface SessionDescriptor {
  session_id: string;
  user_id: string;
  reservation_id: string;
  app: string;
  pod_name: string | null;
  state: "Requested" | "Provisioning" | "Live" | "Closed";
  web_port: number | null;
  created_at: number;
}

export interface PodStatus {
  name: string;
  app: string;
  index: number;
  phase: string;
  ready: boolean;
  pending_reason: string | null;
  failed_step: string | null;
  restarts: number;
  ports: { index: number; remote_port: number; web_port: number };
}

export interface AuthToken {
  token: string;
  user_id: string;
  role: "user" | "admin";
  expires_at: number;
}
