"""Edge testbed federation service.

Automates reservation, deployment, remote access, and observation of
containerized experiment pods on a simulated edge cluster: calendar
reservations, worker-node scheduling, ordinal pod lifecycle, deterministic
port allocation, reverse-tunnel session bridging, and session telemetry.
"""

__version__ = "0.1.0"
