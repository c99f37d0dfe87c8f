"""Deterministic two-drone battery handoff simulator.

Subsystems: rigid-body math (geometry), downwash disturbance model (aero),
reduced quadrotor dynamics (vehicle), cross-marker perception (perception),
docking navigation (nav), handoff protocol and its interleaving checker
(protocol, checker), slide transfer mechanics (transfer), and the scenario
harness (config, scenario, experiments, cli).
"""

__version__ = "0.1.0"
