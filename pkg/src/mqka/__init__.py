"""Simulator of a cluster-state multiparty quantum key agreement, its collusion attack and the single-photon fix."""

__version__ = "0.1.0"
