"""Federated contextual cascading bandits with online user clustering."""

__version__ = "0.1.0"
