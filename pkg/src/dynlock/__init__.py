"""Dynamic locking of dipolar spin ensembles under cyclic pulse sequences."""

__version__ = "0.1.0"
