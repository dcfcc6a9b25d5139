"""Small feedforward networks, one-vs-all ensembles, and a benchmark harness."""

__version__ = "0.1.0"
