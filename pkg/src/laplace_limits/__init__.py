"""Graph Laplacians on sampled manifolds and their continuum limits."""

__version__ = "0.1.0"
