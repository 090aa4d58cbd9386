"""Governed candidate selection with commit-reveal entropy, a staged reducer,
a presentation gate and a circuit breaker, plus an ablation/attack harness."""

__version__ = "0.1.0"
