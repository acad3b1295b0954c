"""Generative query-likelihood re-ranking with term-level uncertainty.

Modules: ``autodiff`` and ``nn`` (numpy reverse-mode engine and layers),
``text``, ``models``, ``training``, ``scoring``, ``uncertainty``, ``metrics``,
``cutoff``, ``config`` and ``cli``; ``toy`` and ``experiments`` hold the
synthetic corpora and desk-scale experiment drivers.
"""
__version__ = "0.1.0"
