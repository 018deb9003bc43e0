"""Codified decision-tree profiling toolkit.

Induces executable if-then behavior profiles from scene-action corpora,
traverses them to ground role-playing generation, and evaluates grounding
strategies with an NLI scoring criterion.
"""

__version__ = "0.1.0"
