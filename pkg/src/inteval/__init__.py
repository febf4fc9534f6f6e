"""Rationale extraction and interpretability evaluation for long-document classifiers.

The package covers the full loop: corpus construction from court decision
documents, a hierarchical chunked classifier harness, token attribution
methods, mask-based and selection-based rationale extraction, normalized
faithfulness metrics, an LLM judging panel with agreement statistics, and a
small annotation service for expert review.
"""

__version__ = "0.1.0"
