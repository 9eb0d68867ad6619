"""Verse-level authorship attribution for classical Persian poetry.

The package covers the full pipeline: corpus ingestion and filtering,
orthographic normalization, stylometric and semantic verse features, a small
transformer verse encoder trained from scratch, a fused classification head,
leakage-free poem-level splitting, poem-level aggregation of verse
predictions, and evaluation reports.
"""

__version__ = "0.1.0"
