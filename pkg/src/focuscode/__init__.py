"""Two-level explainable ICD coding: a sentence tagger picks the focus
sentences of a report, and an attention classifier assigns each one a code."""

__version__ = "0.1.0"
