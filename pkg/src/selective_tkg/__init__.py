"""Selective prediction for temporal knowledge graph reasoning.

A base model's predictions are scored by a confidence estimator that combines
the certainty of the current prediction with the Hawkes-decayed accuracy of
past predictions on related queries; low-confidence predictions are
abstained and the trade-off is measured by risk-coverage metrics.
"""

__version__ = "0.1.0"
