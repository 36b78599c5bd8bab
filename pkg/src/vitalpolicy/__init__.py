"""Offline imitation learning for bedside knob adjustments.

Infers discrete clinician actions from observational telemetry via
physician-style change thresholds, trains hierarchical multi-head
behavior-cloning policies over pluggable classifier backends, and evaluates
generalization, calibration, and clinician-model disagreement against a
synthetic patient simulator with a known ground-truth policy.
"""

__version__ = "0.1.0"
