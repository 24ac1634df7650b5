"""Interpretable vital-sign forecasting with N-BEATS / N-HiTS and an attention head."""

from .attention import AttentionArtifacts, AttentionForecaster, AttentionParams, attention_map
from .nbeats import NBeatsModel
from .nhits import NHitsModel

__version__ = "0.1.0"

__all__ = [
    "AttentionArtifacts",
    "AttentionForecaster",
    "AttentionParams",
    "NBeatsModel",
    "NHitsModel",
    "attention_map",
]
