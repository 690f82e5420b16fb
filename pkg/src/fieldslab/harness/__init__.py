"""Experiment runner: configuration, statistics, serialization, figures, CLI."""

from fieldslab.harness.config import load_config, resolve_config, config_hash
from fieldslab.harness.stats import EstimateRecord

__all__ = ["load_config", "resolve_config", "config_hash", "EstimateRecord"]
