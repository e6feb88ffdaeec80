from ._tabvfl import ConfigError, DataError, metrics, resolved_config, run_design, sparsemax

__all__ = ["ConfigError", "DataError", "metrics", "resolved_config", "run_design", "sparsemax"]
