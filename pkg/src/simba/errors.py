"""Error types mapped to CLI exit codes."""


class ConfigError(Exception):
    """Invalid configuration (exit code 2)."""


class FormatError(Exception):
    """Malformed input file (exit code 3)."""


class PipelineError(Exception):
    """Reconstruction pipeline failure (exit code 4)."""


class MetricFailure(Exception):
    """Metric computation failure (exit code 5)."""
