class ConfigurationError(ValueError):
    """Invalid scenario configuration; message carries the offending field path."""
