class ConfigError(ValueError):
    """Invalid configuration value or identifier."""
