"""Multi-agent search-and-track simulation engine and planning library."""

__version__ = "0.1.0"

ENGINE_VERSION = "searchtrack-0.1.0"
