"""PMU-based state estimation for partially observed power systems."""

__version__ = "0.1.0"
