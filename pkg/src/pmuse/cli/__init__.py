"""Command-line interface, experiment drivers and report emission."""
