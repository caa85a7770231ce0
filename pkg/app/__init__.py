"""Command-line application and configuration for the certifier."""
