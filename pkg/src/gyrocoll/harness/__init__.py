"""Configuration, drivers and reports."""
