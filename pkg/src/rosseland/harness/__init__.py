"""Configuration, experiment drivers, reports and the command-line entry point."""
