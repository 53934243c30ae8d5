"""Experiment configs, the runner behind the CLI, and its reports and plots."""
