"""Ordered concurrent execution of independent solver runs."""
