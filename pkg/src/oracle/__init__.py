"""Exact policy evaluation on small instances."""
