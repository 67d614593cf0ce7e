"""Desk-scale dataset generators."""
