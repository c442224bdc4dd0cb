"""Integrated selection and routing for urban waste collection."""

__version__ = "0.1.0"
