"""Relativistic magnetic Schroedinger operators on desk-scale grids: IDS laboratory."""
__version__ = "0.1.0"
