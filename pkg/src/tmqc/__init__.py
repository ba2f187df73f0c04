"""Mixed quantum-classical dynamics in arbitrary unitary bases."""

__version__ = "0.1.0"
