"""Periodic Thomas-Fermi-Dirac-von Weizsaecker toolkit"""

__version__ = "1.0.0"
