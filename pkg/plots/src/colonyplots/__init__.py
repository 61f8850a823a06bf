"""Static figures for colonysim outputs."""

from .figures import EmptyInput, FigureSpec, MissingColumn, render

__version__ = "0.1.0"
