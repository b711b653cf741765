"""Ground-state preparation by quantum Landau-Lifshitz-Gilbert dynamics."""

__version__ = "0.1.0"
