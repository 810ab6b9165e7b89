"""histflow: event-driven historical branching particle systems with diagnostics."""

__version__ = "0.1.0"
