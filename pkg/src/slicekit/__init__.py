"""Joint VNF placement and multi-path routing with delay and reliability budgets."""

__version__ = "0.1.0"
