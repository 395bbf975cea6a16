"""Risk-aware trajectory planning: hazard field, ST corridor, quintic lattice and MPC tracking."""

__version__ = "0.1.0"
