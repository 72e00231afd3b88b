# src/routers/__init__.py
# This file makes the routers directory a Python package

from .lattice import router as lattice_router
from .rates import router as rates_router
from .simulate import router as simulate_router

__all__ = ["lattice_router", "rates_router", "simulate_router"]
