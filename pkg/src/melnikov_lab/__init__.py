"""Numerical laboratory for periodic KdV flows with self-consistent sources.

Submodules:
    grid            periodic grids, fields, spectral derivatives
    floquet         Hill discriminant, Bloch solutions, band edges
    soliton         exact one-soliton family and its source-driven flows
    baker_akhiezer  genus-zero Baker-Akhiezer engine with gluing parameters
    solver          pseudo-spectral integrator for the sourced KdV flow
    acceptance      named end-to-end checks used by tests and the CLI
    cli             scenario runner (floquet-scan, soliton-demo, ba-verify,
                    evolve, verify-all)
"""

__version__ = "0.1.0"

# cli is intentionally not imported here so `python -m melnikov_lab.cli`
# does not execute the module twice.
from . import grid, floquet, soliton, baker_akhiezer, solver, acceptance  # noqa: F401
