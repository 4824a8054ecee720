"""focklab: truncated Fock spaces, reduced density matrices, geometric
localization and a few many-body solvers on small lattices."""

__version__ = "0.1.0"
