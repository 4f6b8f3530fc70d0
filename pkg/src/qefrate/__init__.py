"""Growth rates of quadratic-exponential functionals for linear quantum systems."""
__version__ = "0.1.0"
