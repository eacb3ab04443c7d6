"""Taylor truncation of analytic zero sets with isolated singularities, and
numerical checks of (tangential) s-equivalence between V(f) and V(T^k f)."""

__version__ = "0.1.0"
