"""Analysis package — functionals, dominating-point optimizer, tail formula and Monte Carlo (no I/O)."""
