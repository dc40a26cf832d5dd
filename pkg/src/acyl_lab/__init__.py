"""Numerical laboratory for Kahler geometry on cylindrical ends.

Subpackages cover grids and weighted norms (field_core), translation
invariant elliptic analysis (cyl_elliptic), the (1,1)-form and
Monge-Ampere kernel (kahler_kernel), the glued background metric
(glue_construct), the continuity-method solver (ma_solver), the
gauge-fixing computations (gauge_lab), the inequality and scaling
checks (estimates_lab), and the command line driver (cli).
"""

__version__ = "0.1.0"
