"""Mixed finite element solver for the steady linearized R13 equations in 2D.

Subpackages are organized by pipeline stage: `mesh` (triangulations),
`tensorops` (exact tensor algebra and kernel constructions), `elements`
(reference elements and quadrature), `assembly` (weak forms and the block
system), `solver` (linear solves and inf-sup diagnostics), `interp`
(quasi-interpolation), `postproc` (norms, errors, export), and `cases`
(benchmark drivers reached through the `r13fem` command line tool).
"""

__version__ = "0.1.0"
