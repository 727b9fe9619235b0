"""conecg: column-generation bounds over structured psd inner approximations.

Optimize over the cone of diagonally dominant or scaled diagonally
dominant matrices instead of the full psd cone, then grow the
approximating cone with atoms priced from master duals.  Applications:
lower bounds for even forms on the unit sphere (dsos/sdsos and their
r-multiplied hierarchies) and upper bounds on graph stability numbers.
"""

__version__ = "0.1.0"

from .atoms import AtomSet, PairAtom, RankOneAtom, U3Cursor, gen_U2, gen_V2
from .cgengine import CgConfig, CgTrace, SdpProblem, run
from .conic import ConicError, ConicModel, solve
from .polynomials import Poly, load_poly, monomials, sphere_multiplier
from .polyopt import (amgm_separation, cg_polymin, dsos_bound, r_dsos_bound,
                      r_sdsos_bound, sdsos_bound, sphere_min_oracle)
from .stableset import (Graph, cg_stableset, dsos1_bound, hierarchy_bound,
                        init_lambda, lp2_bound, sdsos1_bound, stable_set_form)

__all__ = [
    "__version__",
    "AtomSet", "PairAtom", "RankOneAtom", "U3Cursor", "gen_U2", "gen_V2",
    "CgConfig", "CgTrace", "SdpProblem", "run",
    "ConicError", "ConicModel", "solve",
    "Poly", "load_poly", "monomials", "sphere_multiplier",
    "amgm_separation", "cg_polymin", "dsos_bound", "r_dsos_bound",
    "r_sdsos_bound", "sdsos_bound", "sphere_min_oracle",
    "Graph", "cg_stableset", "dsos1_bound", "hierarchy_bound",
    "init_lambda", "lp2_bound", "sdsos1_bound", "stable_set_form",
]
