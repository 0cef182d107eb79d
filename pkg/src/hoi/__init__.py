"""Networks of phase oscillator populations with higher-order interactions.

Finite-N integration, mean-field transport of population measures,
Wasserstein-1 diagnostics on the circle, the Watanabe-Strogatz reduction and
stability analysis of synchronized and splay states.
"""
from .circle import *  # noqa: F401,F403
from .coupling import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .meanfield import *  # noqa: F401,F403
from .measures import *  # noqa: F401,F403
from .nbody import *  # noqa: F401,F403
from .stability import *  # noqa: F401,F403
from .wstrogatz import *  # noqa: F401,F403

__version__ = "0.1.0"
