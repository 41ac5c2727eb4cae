from .linearizability import (LinMonitor, LinVerdict, brute_force_linearizable,
                             check_linearizable)
from .strong import (ExecutionTree, StrongVerdict, check_assignment,
                     check_strongly_linearizable)
from .simulation import ExplicitLTS, SimVerdict, check_forward_simulation, compose

__all__ = [
    "LinMonitor", "LinVerdict", "check_linearizable", "brute_force_linearizable",
    "ExecutionTree", "StrongVerdict", "check_strongly_linearizable",
    "check_assignment", "ExplicitLTS", "SimVerdict", "check_forward_simulation",
    "compose",
]
