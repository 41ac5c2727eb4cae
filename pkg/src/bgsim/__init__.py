"""Simulating message-passing implementations in shared memory.

Modules:

* :mod:`bgsim.mp`: the message-passing transition system, runs and exhaustive exploration
* :mod:`bgsim.objects`, :mod:`bgsim.history`: sequential objects and histories
* :mod:`bgsim.abd`: the ABD quorum register
* :mod:`bgsim.sm`: shared-memory programs over single-writer registers
* :mod:`bgsim.safe_agreement`: safe agreement from registers
* :mod:`bgsim.bg`: the shared-memory simulation of a message-passing implementation
  and its refinement monitor
* :mod:`bgsim.checkers`: linearizability, strong linearizability, forward simulation
* :mod:`bgsim.harness`: configuration, scenarios, reports and the ``simcli`` command
"""
__version__ = "0.1.0"
