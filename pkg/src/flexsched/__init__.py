"""Energy-cost-optimal scheduling of decanter centrifuges.

Compiles a plant description and a price series into a mixed-integer linear
program, solves it with the bundled branch-and-bound solver, and turns the
solution into operator-facing schedules, switch recommendations and
plan-versus-measurement evaluations.
"""

__version__ = "0.1.0"
