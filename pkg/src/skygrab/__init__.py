"""skygrab: design analysis and capture-encounter simulation for a
drone-mounted passive basket manipulator.

The package is organized around five concerns:

* :mod:`skygrab.design`      closed-form sizing/structural checks of the basket,
  arm and camera mount, evaluated against mission requirements.
* :mod:`skygrab.dynamics`    fixed-timestep simulation of the capture encounter
  (carrier drone, suspended ball on a rigid rod, chaser with basket).
* :mod:`skygrab.mission`     event-driven mission executive (search, approach,
  engage, confirm, transport, drop).
* :mod:`skygrab.experiments` seedable Monte Carlo batches, parameter sweeps and
  the named scenario library.
* :mod:`skygrab.cli`         command-line front end.
"""

__version__ = "0.1.0"

from .design import (  # noqa: F401
    DesignReport,
    ManipulatorDesign,
    RequirementSet,
    TargetSpec,
    evaluate_design,
)
