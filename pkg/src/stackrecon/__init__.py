"""Two-handed block stack reconfiguration: planning, kinematics, stability and choice."""

__version__ = "0.1.0"
