"""Kinematics, differential IK, reachability and actuator sizing for a
decoupled 2-DOF parallel wrist and its serial-wrist baselines."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
