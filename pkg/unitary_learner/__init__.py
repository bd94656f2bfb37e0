"""
Unitary Learner
Learns the unitary of a quantum circuit from input/output statevector pairs
and decomposes the learned matrix back into elementary gates.
"""

__version__ = "0.1.0"


class UnitaryLearnerError(Exception):
    """Base class for every error raised by this package"""
