"""Non-iterative disentangled UCC ansatz construction and statevector VQE."""

__version__ = "0.1.0"
