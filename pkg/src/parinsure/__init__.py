"""Deterministic off-chain engine for a parametric-insurance token protocol.

Subpackages and modules:

* :mod:`parinsure.fixedpoint` -- EVM-style integer arithmetic and scales.
* :mod:`parinsure.oracle`     -- keccak-based event probabilities/triggers.
* :mod:`parinsure.riskmodel`  -- exact loss distributions and the recursive
  normal-approximation solvency engine.
* :mod:`parinsure.protocol`   -- the contract state machine.
* :mod:`parinsure.ledger`     -- event log, deterministic replay, chain
  transaction ingestion.
* :mod:`parinsure.scenario`   -- scripted end-to-end runs.
* :mod:`parinsure.cli`        -- the ``parinsure`` command.
"""

__version__ = "0.1.0"

from parinsure._kernels import BACKEND as KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND", "__version__"]
