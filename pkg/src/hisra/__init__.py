"""Sub-channelized DFT random access: pilots, hierarchical sparse detection,
bounds and a seeded Monte Carlo harness."""

from . import airlink, analytics, detector, harness, hisparse, pilots, spectral, traffic

__version__ = "0.1.0"

__all__ = ["airlink", "analytics", "detector", "harness", "hisparse", "pilots", "spectral", "traffic"]
