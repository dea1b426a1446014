"""Compiled fast path for closed-loop simulation.

The public modules stay readable and numpy-based; everything that runs per
integration step (ray casting, nearest-obstacle tracking, the control law)
is compiled here with numba.  The compiled path is semantically equivalent
to the reference implementations and is cross-checked by the test suite.
"""

from .pack import WorldPack, pack_world

__all__ = ["WorldPack", "pack_world"]
