"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by ``(seed, stream id)``.  Streams are independent and addressable, so work
can be split across any number of workers without changing a single bit of
the output: the content of stream ``(seed, k)`` never depends on which
thread produced it or in what order.
"""

from __future__ import annotations

import numpy as np

# Rows of a Monte-Carlo draw matrix are generated in fixed-size blocks, one
# stream per block.  The block size is part of the output format: changing it
# changes the draws.
BLOCK_ROWS = 512

_U32 = np.uint64(0xFFFFFFFF)


def stream(seed: int, major: int, minor: int = 0) -> np.random.Generator:
    """Return the generator for stream ``(seed, major, minor)``.

    ``major`` and ``minor`` must fit in 32 bits each; they are packed into
    the second word of the Philox key.
    """
    if not (0 <= major <= 0xFFFFFFFF and 0 <= minor <= 0xFFFFFFFF):
        raise ValueError("stream ids must fit in 32 bits")
    key = np.array(
        [np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF),
         (np.uint64(major) << np.uint64(32)) | (np.uint64(minor) & _U32)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def block_bounds(n_rows: int) -> list[tuple[int, int, int]]:
    """Split ``n_rows`` into the canonical blocks: (block id, start, stop)."""
    out = []
    for b, start in enumerate(range(0, n_rows, BLOCK_ROWS)):
        out.append((b, start, min(start + BLOCK_ROWS, n_rows)))
    return out
