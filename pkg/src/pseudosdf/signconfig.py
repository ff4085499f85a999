"""Codec between cell corner signs and the 128 anchor-normalized configurations.

Conventions shared by the whole package (datasets, models and extractors all
depend on them, so they are defined once here):

* Corner ``i`` of a cell (``i`` in 0..7) sits at the local offset
  ``((i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1)``, i.e. x maps to bit 0,
  y to bit 1 and z to bit 2.
* Corner 0 is the anchor.  A sign vector and its global flip describe the
  same surface crossing pattern, so signs are normalized to ``signs[0] == +1``
  before encoding.  Bit ``i - 1`` of a configuration code is set iff corner
  ``i`` disagrees with the anchor, giving codes 0..127.  Code 0 means "no
  crossing anywhere in the cell".
* Cell edges follow the classic marching–cubes edge ordering (bottom ring,
  top ring, then the four verticals), expressed in the corner indices above
  by :data:`EDGE_CORNERS`.

``CONVENTION_TAG`` stamps persisted datasets and models so that files written
under a different layout are rejected instead of silently misread.
"""

from __future__ import annotations

import numpy as np

# Corner offsets, one row per corner index.
CORNER_OFFSETS = np.array(
    [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.int64
)

# Canonical 12-edge ordering (Lorensen/Bourke), remapped to our corner indices.
EDGE_CORNERS = np.array(
    [
        (0, 1), (1, 3), (3, 2), (2, 0),      # bottom face ring (z = 0)
        (4, 5), (5, 7), (7, 6), (6, 4),      # top face ring (z = 1)
        (0, 4), (1, 5), (3, 7), (2, 6),      # verticals
    ],
    dtype=np.int64,
)

NUM_CONFIGS = 128

# Layout version: bit-ordered corners, anchor 0, UDF values divided by spacing.
CONVENTION_TAG = 0x50534631  # "PSF1"


def _check_signs(signs: np.ndarray) -> np.ndarray:
    signs = np.asarray(signs)
    if signs.shape[-1] != 8:
        raise ValueError(f"expected 8 corner signs, got shape {signs.shape}")
    if not np.isin(signs, (-1, 1)).all():
        raise ValueError("corner signs must be -1 or +1")
    return signs.astype(np.int64)


def encode(signs) -> int:
    """Map 8 corner signs (+-1) to the anchor-normalized code in 0..127."""
    return int(encode_batch(np.asarray(signs)[None, :])[0])


def encode_batch(signs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`encode` over an (N, 8) array of +-1 signs."""
    signs = _check_signs(signs)
    flipped = signs * signs[..., :1]  # anchor normalization: signs[0] -> +1
    bits = (flipped[..., 1:] < 0).astype(np.int64)
    return (bits << np.arange(7)).sum(axis=-1)


def decode(code: int) -> np.ndarray:
    """Return the 8 corner signs for ``code`` with the anchor set to +1."""
    if not 0 <= int(code) < NUM_CONFIGS:
        raise ValueError(f"configuration code must be in 0..127, got {code}")
    return DECODE_TABLE[int(code)].copy()


def _build_decode_table() -> np.ndarray:
    codes = np.arange(NUM_CONFIGS, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(7)) & 1
    signs = np.ones((NUM_CONFIGS, 8), dtype=np.int8)
    signs[:, 1:] = np.where(bits == 1, -1, 1)
    return signs


DECODE_TABLE = _build_decode_table()
DECODE_TABLE.setflags(write=False)


def edge_flips(code: int) -> np.ndarray:
    """Per-edge booleans: True where the edge endpoints carry opposite signs."""
    if not 0 <= int(code) < NUM_CONFIGS:
        raise ValueError(f"configuration code must be in 0..127, got {code}")
    return EDGE_FLIP_TABLE[int(code)].copy()


def _build_edge_flip_table() -> np.ndarray:
    a = DECODE_TABLE[:, EDGE_CORNERS[:, 0]]
    b = DECODE_TABLE[:, EDGE_CORNERS[:, 1]]
    return a != b


EDGE_FLIP_TABLE = _build_edge_flip_table()
EDGE_FLIP_TABLE.setflags(write=False)


def to_multilabel(code: int) -> np.ndarray:
    """Expand a code into its 7 per-corner disagreement bits."""
    if not 0 <= int(code) < NUM_CONFIGS:
        raise ValueError(f"configuration code must be in 0..127, got {code}")
    return ((int(code) >> np.arange(7)) & 1).astype(bool)


def from_multilabel(bits) -> int:
    """Inverse of :func:`to_multilabel`."""
    bits = np.asarray(bits)
    if bits.shape != (7,):
        raise ValueError(f"expected 7 booleans, got shape {bits.shape}")
    return int((bits.astype(np.int64) << np.arange(7)).sum())


def from_multilabel_batch(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    return (bits << np.arange(7)).sum(axis=-1)
