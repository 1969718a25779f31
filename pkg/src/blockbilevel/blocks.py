"""Block-structured vector and matrix containers.

A block vector holds one dense vector per lower-level problem; block
dimensions may differ.  A block matrix holds one dense symmetric matrix per
block.  All arithmetic requires identical block shapes.
"""

from __future__ import annotations

import numpy as np


def _check_same_shapes(a, b, what: str):
    if len(a.blocks) != len(b.blocks):
        raise ValueError(f"{what}: block counts differ "
                         f"({len(a.blocks)} vs {len(b.blocks)})")
    for i, (x, y) in enumerate(zip(a.blocks, b.blocks)):
        if x.shape != y.shape:
            raise ValueError(f"{what}: block {i} shapes differ "
                             f"({x.shape} vs {y.shape})")


class BlockVector:
    """List of per-block dense vectors with elementwise arithmetic."""

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        self.blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
        for i, b in enumerate(self.blocks):
            if b.ndim != 1:
                raise ValueError(f"block {i} is not a vector (ndim={b.ndim})")

    @classmethod
    def zeros(cls, dims) -> "BlockVector":
        return cls([np.zeros(d) for d in dims])

    def copy(self) -> "BlockVector":
        return BlockVector([b.copy() for b in self.blocks])

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.blocks[i]

    def __setitem__(self, i: int, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.blocks[i].shape:
            raise ValueError(f"block {i}: cannot assign shape {value.shape} "
                             f"over {self.blocks[i].shape}")
        self.blocks[i] = value

    def __add__(self, other: "BlockVector") -> "BlockVector":
        _check_same_shapes(self, other, "add")
        return BlockVector([x + y for x, y in zip(self.blocks, other.blocks)])

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        _check_same_shapes(self, other, "sub")
        return BlockVector([x - y for x, y in zip(self.blocks, other.blocks)])

    def __mul__(self, scalar: float) -> "BlockVector":
        return BlockVector([b * scalar for b in self.blocks])

    __rmul__ = __mul__

    def sq_norm(self) -> float:
        """Sum of squared 2-norms over blocks."""
        return float(sum(b @ b for b in self.blocks))

    def norm(self) -> float:
        return float(np.sqrt(self.sq_norm()))

    def dims(self) -> list[int]:
        return [b.shape[0] for b in self.blocks]

    def __repr__(self) -> str:
        return f"BlockVector(m={len(self.blocks)}, dims={self.dims()})"


class BlockMatrix:
    """List of per-block dense symmetric matrices.

    Symmetry is enforced on construction by replacing each block X with
    (X + X^T)/2, which is exactly symmetric in floating point.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        out = []
        for i, b in enumerate(blocks):
            b = np.asarray(b, dtype=np.float64)
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError(f"block {i} is not square: shape {b.shape}")
            out.append(0.5 * (b + b.T))
        self.blocks = out

    @classmethod
    def identity(cls, dims, scale: float = 1.0) -> "BlockMatrix":
        return cls([scale * np.eye(d) for d in dims])

    def copy(self) -> "BlockMatrix":
        return BlockMatrix([b.copy() for b in self.blocks])

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.blocks[i]

    def __setitem__(self, i: int, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.blocks[i].shape:
            raise ValueError(f"block {i}: cannot assign shape {value.shape} "
                             f"over {self.blocks[i].shape}")
        self.blocks[i] = 0.5 * (value + value.T)

    def sq_norm(self) -> float:
        """Sum of squared Frobenius norms over blocks."""
        return float(sum(np.sum(b * b) for b in self.blocks))

    def dims(self) -> list[int]:
        return [b.shape[0] for b in self.blocks]

    def __repr__(self) -> str:
        return f"BlockMatrix(m={len(self.blocks)}, dims={self.dims()})"
