"""Dense row-major float64 matrix used by every numeric module.

Kept deliberately small: the heavy kernels (matmul, softmax, conv) live in
``memescan.kernels`` with a compiled core and a pure-Python twin; everything
here is cheap elementwise or structural work. Accumulation order is fixed
left-to-right everywhere so results are bit-identical across backends.
"""

from __future__ import annotations

import math
from array import array

from .errors import DimensionError
from .kernels import backend as _backend


class Matrix:
    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data=None):
        if rows < 0 or cols < 0:
            raise DimensionError(f"negative shape ({rows}, {cols})")
        self.rows = rows
        self.cols = cols
        if data is None:
            self.data = array("d", bytes(8 * rows * cols))
        else:
            self.data = data if isinstance(data, array) else array("d", data)
            if len(self.data) != rows * cols:
                raise DimensionError(
                    f"data length {len(self.data)} != {rows}x{cols}"
                )

    # -- construction -----------------------------------------------------

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(rows, cols)

    @classmethod
    def from_rows(cls, rows_list) -> "Matrix":
        rows_list = [list(r) for r in rows_list]
        if not rows_list:
            raise DimensionError("empty matrix")
        cols = len(rows_list[0])
        flat = array("d")
        for r in rows_list:
            if len(r) != cols:
                raise DimensionError("ragged rows")
            flat.extend(float(v) for v in r)
        return cls(len(rows_list), cols, flat)

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        m = cls(n, n)
        for i in range(n):
            m.data[i * n + i] = 1.0
        return m

    @classmethod
    def uniform(cls, rows: int, cols: int, bound: float, rng) -> "Matrix":
        m = cls(rows, cols)
        d = m.data
        for i in range(rows * cols):
            d[i] = rng.uniform(-bound, bound)
        return m

    def copy(self) -> "Matrix":
        return Matrix(self.rows, self.cols, array("d", self.data))

    # -- element access ---------------------------------------------------

    def at(self, i: int, j: int) -> float:
        return self.data[i * self.cols + j]

    def put(self, i: int, j: int, v: float) -> None:
        self.data[i * self.cols + j] = v

    def row(self, i: int):
        c = self.cols
        return list(self.data[i * c : (i + 1) * c])

    def tolist(self):
        return [self.row(i) for i in range(self.rows)]

    @property
    def shape(self):
        return (self.rows, self.cols)

    # -- elementwise ------------------------------------------------------

    def _check_same_shape(self, other: "Matrix"):
        if self.rows != other.rows or self.cols != other.cols:
            raise DimensionError(
                f"shape mismatch {self.shape} vs {other.shape}"
            )

    def add(self, other: "Matrix") -> "Matrix":
        self._check_same_shape(other)
        out = array("d", self.data)
        od = other.data
        for i in range(len(out)):
            out[i] += od[i]
        return Matrix(self.rows, self.cols, out)

    def add_(self, other: "Matrix") -> "Matrix":
        """In-place add; used by gradient accumulation."""
        self._check_same_shape(other)
        _backend.add_inplace(self.data, other.data, len(self.data))
        return self

    def sub(self, other: "Matrix") -> "Matrix":
        self._check_same_shape(other)
        out = array("d", self.data)
        od = other.data
        for i in range(len(out)):
            out[i] -= od[i]
        return Matrix(self.rows, self.cols, out)

    def scale(self, s: float) -> "Matrix":
        return Matrix(self.rows, self.cols,
                      _backend.scale_copy(self.data, s, len(self.data)))

    def axpy_(self, s: float, other: "Matrix") -> "Matrix":
        """self += s * other, in place."""
        self._check_same_shape(other)
        _backend.axpy_inplace(self.data, s, other.data, len(self.data))
        return self

    def add_row_vector(self, vec: "Matrix") -> "Matrix":
        """Broadcast-add a 1xC row vector to every row."""
        if vec.rows != 1 or vec.cols != self.cols:
            raise DimensionError(
                f"row vector shape {vec.shape} incompatible with {self.shape}"
            )
        out = array("d", self.data)
        vd = vec.data
        c = self.cols
        for i in range(self.rows):
            base = i * c
            for j in range(c):
                out[base + j] += vd[j]
        return Matrix(self.rows, self.cols, out)

    # -- structural -------------------------------------------------------

    def transpose(self) -> "Matrix":
        return Matrix(self.cols, self.rows,
                      _backend.transpose(self.data, self.rows, self.cols))

    def slice_rows(self, start: int, stop: int) -> "Matrix":
        if not (0 <= start <= stop <= self.rows):
            raise DimensionError(f"row slice [{start}:{stop}] out of range")
        c = self.cols
        return Matrix(stop - start, c, array("d", self.data[start * c : stop * c]))

    @classmethod
    def vstack(cls, mats) -> "Matrix":
        mats = list(mats)
        if not mats:
            raise DimensionError("vstack of nothing")
        cols = mats[0].cols
        flat = array("d")
        rows = 0
        for m in mats:
            if m.cols != cols:
                raise DimensionError("vstack column mismatch")
            flat.extend(m.data)
            rows += m.rows
        return cls(rows, cols, flat)

    def mean_rows(self) -> "Matrix":
        """Arithmetic mean over rows -> 1xC."""
        if self.rows == 0:
            raise DimensionError("mean of empty matrix")
        c = self.cols
        out = Matrix(1, c)
        od = out.data
        d = self.data
        for i in range(self.rows):
            base = i * c
            for j in range(c):
                od[j] += d[base + j]
        inv = 1.0 / self.rows
        for j in range(c):
            od[j] *= inv
        return out

    def col_sums(self) -> "Matrix":
        c = self.cols
        out = Matrix(1, c)
        od = out.data
        d = self.data
        for i in range(self.rows):
            base = i * c
            for j in range(c):
                od[j] += d[base + j]
        return out

    # -- predicates -------------------------------------------------------

    def all_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.data)

    def allclose(self, other: "Matrix", tol: float = 1e-12) -> bool:
        if self.shape != other.shape:
            return False
        return all(
            abs(a - b) <= tol for a, b in zip(self.data, other.data)
        )

    def __eq__(self, other):
        return (
            isinstance(other, Matrix)
            and self.shape == other.shape
            and self.data == other.data
        )

    __hash__ = None  # mutable

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"
