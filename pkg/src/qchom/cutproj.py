"""Projection matrices, the irrationality criterion and quasicrystal generators.

A cut-and-projection medium in R^n is the restriction of a Y^m-periodic
function g to the plane x -> R x, with R an m x n matrix.  Entries of R may be
exact elements of Q(tau), tau the golden ratio, or plain floats.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Sequence

import numpy as np

from .errors import StructuralError

TAU = (1.0 + math.sqrt(5.0)) / 2.0

# |R^T k| below this counts as a criterion violation on the float path.
ZERO_THRESHOLD = 1e-12


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return Fraction(int(x[0]), int(x[1]))
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as a rational number")


@dataclass(frozen=True)
class QuadExt:
    """Exact element a + b*tau of the field Q(tau), tau^2 = tau + 1."""

    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "a", _frac(self.a))
        object.__setattr__(self, "b", _frac(self.b))

    @classmethod
    def tau(cls) -> "QuadExt":
        return cls(0, 1)

    @classmethod
    def coerce(cls, x) -> "QuadExt":
        if isinstance(x, QuadExt):
            return x
        return cls(_frac(x), 0)

    def __add__(self, other):
        try:
            other = QuadExt.coerce(other)
        except TypeError:
            return NotImplemented
        return QuadExt(self.a + other.a, self.b + other.b)

    __radd__ = __add__

    def __neg__(self):
        return QuadExt(-self.a, -self.b)

    def __sub__(self, other):
        try:
            other = QuadExt.coerce(other)
        except TypeError:
            return NotImplemented
        return QuadExt(self.a - other.a, self.b - other.b)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        try:
            other = QuadExt.coerce(other)
        except TypeError:
            return NotImplemented
        # (a + b t)(c + d t) = ac + (ad + bc) t + bd (t + 1)
        a, b, c, d = self.a, self.b, other.a, other.b
        return QuadExt(a * c + b * d, a * d + b * c + b * d)

    __rmul__ = __mul__

    def conjugate(self) -> "QuadExt":
        """Galois conjugate, sending tau to 1 - tau."""
        return QuadExt(self.a + self.b, -self.b)

    def norm(self) -> Fraction:
        """Field norm a^2 + ab - b^2 (product with the conjugate)."""
        return self.a * self.a + self.a * self.b - self.b * self.b

    def __truediv__(self, other):
        try:
            other = QuadExt.coerce(other)
        except TypeError:
            return NotImplemented
        if other.is_zero():
            raise ZeroDivisionError("division by zero in Q(tau)")
        num = self * other.conjugate()
        nrm = other.norm()
        return QuadExt(num.a / nrm, num.b / nrm)

    def __rtruediv__(self, other):
        return QuadExt.coerce(other) / self

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        try:
            other = QuadExt.coerce(other)
        except TypeError:
            return NotImplemented
        return self.a == other.a and self.b == other.b

    def __hash__(self):
        return hash((self.a, self.b))

    def __float__(self):
        # Avoid cancellation when a and b*tau nearly cancel.
        a, b = self.a, self.b
        if a == 0 or b == 0 or (a > 0) == (b > 0):
            return float(a) + float(b) * TAU
        return float(self.norm()) / (float(a) + float(b) * (1.0 - TAU))

    def __repr__(self):
        return f"QuadExt({self.a}, {self.b})"

    def to_json(self) -> dict:
        return {
            "a": [self.a.numerator, self.a.denominator],
            "b": [self.b.numerator, self.b.denominator],
        }

    @classmethod
    def from_json(cls, obj) -> "QuadExt":
        return cls(_frac(obj["a"]), _frac(obj["b"]))


def _as_entry(x):
    if isinstance(x, QuadExt):
        return x
    if isinstance(x, (int, Fraction)):
        return QuadExt(x, 0)
    return float(x)


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """The m x n cut-and-projection matrix R.

    ``entries`` always holds float64 values; ``quad`` holds the exact Q(tau)
    entries when every entry is exact, and is None otherwise.
    """

    entries: np.ndarray
    quad: tuple | None = None

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 2:
            raise StructuralError(f"R must be a 2-d array, got shape {arr.shape}")
        m, n = arr.shape
        if not m > n >= 1:
            raise StructuralError(f"R must satisfy m > n >= 1, got m={m}, n={n}")
        if not np.all(np.isfinite(arr)):
            raise StructuralError("R has non-finite entries")
        if np.linalg.matrix_rank(arr, tol=1e-12 * max(1.0, np.abs(arr).max())) < n:
            raise StructuralError(f"R is rank deficient (rank < n={n})")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        if self.quad is not None:
            quad = tuple(tuple(QuadExt.coerce(q) for q in row) for row in self.quad)
            if len(quad) != m or any(len(row) != n for row in quad):
                raise StructuralError("exact entries do not match the float shape")
            object.__setattr__(self, "quad", quad)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "ProjectionMatrix":
        """Build R from its m rows; entries may be ints, Fractions, QuadExt or floats."""
        cells = [[_as_entry(x) for x in row] for row in rows]
        exact = all(isinstance(x, QuadExt) for row in cells for x in row)
        floats = [[float(x) for x in row] for row in cells]
        return cls(np.array(floats), tuple(map(tuple, cells)) if exact else None)

    @classmethod
    def from_transpose(cls, rows_t: Sequence[Sequence]) -> "ProjectionMatrix":
        """Build R from the n rows of R^T (the form in which R is usually printed)."""
        n = len(rows_t)
        m = len(rows_t[0])
        return cls.from_rows([[rows_t[j][i] for j in range(n)] for i in range(m)])

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def T(self) -> np.ndarray:
        return self.entries.T

    @property
    def exact(self) -> bool:
        return self.quad is not None

    @cached_property
    def orthonormal(self) -> bool:
        """True when R^T R = I_n (exactly for Q(tau) entries, else within 1e-12)."""
        if self.exact:
            for p in range(self.n):
                for q in range(self.n):
                    s = QuadExt()
                    for i in range(self.m):
                        s = s + self.quad[i][p] * self.quad[i][q]
                    if s != (1 if p == q else 0):
                        return False
            return True
        gram = self.entries.T @ self.entries
        return bool(np.max(np.abs(gram - np.eye(self.n))) <= 1e-12)

    def project(self, k) -> np.ndarray:
        """Wavevector xi = R^T k for integer multi-indices k (last axis of length m)."""
        return np.asarray(k, dtype=np.float64) @ self.entries

    def to_json(self) -> dict:
        doc = {
            "m": self.m,
            "n": self.n,
            "entries": self.entries.tolist(),
            "exact": self.exact,
        }
        if self.exact:
            doc["quad_entries"] = [[q.to_json() for q in row] for row in self.quad]
        return doc

    @classmethod
    def from_json(cls, doc) -> "ProjectionMatrix":
        if isinstance(doc, str):
            doc = json.loads(doc)
        try:
            m, n = int(doc["m"]), int(doc["n"])
            if doc.get("exact") and doc.get("quad_entries") is not None:
                rows = [[QuadExt.from_json(q) for q in row] for row in doc["quad_entries"]]
                pm = cls.from_rows(rows)
            else:
                pm = cls(np.array(doc["entries"], dtype=np.float64))
        except (KeyError, TypeError) as exc:
            raise StructuralError(f"malformed projection matrix document: {exc}") from exc
        if (pm.m, pm.n) != (m, n):
            raise StructuralError(f"declared shape ({m}, {n}) does not match entries {pm.entries.shape}")
        return pm

    def __repr__(self):
        return f"ProjectionMatrix(m={self.m}, n={self.n}, exact={self.exact})"


def fibonacci_projection() -> ProjectionMatrix:
    """R^T = (1, tau): the 1D Fibonacci laminate in Y^2, exact entries."""
    return ProjectionMatrix.from_transpose([[1, QuadExt.tau()]])


def penrose_projection() -> ProjectionMatrix:
    """The 4 x 2 matrix whose transpose generates a Penrose tiling from Y^4."""
    t = TAU
    r1 = np.array([t - 1.0, -t, -t, t - 1.0]) / math.sqrt(3.0)
    a, b = math.sqrt(t + 2.0), math.sqrt(3.0 - t)
    r2 = np.array([a, b, -b, -a]) / math.sqrt(5.0)
    rt = np.vstack([r1, r2]) / math.sqrt(2.0)
    return ProjectionMatrix(rt.T.copy())


def hyperplane_projection(normal) -> ProjectionMatrix:
    """R with orthonormal columns spanning the hyperplane orthogonal to ``normal``.

    Here n = m - 1 and R^T k = 0 exactly when k is parallel to ``normal``, so
    the criterion holds iff ``normal`` is not a multiple of an integer vector.
    """
    v = np.asarray(normal, dtype=np.float64)
    v = v / np.linalg.norm(v)
    # Householder reflection sending e_0 to v; its other columns span v^perp
    e0 = np.zeros_like(v)
    e0[0] = 1.0
    u = e0 - v
    if np.linalg.norm(u) < 1e-14:
        H = np.eye(len(v))
    else:
        u = u / np.linalg.norm(u)
        H = np.eye(len(v)) - 2.0 * np.outer(u, u)
    return ProjectionMatrix(H[:, 1:].copy())


BUILTIN_PROJECTIONS = {
    "fibonacci2": fibonacci_projection,
    "penrose4": penrose_projection,
}


@dataclass(frozen=True)
class CriterionReport:
    k_max: int
    violations: list
    min_norm: float
    certified_exact: bool
    scanned: int = 0

    @property
    def satisfied(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "k_max": self.k_max,
            "violations": [list(k) for k in self.violations],
            "min_norm": self.min_norm,
            "certified_exact": self.certified_exact,
            "scanned": self.scanned,
        }


def _box_chunks(m: int, k_max: int):
    """Yield canonical multi-indices of the box 0 < |k|_inf <= k_max.

    Only one of each pair +-k is produced: the first nonzero coordinate is
    positive.  Chunks are split along the leading coordinate.
    """
    side = np.arange(-k_max, k_max + 1)
    if m == 1:
        yield np.arange(1, k_max + 1).reshape(-1, 1)
        return
    tail = np.stack(np.meshgrid(*([side] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1)
    for lead in range(0, k_max + 1):
        if lead == 0:
            yield from (np.hstack([np.zeros((len(t), 1), dtype=np.int64), t])
                        for t in _box_chunks(m - 1, k_max))
        else:
            yield np.hstack([np.full((len(tail), 1), lead, dtype=np.int64), tail])


def _exact_columns(R: ProjectionMatrix):
    """Integer matrices P, Q and denominators D with R_ij = (P_ij + Q_ij tau) / D_j."""
    P = np.zeros((R.m, R.n), dtype=object)
    Q = np.zeros((R.m, R.n), dtype=object)
    D = []
    for j in range(R.n):
        col = [R.quad[i][j] for i in range(R.m)]
        den = math.lcm(*[q.a.denominator for q in col], *[q.b.denominator for q in col])
        D.append(den)
        for i, q in enumerate(col):
            P[i, j] = int(q.a * den)
            Q[i, j] = int(q.b * den)
    return P, Q, D


def check_criterion(R: ProjectionMatrix, k_max: int) -> CriterionReport:
    """Scan 0 < |k|_inf <= k_max for integer k with R^T k = 0.

    With exact Q(tau) entries the zero test is exact integer arithmetic;
    otherwise |R^T k| < 1e-12 counts as a violation.  ``min_norm`` is the
    smallest Euclidean |R^T k| over the scan.  Violations are listed once per
    pair +-k, with the first nonzero coordinate positive.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not isinstance(R, ProjectionMatrix):
        raise StructuralError("check_criterion expects a ProjectionMatrix")
    violations = []
    min_norm = math.inf
    scanned = 0
    if R.exact:
        P, Q, D = _exact_columns(R)
        bound = max(int(abs(v)) for v in np.concatenate([P.ravel(), Q.ravel()])) * k_max * R.m
        dtype = np.int64 if 4 * bound * bound < 2**62 else object
        P, Q = P.astype(dtype), Q.astype(dtype)
    for ks in _box_chunks(R.m, k_max):
        scanned += len(ks)
        if R.exact:
            kk = ks.astype(dtype)
            p = kk @ P
            q = kk @ Q
            zero = np.all((p == 0) & (q == 0), axis=1)
            # stable |p + q tau| via the conjugate when p and q differ in sign
            num = (p * p + p * q - q * q).astype(np.float64)
            pf, qf = p.astype(np.float64), q.astype(np.float64)
            direct = pf + qf * TAU
            conj = pf + qf * (1.0 - TAU)
            same = (pf * qf) >= 0
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(same, direct, num / np.where(conj == 0, 1.0, conj))
            val = val / np.asarray(D, dtype=np.float64)
            norms = np.sqrt(np.sum(val * val, axis=1))
        else:
            xi = ks @ R.entries
            norms = np.sqrt(np.sum(xi * xi, axis=1))
            zero = norms < ZERO_THRESHOLD
        if np.any(zero):
            violations.extend(tuple(int(c) for c in k) for k in ks[zero])
        nz = norms[~zero]
        if nz.size:
            min_norm = min(min_norm, float(nz.min()))
    return CriterionReport(
        k_max=k_max,
        violations=violations,
        min_norm=min_norm,
        certified_exact=R.exact,
        scanned=scanned,
    )


def fibonacci_word(length: int) -> str:
    """First ``length`` letters of the limit of S_n = S_{n-1} S_{n-2}, S_0 = A, S_1 = AB."""
    if length < 1:
        raise ValueError("length must be >= 1")
    prev, cur = "A", "AB"
    while len(cur) < length:
        prev, cur = cur, cur + prev
    return cur[:length]


# Intercept at which the slope-tau cut produces the Fibonacci word itself.
FIBONACCI_OFFSET = 0.0


def cut_sequence(ratio_A_over_B: float, count: int, offset: float = FIBONACCI_OFFSET) -> str:
    """Label sequence of the line y = ratio * x + offset cutting the unit square lattice.

    Walking along the line for x > 0, every crossing of a horizontal lattice
    line emits ``A`` and every crossing of a vertical one emits ``B``
    (``A`` first on a simultaneous crossing).  Between the vertical lines
    x = i - 1 and x = i the line crosses
    floor(ratio*i + offset) - floor(ratio*(i-1) + offset) horizontal lines, so
    the word is a concatenation of blocks A^d B.  With ratio = tau and the
    default offset this is the Fibonacci word.
    """
    if not ratio_A_over_B > 0:
        raise ValueError("ratio must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    offset = offset % 1.0
    pieces = []
    produced = 0
    start = 1
    chunk = max(16, int(count / (ratio_A_over_B + 1.0)) + 16)
    while produced < count:
        i = np.arange(start, start + chunk, dtype=np.float64)
        d = np.floor(ratio_A_over_B * i + offset) - np.floor(ratio_A_over_B * (i - 1) + offset)
        for di in d.astype(np.int64):
            block = "A" * int(di) + "B"
            pieces.append(block)
            produced += len(block)
            if produced >= count:
                break
        start += chunk
    return "".join(pieces)[:count]


def pythagorean_phase(y, ratio: float = TAU) -> np.ndarray:
    """Phase indicator (True = A) of the two-square checkerboard on Y^2.

    The cell is spanned by (A, B) and (-B, A) with A/B = ``ratio``; it holds
    one A x A square [0, A)^2 and one B x B square [A, A + B) x [0, B).  A
    line through this cell in direction (1, ratio) of the cell coordinates is
    vertical in physical space and crosses the squares in a Sturmian order.
    ``y`` has shape (2, ...) with cell coordinates in [0, 1).
    """
    y = np.asarray(y, dtype=np.float64)
    A, B = float(ratio), 1.0
    px = y[0] * A - y[1] * B
    py = y[0] * B + y[1] * A
    phase = np.zeros(px.shape, dtype=bool)
    found = np.zeros(px.shape, dtype=bool)
    for i in range(-1, 3):
        for j in range(-1, 3):
            qx = px - i * A + j * B
            qy = py - i * B - j * A
            big = (qx >= 0) & (qx < A) & (qy >= 0) & (qy < A)
            small = (qx >= A) & (qx < A + B) & (qy >= 0) & (qy < B)
            phase |= big & ~found
            found |= big | small
    return phase


def pythagorean_fractions(ratio: float = TAU) -> tuple[float, float]:
    """Area fractions (theta_A, theta_B) of the two squares in the cell."""
    A2 = float(ratio) ** 2
    return A2 / (A2 + 1.0), 1.0 / (A2 + 1.0)
