"""Periodic fields on the torus Y^m and the projected operators grad_R, div_R, curl_R.

Fields carry a grid representation (samples at y = i / N) and a Fourier
representation with the forward transform normalised by N^m, so that the
k = 0 coefficient is the cell mean.  Modes with any index equal to -N/2
(Nyquist) have no well-defined projected wavevector R^T k once m > 1; every
differential operator truncates them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .cutproj import ZERO_THRESHOLD, ProjectionMatrix
from .errors import SingularModeError, SolvabilityError

TWO_PI_I = 2j * np.pi


@dataclass(frozen=True)
class Grid:
    """Uniform N^m grid on Y^m = ]0, 1[^m."""

    m: int
    N: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.N < 2 or self.N % 2:
            raise ValueError(f"N must be even and >= 2, got {self.N}")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.m

    @property
    def size(self) -> int:
        return self.N ** self.m

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.m, 0))

    def modes(self) -> np.ndarray:
        """Integer multi-indices, shape (m, N, ..., N), in FFT order."""
        return _modes(self.m, self.N)

    def points(self) -> np.ndarray:
        """Grid nodes y = i / N, shape (m, N, ..., N)."""
        side = np.arange(self.N) / self.N
        return np.stack(np.meshgrid(*([side] * self.m), indexing="ij"))

    def active(self) -> np.ndarray:
        """Boolean mask of modes kept by the differential operators (no Nyquist index)."""
        return _active(self.m, self.N)


@lru_cache(maxsize=16)
def _modes(m, N):
    k1 = np.fft.fftfreq(N, d=1.0 / N).round().astype(np.int64)
    k = np.stack(np.meshgrid(*([k1] * m), indexing="ij"))
    k.setflags(write=False)
    return k


@lru_cache(maxsize=16)
def _active(m, N):
    mask = np.all(_modes(m, N) != -N // 2, axis=0)
    mask.setflags(write=False)
    return mask


@dataclass(frozen=True)
class ModeVector:
    """A multi-index k and its projected wavevector xi = R^T k."""

    k: tuple
    xi: tuple

    @classmethod
    def of(cls, k, R: ProjectionMatrix) -> "ModeVector":
        k = tuple(int(c) for c in k)
        return cls(k, tuple(float(v) for v in R.project(np.array(k))))


@dataclass(frozen=True)
class Wavevectors:
    """Projected wavevectors of a grid: xi = R^T k on active modes, zero elsewhere."""

    xi: np.ndarray       # (n, N, ..., N)
    norm2: np.ndarray    # |xi|^2
    active: np.ndarray   # active and k != 0
    singular: np.ndarray  # active, k != 0, |xi| below the zero threshold

    @property
    def min_norm(self) -> float:
        vals = self.norm2[self.active & ~self.singular]
        return float(np.sqrt(vals.min())) if vals.size else float("inf")

    def singular_modes(self, grid: Grid) -> list:
        idx = np.argwhere(self.singular)
        k = grid.modes()
        return [tuple(int(k[j][tuple(i)]) for j in range(grid.m)) for i in idx]

    def check(self, grid: Grid):
        if np.any(self.singular):
            raise SingularModeError(self.singular_modes(grid))

    def inv_norm2(self) -> np.ndarray:
        """1/|xi|^2 on regular active modes, 0 on the mean, Nyquist and singular modes."""
        ok = self.active & ~self.singular
        out = np.zeros_like(self.norm2)
        out[ok] = 1.0 / self.norm2[ok]
        return out


_WAVE_CACHE: dict = {}


def wavevectors(grid: Grid, R: ProjectionMatrix) -> Wavevectors:
    if R.m != grid.m:
        raise ValueError(f"grid dimension m={grid.m} does not match R with m={R.m}")
    key = (grid, R.entries.tobytes(), R.entries.shape)
    hit = _WAVE_CACHE.get(key)
    if hit is not None:
        return hit
    k = grid.modes()
    xi = np.einsum("jl,j...->l...", R.entries, k.astype(np.float64))
    act = grid.active().copy()
    act[(0,) * grid.m] = False
    xi = xi * grid.active()
    norm2 = np.sum(xi * xi, axis=0)
    singular = act & (np.sqrt(norm2) < ZERO_THRESHOLD)
    for a in (xi, norm2, act, singular):
        a.setflags(write=False)
    wv = Wavevectors(xi, norm2, act, singular)
    if len(_WAVE_CACHE) > 16:
        _WAVE_CACHE.clear()
    _WAVE_CACHE[key] = wv
    return wv


_RANKS = {0: "scalar", 1: "vector", 2: "tensor", 4: "tensor4"}


class PeriodicField:
    """A scalar, vector or tensor field sampled on a Grid.

    Components lead, grid axes trail: samples have shape
    ``components + (N,) * m``.  Build from samples or from Fourier
    coefficients; the other representation is computed on demand.
    """

    __slots__ = ("grid", "components", "_samples", "_coeffs", "_real")

    def __init__(self, grid: Grid, samples=None, *, coeffs=None, real=None):
        if (samples is None) == (coeffs is None):
            raise ValueError("give exactly one of samples or coeffs")
        arr = np.asarray(samples if samples is not None else coeffs)
        if arr.shape[arr.ndim - grid.m:] != grid.shape or arr.ndim < grid.m:
            raise ValueError(f"array shape {arr.shape} does not end with grid shape {grid.shape}")
        comps = arr.shape[: arr.ndim - grid.m]
        if len(comps) not in _RANKS:
            raise ValueError(f"unsupported component shape {comps}")
        self.grid = grid
        self.components = tuple(comps)
        if samples is not None:
            if real is None:
                real = not np.iscomplexobj(arr)
            self._samples = np.array(arr, dtype=np.float64 if real else np.complex128)
            self._samples.setflags(write=False)
            self._coeffs = None
        else:
            self._coeffs = np.array(arr, dtype=np.complex128)
            self._coeffs.setflags(write=False)
            self._samples = None
        self._real = bool(real) if real is not None else False

    @classmethod
    def from_coefficients(cls, grid: Grid, coeffs, real=True) -> "PeriodicField":
        return cls(grid, coeffs=coeffs, real=real)

    @classmethod
    def constant(cls, grid: Grid, value) -> "PeriodicField":
        value = np.asarray(value, dtype=np.float64)
        return cls(grid, np.broadcast_to(value.reshape(value.shape + (1,) * grid.m),
                                         value.shape + grid.shape).copy())

    @property
    def rank(self) -> str:
        return _RANKS[len(self.components)]

    @property
    def is_real(self) -> bool:
        return self._real

    @property
    def coefficients(self) -> np.ndarray:
        if self._coeffs is None:
            c = np.fft.fftn(self._samples, axes=self.grid.axes) / self.grid.size
            c.setflags(write=False)
            self._coeffs = c
        return self._coeffs

    @property
    def samples(self) -> np.ndarray:
        if self._samples is None:
            s = np.fft.ifftn(self._coeffs, axes=self.grid.axes) * self.grid.size
            if self._real:
                s = s.real.copy()
            s.setflags(write=False)
            self._samples = s
        return self._samples

    def imag_residual(self) -> float:
        """Max imaginary part of the inverse transform (0 for fields built from samples)."""
        if self._coeffs is None:
            return 0.0 if self._real else float(np.abs(self._samples.imag).max())
        s = np.fft.ifftn(self._coeffs, axes=self.grid.axes) * self.grid.size
        return float(np.abs(s.imag).max())

    def mean(self) -> np.ndarray:
        c = self.coefficients[(...,) + (0,) * self.grid.m]
        return c.real.copy() if self._real else c.copy()

    def component(self, *idx) -> "PeriodicField":
        if self._coeffs is not None:
            return PeriodicField(self.grid, coeffs=self._coeffs[idx], real=self._real)
        return PeriodicField(self.grid, self._samples[idx], real=self._real)

    def _combine(self, other, op):
        if isinstance(other, PeriodicField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return PeriodicField(self.grid, op(self.samples, other.samples),
                                 real=self._real and other._real)
        return PeriodicField(self.grid, op(self.samples, other),
                             real=self._real and not np.iscomplexobj(other))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicField(self.grid, -self.samples, real=self._real)

    def evaluate(self, y, method: str = "fourier") -> np.ndarray:
        """Evaluate at arbitrary points y (shape (m, P)), reduced mod 1.

        ``fourier`` sums the trigonometric interpolant (exact for
        trigonometric polynomials resolved by the grid; Nyquist coefficients
        enter as cosines).  ``nearest`` returns the sample at the nearest grid
        node, which keeps discontinuous phase fields sharp.
        """
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y.reshape(self.grid.m, 1)
        y = np.mod(y, 1.0)
        if method == "nearest":
            idx = np.rint(y * self.grid.N).astype(np.int64) % self.grid.N
            return self.samples[(...,) + tuple(idx)]
        if method != "fourier":
            raise ValueError(f"unknown interpolation method {method!r}")
        c = self.coefficients
        flat = c.reshape(self.components + (-1,))
        nz = np.any(flat != 0, axis=tuple(range(len(self.components))))
        if 4 * np.count_nonzero(nz) > nz.size:
            out = self._evaluate_separable(y)
        else:
            out = self._evaluate_sparse(y, flat, nz)
        return out.real if self._real else out

    def _axis_phases(self, yj):
        """exp(2 pi i k y) for k in FFT order, the Nyquist row as a cosine."""
        k = np.fft.fftfreq(self.grid.N, 1.0 / self.grid.N)
        e = np.exp(TWO_PI_I * np.outer(k, yj))
        e[self.grid.N // 2] = np.cos(np.pi * self.grid.N * yj)
        return e

    def _evaluate_separable(self, y):
        m, N = self.grid.m, self.grid.N
        c = self.coefficients.reshape((-1,) + (N,) * m)
        P = y.shape[1]
        out = np.empty((c.shape[0], P), dtype=np.complex128)
        step = max(1, 2**24 // (c.shape[0] * N ** max(m - 1, 1)))
        for s in range(0, P, step):
            yy = y[:, s:s + step]
            acc = c @ self._axis_phases(yy[m - 1])
            for j in range(m - 2, -1, -1):
                acc = np.einsum("...kp,kp->...p", acc, self._axis_phases(yy[j]))
            out[:, s:s + step] = acc
        return out.reshape(self.components + (P,))

    def _evaluate_sparse(self, y, flat, nz):
        k = self.grid.modes().reshape(self.grid.m, -1)[:, nz]
        cc = flat[..., nz]
        nyq = k == -self.grid.N // 2
        kk = np.where(nyq, 0, k)
        out = np.zeros(self.components + (y.shape[1],), dtype=np.complex128)
        step = max(1, 2**22 // max(1, k.shape[1]))
        for s in range(0, y.shape[1], step):
            yy = y[:, s:s + step]
            phase = np.exp(TWO_PI_I * (kk.T @ yy))
            for j in range(self.grid.m):
                if np.any(nyq[j]):
                    cosf = np.cos(np.pi * self.grid.N * yy[j])
                    phase = np.where(nyq[j][:, None], phase * cosf[None, :], phase)
            out[..., s:s + step] = cc @ phase
        return out

    def __repr__(self):
        return f"PeriodicField(rank={self.rank}, components={self.components}, m={self.grid.m}, N={self.grid.N})"


def inner(u: PeriodicField, v: PeriodicField) -> complex:
    """L^2(Y^m) inner product <u, v> = sum_k u_k . conj(v_k) (Parseval)."""
    if u.grid != v.grid or u.components != v.components:
        raise ValueError("inner product of incompatible fields")
    return complex(np.vdot(v.coefficients, u.coefficients))


def norm(u: PeriodicField) -> float:
    return float(np.sqrt(max(inner(u, u).real, 0.0)))


def _require(field: PeriodicField, comps: tuple, what: str):
    if field.components != comps:
        raise ValueError(f"{what} expects components {comps}, got {field.components}")


def grad_R(u: PeriodicField, R: ProjectionMatrix) -> PeriodicField:
    """Projected gradient (R^T grad_y) u; per mode 2 pi i (R^T k) u_k."""
    _require(u, (), "grad_R")
    wv = wavevectors(u.grid, R)
    return PeriodicField.from_coefficients(u.grid, TWO_PI_I * wv.xi * u.coefficients, real=u.is_real)


def div_R(v: PeriodicField, R: ProjectionMatrix) -> PeriodicField:
    """Projected divergence (R^T grad_y) . v of an n-vector field."""
    _require(v, (R.n,), "div_R")
    wv = wavevectors(v.grid, R)
    c = TWO_PI_I * np.sum(wv.xi * v.coefficients, axis=0)
    return PeriodicField.from_coefficients(v.grid, c, real=v.is_real)


def _cross(a, b):
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def curl_R(v: PeriodicField, R: ProjectionMatrix) -> PeriodicField:
    """Projected curl (R^T grad_y) x v; only defined for n = 3."""
    if R.n != 3:
        raise NotImplementedError(f"curl_R needs n = 3, got n = {R.n}")
    _require(v, (3,), "curl_R")
    wv = wavevectors(v.grid, R)
    return PeriodicField.from_coefficients(v.grid, TWO_PI_I * _cross(wv.xi, v.coefficients), real=v.is_real)


def project_parallel(coeffs: np.ndarray, wv: Wavevectors) -> np.ndarray:
    """Per mode xi (xi . c) / |xi|^2; zero on the mean and on truncated modes."""
    return wv.xi * (np.sum(wv.xi * coeffs, axis=0) * wv.inv_norm2())


def decompose_div(v: PeriodicField, R: ProjectionMatrix):
    """Split v = grad_part + divfree_part, with grad_part in L_R and div_R(divfree_part) = 0.

    The mean and the truncated Nyquist modes go to divfree_part.
    """
    _require(v, (R.n,), "decompose_div")
    wv = wavevectors(v.grid, R)
    wv.check(v.grid)
    g = project_parallel(v.coefficients, wv)
    grad_part = PeriodicField.from_coefficients(v.grid, g, real=v.is_real)
    rest = PeriodicField.from_coefficients(v.grid, v.coefficients - g, real=v.is_real)
    return grad_part, rest


def decompose_curl(v: PeriodicField, R: ProjectionMatrix):
    """Split v = curlfree_part + curl_part for n = 3; curl_part lies in M_R.

    Constants and truncated modes are curl-free and go to curlfree_part.
    """
    if R.n != 3:
        raise NotImplementedError(f"decompose_curl needs n = 3, got n = {R.n}")
    _require(v, (3,), "decompose_curl")
    wv = wavevectors(v.grid, R)
    wv.check(v.grid)
    g = project_parallel(v.coefficients, wv)
    passive = ~wv.active
    g = np.where(passive, v.coefficients, g)
    return (PeriodicField.from_coefficients(v.grid, g, real=v.is_real),
            PeriodicField.from_coefficients(v.grid, v.coefficients - g, real=v.is_real))


def potential(v: PeriodicField, R: ProjectionMatrix) -> PeriodicField:
    """Mean-zero potential phi with grad_R phi equal to the L_R part of v."""
    _require(v, (R.n,), "potential")
    wv = wavevectors(v.grid, R)
    wv.check(v.grid)
    xi_dot = np.sum(wv.xi * v.coefficients, axis=0)
    c = xi_dot * wv.inv_norm2() / TWO_PI_I
    return PeriodicField.from_coefficients(v.grid, c, real=v.is_real)


def r_poisson_solve(f: PeriodicField, R: ProjectionMatrix, tol: float = 1e-12) -> PeriodicField:
    """Solve -div_R grad_R theta = f with theta of zero mean.

    Per mode theta_k = f_k / (4 pi^2 |R^T k|^2).  The right-hand side must
    have zero mean and no Nyquist content, both of which lie outside the
    range of the discrete operator.
    """
    _require(f, (), "r_poisson_solve")
    c = f.coefficients
    scale = max(float(np.abs(c).max()), 1.0)
    mean = abs(c[(0,) * f.grid.m])
    if mean > tol * scale:
        raise SolvabilityError(f"right-hand side has nonzero mean {mean:.3e}")
    nyq = ~f.grid.active()
    if np.any(nyq) and float(np.abs(c[nyq]).max()) > tol * scale:
        raise SolvabilityError("right-hand side has content on truncated Nyquist modes")
    wv = wavevectors(f.grid, R)
    wv.check(f.grid)
    theta = c * wv.inv_norm2() / (4.0 * np.pi**2)
    return PeriodicField.from_coefficients(f.grid, theta, real=f.is_real)


def random_field(grid: Grid, components=(), rng=None, *, decay: float = 0.0) -> PeriodicField:
    """Real random field with Gaussian coefficients and no Nyquist content.

    ``decay`` > 0 damps mode k by (1 + |k|^2)^(-decay / 2).
    """
    rng = np.random.default_rng(rng)
    s = rng.standard_normal(tuple(components) + grid.shape)
    c = np.fft.fftn(s, axes=grid.axes) / grid.size
    c = c * grid.active()
    if decay:
        k2 = np.sum(grid.modes().astype(np.float64) ** 2, axis=0)
        c = c * (1.0 + k2) ** (-decay / 2.0)
    samples = (np.fft.ifftn(c, axes=grid.axes) * grid.size).real
    return PeriodicField(grid, samples)


def save_field(field: PeriodicField, path) -> Path:
    """Write raw little-endian float64 samples plus a JSON sidecar next to them."""
    if not field.is_real:
        raise ValueError("only real fields can be dumped")
    path = Path(path)
    if path.suffix != ".f64":
        path = path.with_suffix(".f64")
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(field.samples, dtype="<f8")
    path.write_bytes(data.tobytes(order="C"))
    meta = {
        "m": field.grid.m,
        "N": field.grid.N,
        "rank": field.rank,
        "components": list(field.components),
        "layout": "row-major",
        "dtype": "f64le",
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def load_field(path) -> PeriodicField:
    path = Path(path)
    if path.suffix != ".f64":
        path = path.with_suffix(".f64")
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta.get("dtype") != "f64le" or meta.get("layout") != "row-major":
        raise ValueError(f"unsupported field dump encoding in {path}")
    grid = Grid(int(meta["m"]), int(meta["N"]))
    comps = tuple(int(c) for c in meta["components"])
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    expected = int(np.prod(comps, dtype=np.int64)) * grid.size
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {data.size}")
    return PeriodicField(grid, data.reshape(comps + grid.shape).astype(np.float64))
