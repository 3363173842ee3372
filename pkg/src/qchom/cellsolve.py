"""Spectral solvers for the degenerate periodic cell problems on Y^m.

All three problems share one scheme.  The unknown is the total local field
e = E - w, where E is the unit macroscopic load and w is the corrector.  The
constitutive product (flux = material : e) is taken pointwise on the grid.
A Green operator built from xi = R^T k acts mode by mode, so iterates stay
in E + L_R (gradients) or in E + M_R (curls) by construction.

* scalar conductivity: w = grad_R chi^k, flux sigma e
* elasticity: w = symmetrised grad_R chi^{kl}, stress C : e
* curl-curl (n = 3): w = curl_R chi^k, flux eps^-1 e

The basic Moulinec-Suquet fixed point e <- E - Gamma0 (a - a0) e is the
default.  Conjugate gradients on the Galerkin form G a G e~ = -G a E is
available for a plain (alpha = 0) reference medium.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .cutproj import ProjectionMatrix
from .errors import CoercivityError, ConvergenceError
from .fourier import Grid, PeriodicField, Wavevectors, wavevectors

log = logging.getLogger(__name__)

SMALL_DIVISOR = 1e-3

KINDS = ("conductivity", "elasticity", "inverse_permittivity")


class SmallDivisorWarning(RuntimeWarning):
    """The smallest |R^T k| on the grid is below the small-divisor threshold."""


def _mandel(C: np.ndarray, n: int) -> np.ndarray:
    """Rank-4 array (n, n, n, n, ...) -> Mandel matrices (..., p, p) on symmetric tensors."""
    pairs = [(i, i) for i in range(n)] + [(i, j) for i in range(n) for j in range(i + 1, n)]
    w = [1.0 if i == j else np.sqrt(2.0) for i, j in pairs]
    p = len(pairs)
    out = np.empty(C.shape[4:] + (p, p))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            out[..., a, b] = w[a] * w[b] * C[i, j, k, l]
    return out


@dataclass(frozen=True, eq=False)
class MaterialField:
    """Coefficient field of a cell problem with its pointwise eigenvalue bounds.

    ``values`` has components (n, n) for conductivity and inverse permittivity
    and (n, n, n, n) for elasticity.  Construction checks symmetry and
    coercivity at every grid node.
    """

    kind: str
    values: PeriodicField
    bounds: tuple = field(default=(0.0, 0.0), compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown material kind {self.kind!r}")
        v = self.values.samples
        comps = self.values.components
        if self.kind == "elasticity":
            if len(comps) != 4 or len(set(comps)) != 1:
                raise ValueError(f"elasticity needs (n, n, n, n) components, got {comps}")
        elif len(comps) != 2 or comps[0] != comps[1]:
            raise ValueError(f"{self.kind} needs (n, n) components, got {comps}")
        if self.kind == "inverse_permittivity" and comps[0] != 3:
            raise ValueError("inverse permittivity is a 3 x 3 tensor field")
        scale = max(float(np.abs(v).max()), 1e-300)
        if self.kind == "elasticity":
            defects = [
                np.abs(v - v.transpose((1, 0, 2, 3) + tuple(range(4, v.ndim)))).max(),
                np.abs(v - v.transpose((0, 1, 3, 2) + tuple(range(4, v.ndim)))).max(),
                np.abs(v - v.transpose((2, 3, 0, 1) + tuple(range(4, v.ndim)))).max(),
            ]
            if max(defects) > 1e-12 * scale:
                raise CoercivityError("elasticity tensor lacks minor/major symmetry")
            eig = np.linalg.eigvalsh(_mandel(v, comps[0]))
        else:
            if np.abs(v - np.swapaxes(v, 0, 1)).max() > 1e-12 * scale:
                raise CoercivityError(f"{self.kind} tensor is not symmetric")
            eig = np.linalg.eigvalsh(np.moveaxis(v, (0, 1), (-2, -1)))
        lo, hi = float(eig.min()), float(eig.max())
        if not lo > 0:
            raise CoercivityError(f"{self.kind} is not coercive: smallest eigenvalue {lo:.3e}")
        object.__setattr__(self, "bounds", (lo, hi))

    @property
    def grid(self) -> Grid:
        return self.values.grid

    @property
    def n(self) -> int:
        return self.values.components[0]

    @classmethod
    def isotropic(cls, kind: str, grid: Grid, scalar, n: int) -> "MaterialField":
        """Scalar field s(y) times the n x n identity."""
        s = np.broadcast_to(np.asarray(scalar, dtype=np.float64), grid.shape)
        vals = np.einsum("ij,...->ij...", np.eye(n), s)
        return cls(kind, PeriodicField(grid, vals))

    @classmethod
    def isotropic_elastic(cls, grid: Grid, lam, mu, n: int) -> "MaterialField":
        """C_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk) with Lame fields lam(y), mu(y)."""
        lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), grid.shape)
        mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), grid.shape)
        d = np.eye(n)
        vol = np.einsum("ij,kl->ijkl", d, d)
        sym = np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
        vals = np.einsum("ijkl,...->ijkl...", vol, lam) + np.einsum("ijkl,...->ijkl...", sym, mu)
        return cls("elasticity", PeriodicField(grid, vals))

    def scaled(self, factor: float) -> "MaterialField":
        return MaterialField(self.kind, PeriodicField(self.grid, self.values.samples * factor))


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls.  ``reference`` None picks (c_min + c_max) / 2."""

    reference: float | None = None
    tol: float = 1e-8
    max_iter: int = 10_000
    acceleration: str = "none"
    alpha: float = 0.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.reference is not None and not self.reference > 0:
            raise ValueError("reference modulus must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.acceleration not in ("none", "conjugate-gradient", "cg"):
            raise ValueError(f"unknown acceleration {self.acceleration!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.alpha > 0 and self.uses_cg:
            raise ValueError("conjugate-gradient acceleration requires alpha = 0")

    @property
    def uses_cg(self) -> bool:
        return self.acceleration in ("conjugate-gradient", "cg")


@dataclass(frozen=True, eq=False)
class CellSolution:
    """Corrector of one unit load plus solver diagnostics."""

    problem: str
    direction: object
    load: np.ndarray
    corrector: PeriodicField
    residual_history: list
    iterations: int
    min_xi_norm: float
    converged: bool = True
    tol: float = 0.0

    @property
    def field(self) -> PeriodicField:
        """Total local field E - w."""
        return PeriodicField.constant(self.corrector.grid, self.load) - self.corrector

    def diagnostics(self) -> dict:
        d = self.direction
        return {
            "direction": list(d) if isinstance(d, tuple) else d,
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "min_xi_norm": self.min_xi_norm,
        }


def _ifft(c, grid):
    return (np.fft.ifftn(c, axes=grid.axes) * grid.size).real


def _fft(s, grid):
    return np.fft.fftn(s, axes=grid.axes) / grid.size


class _Problem:
    """Problem-specific pieces: flux, Green operator, projector and residual."""

    def __init__(self, material: MaterialField, R: ProjectionMatrix, cfg: SolverConfig):
        self.mat = material
        self.grid = material.grid
        self.R = R
        self.cfg = cfg
        self.wv: Wavevectors = wavevectors(self.grid, R)
        self.wv.check(self.grid)
        lo, hi = material.bounds
        self.a0 = cfg.reference if cfg.reference is not None else 0.5 * (lo + hi)
        self.zero = (0,) * self.grid.m
        self.damp = 1.0
        if cfg.alpha > 0 and material.kind != "conductivity":
            raise ValueError("alpha regularisation is only defined for the scalar cell problem")
        if cfg.alpha > 0:
            # |P_perp k|^2 for the alpha (I_m - R (R^T R)^-1 R^T) regulariser
            k = self.grid.modes().astype(np.float64)
            gram_inv = np.linalg.inv(R.entries.T @ R.entries)
            par = np.einsum("i...,ij,j...->...", self.wv.xi, gram_inv, self.wv.xi)
            perp = np.maximum(np.sum(k * k, axis=0) - par, 0.0) * self.wv.active
            self.damp = np.where(self.wv.active,
                                 self.a0 * self.wv.norm2 / np.where(self.wv.active, self.a0 * self.wv.norm2 + cfg.alpha * perp, 1.0),
                                 0.0)
            self.perp_over = cfg.alpha * perp * self.wv.inv_norm2()

    def flux(self, e):
        raise NotImplementedError

    def project(self, c):
        """Orthogonal projector onto admissible corrector coefficients (k != 0)."""
        raise NotImplementedError

    def green(self, tau_c):
        return -self.damp * self.project(tau_c) / self.a0

    def residual_vector(self, q_c, e_c):
        raise NotImplementedError

    def residual(self, q_c, e_c):
        r = self.residual_vector(q_c, e_c)
        mean = np.sqrt(np.sum(np.abs(q_c[(...,) + self.zero]) ** 2))
        return float(np.sqrt(np.sum(np.abs(r) ** 2)) / max(mean, 1e-300))


class _Scalar(_Problem):
    name = "conductivity"

    def flux(self, e):
        return np.einsum("ij...,j...->i...", self.mat.values.samples, e)

    def project(self, c):
        xi = self.wv.xi
        return xi * (np.sum(xi * c, axis=0) * self.wv.inv_norm2())

    def residual_vector(self, q_c, e_c):
        r = 2 * np.pi * np.sum(self.wv.xi * q_c, axis=0)
        if self.cfg.alpha > 0:
            r = r + 2 * np.pi * self.perp_over * np.sum(self.wv.xi * e_c, axis=0)
        return r


class _Elastic(_Problem):
    name = "elasticity"

    def flux(self, e):
        return np.einsum("ijkl...,kl...->ij...", self.mat.values.samples, e)

    def project(self, c):
        # compatible symmetric strains sym(xi (x) a); Moulinec-Suquet Green
        # operator with lambda0 = 0 scaled to a projector
        xi = self.wv.xi
        inv = self.wv.inv_norm2()
        a = np.einsum("ij...,j...->i...", c, xi)
        xa = np.sum(xi * a, axis=0)
        sym = np.einsum("i...,j...->ij...", xi, a)
        sym = sym + np.swapaxes(sym, 0, 1)
        return sym * inv - np.einsum("i...,j...->ij...", xi, xi) * (xa * inv * inv)

    def residual_vector(self, q_c, e_c):
        r = 2 * np.pi * np.einsum("ij...,j...->i...", q_c, self.wv.xi)
        if self.cfg.alpha > 0:
            r = r + 2 * np.pi * self.perp_over * np.einsum("ij...,j...->i...", e_c, self.wv.xi)
        return r


class _Curl(_Problem):
    name = "inverse_permittivity"

    def flux(self, e):
        return np.einsum("ij...,j...->i...", self.mat.values.samples, e)

    def project(self, c):
        xi = self.wv.xi
        par = xi * (np.sum(xi * c, axis=0) * self.wv.inv_norm2())
        return (c - par) * self.wv.active

    def residual_vector(self, q_c, e_c):
        xi = self.wv.xi
        r = 2 * np.pi * np.stack([
            xi[1] * q_c[2] - xi[2] * q_c[1],
            xi[2] * q_c[0] - xi[0] * q_c[2],
            xi[0] * q_c[1] - xi[1] * q_c[0],
        ])
        return r * self.wv.active


def _fixed_point(prob: _Problem, E: np.ndarray):
    grid, cfg = prob.grid, prob.cfg
    bcast = E.reshape(E.shape + (1,) * grid.m)
    e = np.broadcast_to(bcast, E.shape + grid.shape).copy()
    e_c = _fft(e, grid)
    history = []
    for it in range(cfg.max_iter + 1):
        q = prob.flux(e)
        q_c = _fft(q, grid)
        res = prob.residual(q_c, e_c)
        history.append(res)
        if res <= cfg.tol:
            return e, history, it, True
        if it == cfg.max_iter:
            break
        tau_c = q_c - prob.a0 * e_c
        e_c = prob.green(tau_c)
        e_c[(...,) + prob.zero] = E
        e = _ifft(e_c, grid)
    return e, history, cfg.max_iter, False


def _conjugate_gradient(prob: _Problem, E: np.ndarray):
    grid, cfg = prob.grid, prob.cfg
    bcast = np.broadcast_to(E.reshape(E.shape + (1,) * grid.m), E.shape + grid.shape)

    def G(s):
        return _ifft(prob.project(_fft(s, grid)), grid)

    def A(s):
        return G(prob.flux(s))

    def eq_residual(x):
        e = bcast + x
        q_c = _fft(prob.flux(e), grid)
        return e, prob.residual(q_c, None)

    x = np.zeros(E.shape + grid.shape)
    r = -G(prob.flux(bcast))
    p = r.copy()
    rr = float(np.sum(r * r))
    e, res = eq_residual(x)
    history = [res]
    for it in range(1, cfg.max_iter + 1):
        if res <= cfg.tol:
            return e, history, it - 1, True
        Ap = A(p)
        pAp = float(np.sum(p * Ap))
        if pAp <= 0:
            break
        step = rr / pAp
        x += step * p
        r -= step * Ap
        rr_new = float(np.sum(r * r))
        p = r + (rr_new / rr) * p
        rr = rr_new
        e, res = eq_residual(x)
        history.append(res)
    return e, history, len(history) - 1, res <= cfg.tol


def _solve(prob: _Problem, E: np.ndarray, direction):
    grid = prob.grid
    min_xi = prob.wv.min_norm
    if min_xi < SMALL_DIVISOR:
        warnings.warn(
            f"smallest projected wavevector |R^T k| = {min_xi:.3e} on the N={grid.N} grid; "
            "the Green operator is badly conditioned",
            SmallDivisorWarning,
            stacklevel=3,
        )
    runner = _conjugate_gradient if prob.cfg.uses_cg else _fixed_point
    e, history, its, ok = runner(prob, np.asarray(E, dtype=np.float64))
    log.debug("%s cell %s: %d iterations, residual %.3e", prob.name, direction, its, history[-1])
    if not ok:
        raise ConvergenceError(
            f"{prob.name} cell problem for load {direction} did not reach tol={prob.cfg.tol:g} "
            f"in {prob.cfg.max_iter} iterations (last residual {history[-1]:.3e})",
            residual_history=history,
            iterations=its,
        )
    bcast = np.broadcast_to(E.reshape(E.shape + (1,) * grid.m), E.shape + grid.shape)
    corrector = PeriodicField(grid, bcast - e)
    return CellSolution(
        problem=prob.name,
        direction=direction,
        load=np.array(E, dtype=np.float64),
        corrector=corrector,
        residual_history=history,
        iterations=its,
        min_xi_norm=min_xi,
        converged=True,
        tol=prob.cfg.tol,
    )


def _check(material: MaterialField, kind: str, R: ProjectionMatrix):
    if material.kind != kind:
        raise ValueError(f"expected a {kind} material, got {material.kind}")
    if material.n != R.n:
        raise ValueError(f"material is {material.n}-dimensional but R has n = {R.n}")
    if material.grid.m != R.m:
        raise ValueError(f"material lives on Y^{material.grid.m} but R has m = {R.m}")


def solve_scalar_cell(sigma: MaterialField, k_dir: int, R: ProjectionMatrix,
                      cfg: SolverConfig = SolverConfig()) -> CellSolution:
    """Corrector w = grad_R chi^k for the unit load e_k (k_dir is 0-based).

    The returned field satisfies, on every active grid mode, the weak form
    int sigma (e_k - w) . grad_R phi = 0 up to ``cfg.tol`` in the equilibrium
    residual ||div_R(sigma e)|| / ||<sigma e>||.
    """
    _check(sigma, "conductivity", R)
    if not 0 <= k_dir < R.n:
        raise ValueError(f"direction {k_dir} out of range for n = {R.n}")
    E = np.eye(R.n)[k_dir]
    return _solve(_Scalar(sigma, R, cfg), E, k_dir)


def solve_elastic_cell(C: MaterialField, load: tuple, R: ProjectionMatrix,
                       cfg: SolverConfig = SolverConfig()) -> CellSolution:
    """Strain corrector for the symmetric unit load sym(e_k (x) e_l), 0-based (k, l)."""
    _check(C, "elasticity", R)
    k, l = load
    if not (0 <= k < R.n and 0 <= l < R.n):
        raise ValueError(f"load {load} out of range for n = {R.n}")
    E = np.zeros((R.n, R.n))
    E[k, l] += 0.5
    E[l, k] += 0.5
    return _solve(_Elastic(C, R, cfg), E, (k, l))


def solve_curl_cell(eps_inv: MaterialField, k_dir: int, R: ProjectionMatrix,
                    cfg: SolverConfig = SolverConfig()) -> CellSolution:
    """Curl corrector curl_R chi^k in M_R for the unit load e_k, n = 3 only."""
    if R.n != 3:
        raise NotImplementedError(f"the curl cell problem needs n = 3, got n = {R.n}")
    _check(eps_inv, "inverse_permittivity", R)
    if not 0 <= k_dir < 3:
        raise ValueError(f"direction {k_dir} out of range for n = 3")
    E = np.eye(3)[k_dir]
    return _solve(_Curl(eps_inv, R, cfg), E, k_dir)


def loads(kind: str, n: int) -> list:
    """Unit load labels of a problem, in report order."""
    if kind == "elasticity":
        return list(product(range(n), repeat=2))
    return list(range(n))


def solve_cell(material: MaterialField, direction, R: ProjectionMatrix,
               cfg: SolverConfig = SolverConfig()) -> CellSolution:
    if material.kind == "conductivity":
        return solve_scalar_cell(material, direction, R, cfg)
    if material.kind == "elasticity":
        return solve_elastic_cell(material, tuple(direction), R, cfg)
    return solve_curl_cell(material, direction, R, cfg)
