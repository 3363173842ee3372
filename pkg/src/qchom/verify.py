"""Ergodic means of quasiperiodic functions and 1D fine-scale checks of the homogenised limit."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .cellsolve import CellSolution, MaterialField, SolverConfig, solve_scalar_cell
from .cutproj import ProjectionMatrix
from .effective import effective_conductivity
from .errors import UnresolvedMicroscaleError
from .fourier import PeriodicField
from .serialize import csv_text


def sample_quasiperiodic(g: PeriodicField, R: ProjectionMatrix, x, eta: float = 1.0,
                         method: str = "fourier"):
    """Values of g at (R x / eta) mod 1 for points x of shape (n,) or (n, P)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xx = x.reshape(R.n, -1)
    y = (R.entries @ xx) / eta
    vals = g.evaluate(y, method=method)
    return vals[..., 0] if single else vals


@dataclass(frozen=True)
class ErgodicEstimate:
    A: float
    value: complex
    cell_mean: complex
    gap: float


def sinc_box_average(k, R: ProjectionMatrix, A: float) -> float:
    """Exact average of exp(2 pi i k . R x) over [-A, A]^n: prod_j sinc(2 (R^T k)_j A)."""
    xi = R.project(np.asarray(k))
    return float(np.prod(np.sinc(2.0 * xi * A)))


def exact_box_average(g: PeriodicField, R: ProjectionMatrix, A: float) -> complex:
    """Box average of g o R summed mode by mode with the sinc products."""
    c = g.coefficients
    nz = np.argwhere(c != 0)
    k = g.grid.modes()
    total = 0j
    for idx in nz:
        kk = np.array([k[j][tuple(idx)] for j in range(g.grid.m)])
        total += complex(c[tuple(idx)]) * sinc_box_average(kk, R, A)
    return total


def gap_bound(g: PeriodicField, R: ProjectionMatrix, A: float) -> float:
    """sum_{k != 0} |c_k| |prod_j sinc(2 xi_j A)|, an upper bound on |box average - cell mean|."""
    c = g.coefficients
    xi = np.einsum("jl,j...->l...", R.entries, g.grid.modes().astype(np.float64))
    prod = np.prod(np.sinc(2.0 * xi * A), axis=0)
    prod[(0,) * g.grid.m] = 0.0
    return float(np.sum(np.abs(c) * np.abs(prod)))


def _nodes_1d(A, count, rule, order=16):
    if rule == "uniform":
        h = 2.0 * A / count
        return -A + h * (np.arange(count) + 0.5), np.full(count, 1.0 / count)
    if rule == "gauss":
        panels = max(1, -(-count // order))
        t, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(-A, A, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
        ww = (half[:, None] * w[None, :]).ravel() / (2.0 * A)
        return x, ww
    raise ValueError(f"unknown quadrature rule {rule!r}")


def ergodic_mean(g: PeriodicField, R: ProjectionMatrix, A: float, samples: int = 10**5,
                 rule: str = "uniform") -> ErgodicEstimate:
    """Average of g(R x) over [-A, A]^n on a deterministic tensor grid.

    ``rule`` is ``uniform`` (midpoint grid) or ``gauss`` (composite
    Gauss-Legendre).  ``samples`` is the total point budget.
    """
    if not A > 0:
        raise ValueError("A must be positive")
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    per_axis = max(1, int(round(samples ** (1.0 / R.n))))
    x1, w1 = _nodes_1d(A, per_axis, rule)
    total = 0j
    if R.n == 1:
        vals = sample_quasiperiodic(g, R, x1[None, :])
        total = complex(np.sum(w1 * vals))
    else:
        rest = np.stack(np.meshgrid(*([x1] * (R.n - 1)), indexing="ij")).reshape(R.n - 1, -1)
        wrest = np.prod(np.stack(np.meshgrid(*([w1] * (R.n - 1)), indexing="ij")).reshape(R.n - 1, -1), axis=0)
        for xa, wa in zip(x1, w1):
            pts = np.vstack([np.full(rest.shape[1], xa), rest])
            vals = sample_quasiperiodic(g, R, pts)
            total += complex(wa * np.sum(wrest * vals))
    cell_mean = complex(g.coefficients[(0,) * g.grid.m])
    value = total.real if g.is_real else total
    return ErgodicEstimate(A=float(A), value=value, cell_mean=cell_mean, gap=abs(total - cell_mean))


@dataclass(frozen=True, eq=False)
class FineScaleRun:
    """P1 solve of -(sigma(R x / eta) u')' = f on (0, 1) with u(0) = u(1) = 0.

    ``grad_q`` holds the reconstructed fine gradient at the Gauss points
    ``xq`` (flux per element divided by the local coefficient).
    """

    eta: float
    mesh: int
    x: np.ndarray
    u_eta: np.ndarray
    xq: np.ndarray
    wq: np.ndarray
    grad_q: np.ndarray
    energy: float
    u_hom: np.ndarray | None = None
    grad_hom_q: np.ndarray | None = None
    l2_error: float | None = None
    h1_error: float | None = None
    corrector_error: float | None = None

    def row(self):
        return (self.eta, self.mesh, self.l2_error, self.h1_error, self.corrector_error)


def _p1_solve(a_e: np.ndarray, M: int, xq, wq, fq):
    """Tridiagonal P1 system with element conductances a_e / h and load from Gauss points."""
    h = 1.0 / M
    kk = a_e / h
    diag = kk[:-1] + kk[1:]
    off = -kk[1:-1]
    # load: int f phi_i over the two neighbouring elements
    xl = np.arange(M)[:, None] * h
    phi_right = (xq - xl) / h       # rising hat of the element's right node
    load_e_left = np.sum(wq * fq * (1.0 - phi_right), axis=1)
    load_e_right = np.sum(wq * fq * phi_right, axis=1)
    b = load_e_right[:-1] + load_e_left[1:]
    ab = np.zeros((3, M - 1))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    u = np.zeros(M + 1)
    u[1:-1] = solve_banded((1, 1), ab, b)
    return u


def _gauss_mesh(M, q):
    t, w = np.polynomial.legendre.leggauss(q)
    h = 1.0 / M
    left = np.arange(M)[:, None] * h
    xq = left + 0.5 * h * (t[None, :] + 1.0)
    wq = np.broadcast_to(0.5 * h * w, (M, q)).copy()
    return xq, wq


def _scalar_field(sigma) -> PeriodicField:
    if isinstance(sigma, MaterialField):
        if sigma.n != 1:
            raise ValueError("fine-scale checks are one-dimensional (n = 1)")
        return sigma.values.component(0, 0)
    return sigma


def solve_fine_1d(sigma_cell, R: ProjectionMatrix, f: Callable, eta: float, M: int,
                  method: str = "fourier", quad: int = 4) -> FineScaleRun:
    """Solve the oscillating problem with coefficient sigma(R x / eta).

    Element conductances are harmonic means of the coefficient over the
    element's Gauss points.  The mesh must resolve the microscale:
    M >= 20 / eta.
    """
    if R.n != 1:
        raise ValueError("solve_fine_1d needs n = 1")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if M < 20.0 / eta:
        raise UnresolvedMicroscaleError(f"M = {M} cells do not resolve eta = {eta:g}; need M >= {20.0 / eta:g}")
    g = _scalar_field(sigma_cell)
    xq, wq = _gauss_mesh(M, quad)
    sig = np.asarray(sample_quasiperiodic(g, R, xq.reshape(1, -1), eta, method=method)).real.reshape(xq.shape)
    if np.any(sig <= 0):
        raise ValueError("coefficient is not positive along the line")
    h = 1.0 / M
    a_e = 1.0 / (np.sum(wq / sig, axis=1) / h)
    fq = np.asarray(f(xq), dtype=np.float64) * np.ones_like(xq)
    u = _p1_solve(a_e, M, xq, wq, fq)
    slope = np.diff(u) / h
    grad_q = (a_e * slope)[:, None] / sig
    energy = float(np.sum(a_e * slope * slope) * h)
    return FineScaleRun(eta=float(eta), mesh=M, x=np.linspace(0.0, 1.0, M + 1), u_eta=u,
                        xq=xq, wq=wq, grad_q=grad_q, energy=energy)


def attach_homogenized(run: FineScaleRun, sigma_h: float, f: Callable) -> FineScaleRun:
    """Solve -sigma_h u'' = f on the run's mesh and record ||u_eta - u|| and ||u_eta' - u'||."""
    M = run.mesh
    h = 1.0 / M
    fq = np.asarray(f(run.xq), dtype=np.float64) * np.ones_like(run.xq)
    u = _p1_solve(np.full(M, float(sigma_h)), M, run.xq, run.wq, fq)
    slope = np.diff(u) / h
    grad_hom = np.broadcast_to(slope[:, None], run.xq.shape).copy()
    t = (run.xq - run.x[:-1, None]) / h
    diff = (run.u_eta[:-1, None] - u[:-1, None]) * (1.0 - t) + (run.u_eta[1:, None] - u[1:, None]) * t
    l2 = float(np.sqrt(np.sum(run.wq * diff * diff)))
    h1 = float(np.sqrt(np.sum(run.wq * (run.grad_q - grad_hom) ** 2)))
    return replace(run, u_hom=u, grad_hom_q=grad_hom, l2_error=l2, h1_error=h1)


def corrector_error(run: FineScaleRun, chi: CellSolution, R: ProjectionMatrix, eta: float | None = None) -> float:
    """|| u_eta' - u' (1 - w(R x / eta)) ||_{L^2(0,1)} with w = grad_R chi from the cell solve.

    The corrector is evaluated off-grid by trigonometric interpolation.
    """
    if run.grad_hom_q is None:
        raise ValueError("attach the homogenised solution first")
    eta = run.eta if eta is None else eta
    w = chi.corrector.component(0)
    wq = np.asarray(sample_quasiperiodic(w, R, run.xq.reshape(1, -1), eta)).real.reshape(run.xq.shape)
    err = run.grad_q - run.grad_hom_q * (1.0 - wq)
    return float(np.sqrt(np.sum(run.wq * err * err)))


def convergence_ladder(sigma: MaterialField, R: ProjectionMatrix, etas, M: int | None = None,
                       f: Callable = lambda x: np.ones_like(x), cfg: SolverConfig = SolverConfig(),
                       method: str = "fourier"):
    """Fine-scale runs along an eta ladder with L^2, plain H^1 and corrected H^1 errors.

    Returns ``(runs, sigma_h, cell_solution)``.
    """
    sol = solve_scalar_cell(sigma, 0, R, cfg)
    sigma_h = float(effective_conductivity(sigma, [sol], R).entries[0, 0])
    runs = []
    for eta in etas:
        mesh = M if M is not None else int(np.ceil(100.0 / eta))
        run = solve_fine_1d(sigma, R, f, eta, mesh, method=method)
        run = attach_homogenized(run, sigma_h, f)
        run = replace(run, corrector_error=corrector_error(run, sol, R))
        runs.append(run)
    return runs, sigma_h, sol


def ladder_csv(runs) -> str:
    return csv_text(["eta", "M", "l2_error", "h1_error", "corrector_error"], [r.row() for r in runs])


def ergodic_csv(estimates) -> str:
    return csv_text(["A", "gap"], [(e.A, e.gap) for e in estimates])
