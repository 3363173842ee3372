"""Homogenised tensors assembled from converged cell solutions."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .cellsolve import (
    MaterialField,
    SolverConfig,
    _mandel,
    loads,
    solve_cell,
)
from .cutproj import ProjectionMatrix
from .errors import ConvergenceError
from .serialize import csv_text


@dataclass(frozen=True, eq=False)
class EffectiveTensor:
    """Homogenised coefficient with its symmetry and coercivity diagnostics.

    The tensor is stored as computed; ``symmetry_defect`` measures how far it
    is from (major) symmetry rather than forcing it.
    """

    kind: str
    entries: np.ndarray
    symmetry_defect: float
    min_eigenvalue: float
    solver_diagnostics: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "entries": self.entries.tolist(),
            "symmetry_defect": float(self.symmetry_defect),
            "min_eigenvalue": float(self.min_eigenvalue),
            "solver_diagnostics": list(self.solver_diagnostics),
        }

    def to_csv(self) -> str:
        nd = self.entries.ndim
        header = [f"i{a}" for a in range(nd)] + ["value"]
        rows = [list(idx) + [float(self.entries[idx])] for idx in np.ndindex(self.entries.shape)]
        return csv_text(header, rows)


def _check_solutions(material: MaterialField, solutions, expected, problem):
    if len(solutions) != len(expected):
        raise ValueError(f"need {len(expected)} cell solutions, got {len(solutions)}")
    for sol, d in zip(solutions, expected):
        if sol.problem != problem:
            raise ValueError(f"cell solution for {sol.problem} passed to {problem} assembly")
        got = tuple(sol.direction) if isinstance(sol.direction, (tuple, list)) else sol.direction
        if got != d:
            raise ValueError(f"cell solutions out of order: expected load {d}, got {got}")
        if not sol.converged:
            raise ConvergenceError(
                f"refusing to assemble from unconverged solution for load {d}",
                residual_history=sol.residual_history,
                iterations=sol.iterations,
            )
        if sol.corrector.grid != material.grid:
            raise ValueError("cell solution and material live on different grids")


def _grid_mean(a, m):
    return a.mean(axis=tuple(range(-m, 0)))


def _second_order(kind, material, solutions):
    m = material.grid.m
    vals = material.values.samples
    n = material.n
    T = np.empty((n, n))
    for k, sol in enumerate(solutions):
        flux = np.einsum("ij...,j...->i...", vals, sol.field.samples)
        T[:, k] = _grid_mean(flux, m)
    defect = float(np.abs(T - T.T).max())
    min_eig = float(np.linalg.eigvalsh(0.5 * (T + T.T)).min())
    return EffectiveTensor(kind, T, defect, min_eig, [s.diagnostics() for s in solutions])


def effective_conductivity(sigma: MaterialField, solutions, R: ProjectionMatrix) -> EffectiveTensor:
    """sigma^h_ik = < sigma_ij (delta_jk - w^k_j) >, one solution per direction k."""
    _check_solutions(sigma, solutions, list(range(R.n)), "conductivity")
    return _second_order("conductivity", sigma, solutions)


def effective_inverse_permittivity(eps_inv: MaterialField, solutions, R: ProjectionMatrix) -> EffectiveTensor:
    """eps^-1_h,ik = < eps^-1_ij (delta_jk - (curl_R chi^k)_j) >."""
    _check_solutions(eps_inv, solutions, [0, 1, 2], "inverse_permittivity")
    return _second_order("inverse_permittivity", eps_inv, solutions)


def effective_elasticity(C: MaterialField, solutions, R: ProjectionMatrix) -> EffectiveTensor:
    """C^h_ijkl = < C_ijpq (sym(e_k e_l)_pq - w^{kl}_pq) >, solutions in row-major (k, l) order."""
    n = R.n
    _check_solutions(C, solutions, list(product(range(n), repeat=2)), "elasticity")
    m = C.grid.m
    vals = C.values.samples
    T = np.empty((n, n, n, n))
    for sol in solutions:
        k, l = sol.direction
        stress = np.einsum("ijpq...,pq...->ij...", vals, sol.field.samples)
        T[:, :, k, l] = _grid_mean(stress, m)
    defect = float(np.abs(T - T.transpose(2, 3, 0, 1)).max())
    sym = 0.25 * (T + T.transpose(1, 0, 2, 3) + T.transpose(0, 1, 3, 2) + T.transpose(1, 0, 3, 2))
    sym = 0.5 * (sym + sym.transpose(2, 3, 0, 1))
    min_eig = float(np.linalg.eigvalsh(_mandel(sym, n)).min())
    return EffectiveTensor("elasticity", T, defect, min_eig, [s.diagnostics() for s in solutions])


def thread_count(default: int = 1) -> int:
    """Worker cap from the QCHOM_THREADS environment variable."""
    raw = os.environ.get("QCHOM_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def solve_all(material: MaterialField, R: ProjectionMatrix, cfg: SolverConfig = SolverConfig(),
              workers: int | None = None) -> list:
    """Cell solutions for every unit load of the problem, in assembly order.

    Independent loads run on a thread pool capped by ``workers`` (default:
    QCHOM_THREADS, else serial).  Elastic loads (l, k) reuse the (k, l) solve.
    """
    wanted = loads(material.kind, R.n)
    todo = [d for d in wanted if not (isinstance(d, tuple) and d[0] > d[1])]
    workers = thread_count() if workers is None else max(1, workers)
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(todo))) as pool:
            solved = list(pool.map(lambda d: solve_cell(material, d, R, cfg), todo))
    else:
        solved = [solve_cell(material, d, R, cfg) for d in todo]
    by_dir = dict(zip(todo, solved))
    out = []
    for d in wanted:
        if d in by_dir:
            out.append(by_dir[d])
        else:
            out.append(replace(by_dir[(d[1], d[0])], direction=d))
    return out


def assemble(material: MaterialField, solutions, R: ProjectionMatrix) -> EffectiveTensor:
    if material.kind == "conductivity":
        return effective_conductivity(material, solutions, R)
    if material.kind == "elasticity":
        return effective_elasticity(material, solutions, R)
    return effective_inverse_permittivity(material, solutions, R)


def homogenize(material: MaterialField, R: ProjectionMatrix, cfg: SolverConfig = SolverConfig(),
               workers: int | None = None):
    """Solve every cell problem and assemble the effective tensor.

    Returns ``(tensor, solutions)``.
    """
    solutions = solve_all(material, R, cfg, workers)
    return assemble(material, solutions, R), solutions
