"""Builtin coefficient fields on Y^m: laminates, the two-square cell, smooth two-phase media."""
from __future__ import annotations

import numpy as np

from .cellsolve import MaterialField
from .cutproj import TAU, pythagorean_phase
from .fourier import Grid


def laminate(grid: Grid, mean: float = 2.0, amplitude: float = 1.0, axis: int = 0) -> np.ndarray:
    """mean + amplitude * cos(2 pi y_axis)."""
    y = grid.points()
    return mean + amplitude * np.cos(2 * np.pi * y[axis])


def cosine_sum(grid: Grid, mean: float = 3.0, amplitude: float = 1.0) -> np.ndarray:
    """mean + amplitude * sum_j cos(2 pi y_j); positive when mean > m * amplitude."""
    y = grid.points()
    return mean + amplitude * np.cos(2 * np.pi * y).sum(axis=0)


def checkerboard_phase(grid: Grid, ratio: float = TAU) -> np.ndarray:
    """A-phase indicator of the two-square cell sampled at the grid nodes (m = 2)."""
    if grid.m != 2:
        raise ValueError("the two-square checkerboard lives on Y^2")
    return pythagorean_phase(grid.points(), ratio)


def smooth_phase(grid: Grid, sharpness: float = 2.0) -> np.ndarray:
    """Smooth phase fraction in [0, 1]: (1 + tanh(sharpness * mean_j cos 2 pi y_j)) / 2."""
    y = grid.points()
    return 0.5 * (1.0 + np.tanh(sharpness * np.cos(2 * np.pi * y).mean(axis=0)))


def random_smooth_phase(grid: Grid, seed: int, max_mode: int = 2) -> np.ndarray:
    """Random trigonometric polynomial with modes |k|_inf <= max_mode rescaled to [0, 1]."""
    if max_mode >= grid.N // 2:
        raise ValueError("max_mode must stay below the Nyquist index")
    rng = np.random.default_rng(seed)
    y = grid.points()
    side = np.arange(-max_mode, max_mode + 1)
    ks = np.stack(np.meshgrid(*([side] * grid.m), indexing="ij")).reshape(grid.m, -1).T
    val = np.zeros(grid.shape)
    for k in ks:
        if not np.any(k):
            continue
        a, b = rng.standard_normal(2) / (1.0 + float(k @ k))
        arg = 2 * np.pi * np.tensordot(k, y, axes=(0, 0))
        val += a * np.cos(arg) + b * np.sin(arg)
    lo, hi = val.min(), val.max()
    return (val - lo) / (hi - lo) if hi > lo else np.zeros(grid.shape)


def phase_field(grid: Grid, desc: dict) -> np.ndarray:
    """Phase fraction (1 = phase A) for a builtin geometry description."""
    geom = desc.get("geometry", "smooth")
    if geom == "checkerboard":
        return checkerboard_phase(grid, desc.get("ratio", TAU)).astype(np.float64)
    if geom == "smooth":
        return smooth_phase(grid, desc.get("sharpness", 2.0))
    if geom == "random":
        return random_smooth_phase(grid, int(desc.get("seed", 0)), int(desc.get("max_mode", 2)))
    if geom == "laminate":
        y = grid.points()
        return 0.5 * (1.0 + np.cos(2 * np.pi * y[desc.get("axis", 0)]))
    raise ValueError(f"unknown geometry {geom!r}")


def two_phase(kind: str, grid: Grid, n: int, phase: np.ndarray, a, b) -> MaterialField:
    """Mix two isotropic phases with fraction ``phase`` of phase A.

    For conductivity and inverse permittivity ``a`` and ``b`` are scalars;
    for elasticity they are (lambda, mu) Lame pairs.
    """
    phase = np.asarray(phase, dtype=np.float64)
    if kind == "elasticity":
        (la, ma), (lb, mb) = a, b
        lam = la * phase + lb * (1.0 - phase)
        mu = ma * phase + mb * (1.0 - phase)
        return MaterialField.isotropic_elastic(grid, lam, mu, n)
    return MaterialField.isotropic(kind, grid, a * phase + b * (1.0 - phase), n)
