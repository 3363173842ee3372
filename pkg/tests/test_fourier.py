import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qchom.cutproj import ProjectionMatrix, fibonacci_projection, penrose_projection
from qchom.errors import SingularModeError, SolvabilityError
from qchom.fourier import (
    Grid,
    PeriodicField,
    curl_R,
    decompose_curl,
    decompose_div,
    div_R,
    grad_R,
    inner,
    load_field,
    norm,
    potential,
    r_poisson_solve,
    random_field,
    save_field,
    wavevectors,
)

seeds = st.integers(0, 2**31 - 1)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(2, 7)
    with pytest.raises(ValueError):
        Grid(0, 8)
    g = Grid(3, 4)
    assert g.shape == (4, 4, 4) and g.size == 64
    assert g.modes().shape == (3, 4, 4, 4)
    assert np.count_nonzero(~g.active()) == 64 - 27


def test_samples_coefficients_round_trip(rng):
    g = Grid(2, 8)
    s = rng.standard_normal((2,) + g.shape)
    f = PeriodicField(g, s)
    back = PeriodicField.from_coefficients(g, f.coefficients)
    assert np.allclose(back.samples, s, atol=1e-14)
    assert np.allclose(f.mean(), s.mean(axis=(1, 2)))
    assert f.rank == "vector" and f.imag_residual() < 1e-14


def test_grad_of_single_mode_matches_analytic():
    R = fibonacci_projection()
    g = Grid(2, 8)
    y = g.points()
    k = np.array([2, -3])
    u = PeriodicField(g, np.cos(2 * np.pi * np.tensordot(k, y, 1)))
    xi = float(k @ R.entries[:, 0])
    expect = -2 * np.pi * xi * np.sin(2 * np.pi * np.tensordot(k, y, 1))
    assert np.allclose(grad_R(u, R).samples[0], expect, atol=1e-12)


def test_grad_is_directional_derivative_along_cut(rng):
    # d/dx u(R x) by central differences against grad_R u evaluated at R x
    R = penrose_projection()
    g = Grid(4, 6)
    u = random_field(g, (), rng)
    x = rng.standard_normal((2, 5))
    h = 1e-5
    G = grad_R(u, R)
    for j in range(2):
        e = np.zeros((2, 1)); e[j] = h
        fd = (u.evaluate(R.entries @ (x + e)) - u.evaluate(R.entries @ (x - e))) / (2 * h)
        assert np.allclose(G.component(j).evaluate(R.entries @ x), fd, atol=1e-6 * (1 + np.abs(fd).max()))


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_green_identity(seed):
    rng = np.random.default_rng(seed)
    R = penrose_projection()
    g = Grid(4, 4)
    phi = random_field(g, (2,), rng)
    th = random_field(g, (), rng)
    lhs = -inner(div_R(phi, R), th)
    rhs = inner(phi, grad_R(th, R))
    assert abs(lhs - rhs) < 1e-10 * (1 + norm(phi) * norm(th))


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_stokes_identity(seed):
    from qchom.cutproj import hyperplane_projection
    rng = np.random.default_rng(seed)
    R = hyperplane_projection([1.0, 2**0.5, 3**0.5, 5**0.5])
    g = Grid(4, 4)
    phi = random_field(g, (3,), rng)
    th = random_field(g, (3,), rng)
    assert abs(inner(curl_R(phi, R), th) - inner(phi, curl_R(th, R))) < 1e-10 * (1 + norm(phi) * norm(th))


def test_operator_compositions(rng, R4x3):
    g = Grid(4, 6)
    u = random_field(g, (), rng)
    v = random_field(g, (3,), rng)
    assert norm(curl_R(grad_R(u, R4x3), R4x3)) < 1e-10 * norm(u)
    assert norm(div_R(curl_R(v, R4x3), R4x3)) < 1e-10 * norm(v)
    # -div grad is multiplication by 4 pi^2 |xi|^2
    wv = wavevectors(g, R4x3)
    lap = -div_R(grad_R(u, R4x3), R4x3)
    assert np.allclose(lap.coefficients, 4 * np.pi**2 * wv.norm2 * u.coefficients * g.active(), atol=1e-10)


def test_curl_needs_three_dimensions(rng):
    g = Grid(4, 4)
    with pytest.raises(NotImplementedError):
        curl_R(random_field(g, (2,), rng), penrose_projection())


def test_decompose_div(rng):
    R = penrose_projection()
    g = Grid(4, 6)
    v = random_field(g, (2,), rng)
    grad_part, rest = decompose_div(v, R)
    assert norm(grad_part + rest - v) < 1e-12 * norm(v)
    assert abs(inner(grad_part, rest)) < 1e-10 * norm(v) ** 2
    assert norm(div_R(rest, R)) < 1e-10 * norm(v)
    phi = potential(v, R)
    assert norm(grad_R(phi, R) - grad_part) < 1e-10 * norm(v)
    again, zero = decompose_div(grad_part, R)
    assert np.allclose(again.coefficients, grad_part.coefficients, atol=1e-14)
    assert norm(zero) < 1e-13 * norm(v)


def test_decompose_div_mean_goes_to_divfree(rng):
    R = penrose_projection()
    g = Grid(4, 4)
    v = PeriodicField.constant(g, np.array([1.0, -2.0]))
    grad_part, rest = decompose_div(v, R)
    assert norm(grad_part) == 0.0
    assert np.allclose(rest.mean(), [1.0, -2.0])


def test_decompose_curl(rng, R4x3):
    g = Grid(4, 6)
    v = random_field(g, (3,), rng) + PeriodicField.constant(g, np.array([0.5, 0.0, 1.0]))
    cfree, cpart = decompose_curl(v, R4x3)
    assert norm(cfree + cpart - v) < 1e-12 * norm(v)
    assert abs(inner(cfree, cpart)) < 1e-10 * norm(v) ** 2
    assert norm(curl_R(cfree, R4x3)) < 1e-10 * norm(v)
    assert norm(div_R(cpart, R4x3)) < 1e-10 * norm(v)
    assert np.allclose(cfree.mean(), v.mean())
    assert np.allclose(cpart.mean(), 0.0)
    xi = wavevectors(g, R4x3).xi
    cross = np.stack([xi[1] * cpart.coefficients[2] - xi[2] * cpart.coefficients[1],
                      xi[2] * cpart.coefficients[0] - xi[0] * cpart.coefficients[2],
                      xi[0] * cpart.coefficients[1] - xi[1] * cpart.coefficients[0]])
    assert np.abs(np.sum(xi * cpart.coefficients, axis=0)).max() < 1e-12
    assert np.abs(cross).max() > 0


def test_poisson_round_trip(rng):
    R = penrose_projection()
    g = Grid(4, 6)
    psi = random_field(g, (), rng)
    psi = psi - PeriodicField.constant(g, psi.mean())
    f = -div_R(grad_R(psi, R), R)
    theta = r_poisson_solve(f, R)
    assert norm(theta - psi) < 1e-10 * norm(psi)
    res = -div_R(grad_R(theta, R), R) - f
    assert norm(res) < 1e-10 * norm(f)


def test_poisson_solvability():
    R = fibonacci_projection()
    g = Grid(2, 8)
    with pytest.raises(SolvabilityError):
        r_poisson_solve(PeriodicField.constant(g, 1.0), R)
    nyq = np.cos(np.pi * 8 * g.points()[0])
    with pytest.raises(SolvabilityError):
        r_poisson_solve(PeriodicField(g, nyq), R)


def test_singular_modes_reported():
    R = ProjectionMatrix(np.array([[1.0], [0.5]]))
    g = Grid(2, 8)
    with pytest.raises(SingularModeError) as info:
        decompose_div(PeriodicField(g, np.ones((1,) + g.shape)), R)
    assert (1, -2) in info.value.modes or (-1, 2) in info.value.modes


def test_evaluate_trig_polynomial_off_grid(rng):
    g = Grid(3, 6)
    y = rng.random((3, 40))
    k1, k2 = np.array([1, -2, 0]), np.array([2, 2, -1])
    f = lambda yy: 1.5 + np.cos(2 * np.pi * np.tensordot(k1, yy, 1)) - 0.3 * np.sin(2 * np.pi * np.tensordot(k2, yy, 1))
    F = PeriodicField(g, f(g.points()))
    assert np.allclose(F.evaluate(y), f(y), atol=1e-12)
    assert np.allclose(F.evaluate(g.points().reshape(3, -1)), F.samples.ravel(), atol=1e-12)


def test_evaluate_nyquist_is_cosine():
    g = Grid(1, 4)
    F = PeriodicField(g, np.cos(np.pi * 4 * g.points()[0]))
    y = np.array([[0.1, 0.37]])
    assert np.allclose(F.evaluate(y), np.cos(4 * np.pi * y[0]))


def test_evaluate_nearest():
    g = Grid(2, 4)
    s = np.arange(16.0).reshape(4, 4)
    F = PeriodicField(g, s)
    assert F.evaluate(np.array([[0.26], [0.49]]), method="nearest")[0] == s[1, 2]
    with pytest.raises(ValueError):
        F.evaluate(np.zeros((2, 1)), method="spline")


def test_random_field_is_real_and_nyquist_free(rng):
    g = Grid(2, 8)
    f = random_field(g, (2,), rng, decay=1.0)
    assert np.abs(f.coefficients[:, ~g.active()]).max() < 1e-15
    assert f.imag_residual() < 1e-14


def test_save_load_round_trip(tmp_path, rng):
    g = Grid(2, 4)
    f = random_field(g, (2, 2), rng)
    p = save_field(f, tmp_path / "x.f64")
    meta = json.loads(p.with_suffix(".json").read_text())
    assert meta == {"m": 2, "N": 4, "rank": "tensor", "components": [2, 2], "layout": "row-major", "dtype": "f64le"}
    raw = np.frombuffer(p.read_bytes(), dtype="<f8")
    assert np.array_equal(raw, f.samples.ravel())
    back = load_field(p)
    assert np.array_equal(back.samples, f.samples)


def test_field_arithmetic(rng):
    g = Grid(2, 4)
    a, b = random_field(g, (), rng), random_field(g, (), rng)
    assert np.allclose((a + b).samples, a.samples + b.samples)
    assert np.allclose((2.0 * a - b).samples, 2 * a.samples - b.samples)
    assert inner(a, a).real == pytest.approx(np.mean(a.samples**2))
