"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line in the summary."""
import json
import time
from fractions import Fraction

import numpy as np

from conftest import record
from qchom.cellsolve import MaterialField, SolverConfig, solve_curl_cell
from qchom.cli import main
from qchom.cutproj import (
    TAU,
    ProjectionMatrix,
    check_criterion,
    cut_sequence,
    fibonacci_projection,
    fibonacci_word,
    hyperplane_projection,
    penrose_projection,
)
from qchom.effective import homogenize
from qchom.errors import SolvabilityError
from qchom.fourier import (
    Grid,
    PeriodicField,
    curl_R,
    decompose_curl,
    decompose_div,
    div_R,
    grad_R,
    inner,
    norm,
    r_poisson_solve,
    random_field,
    wavevectors,
)
from qchom.materials import checkerboard_phase, cosine_sum
from qchom.verify import convergence_ladder, ergodic_mean, exact_box_average, gap_bound, sinc_box_average

CG = SolverConfig(tol=1e-12, acceleration="cg")


def test_01_laminate_closed_form():
    R = fibonacci_projection()
    t0 = time.perf_counter()
    g = Grid(2, 64)
    sig = MaterialField.isotropic("conductivity", g, 2.0 + np.cos(2 * np.pi * g.points()[0]), 1)
    T, _ = homogenize(sig, R, SolverConfig(tol=1e-10))
    elapsed = time.perf_counter() - t0
    err_smooth = abs(T.entries[0, 0] - np.sqrt(3.0))

    # two-square checkerboard: harmonic mean of the phase values weighted by area
    sa, sb = 1.0, 10.0
    theta_a = TAU**2 / (TAU**2 + 1.0)
    oracle = 1.0 / (theta_a / sa + (1.0 - theta_a) / sb)
    errs = {}
    for N in (128, 256):
        gN = Grid(2, N)
        s = np.where(checkerboard_phase(gN), sa, sb)
        TN, _ = homogenize(MaterialField.isotropic("conductivity", gN, s, 1), R,
                           SolverConfig(tol=1e-10, acceleration="cg"))
        errs[N] = abs(TN.entries[0, 0] - oracle)
    ok = err_smooth < 1e-6 and elapsed < 5.0 and errs[256] < 1e-2 and errs[256] < errs[128]
    record(1, ok, f"|sigma_h - sqrt3| = {err_smooth:.2e} in {elapsed:.2f}s; checkerboard err N=128 {errs[128]:.2e}, N=256 {errs[256]:.2e}")
    assert ok


def test_02_constant_material_identity():
    rng = np.random.default_rng(2)
    worst = 0.0
    R2 = penrose_projection()
    R3 = hyperplane_projection([1.0, np.sqrt(2.0), np.sqrt(3.0), TAU])
    cases = []
    for R, kind in ((fibonacci_projection(), "conductivity"), (R2, "conductivity"), (R3, "inverse_permittivity")):
        A = rng.standard_normal((R.n, R.n))
        A = A @ A.T + R.n * np.eye(R.n)
        cases.append((R, MaterialField(kind, PeriodicField.constant(Grid(R.m, 8), A)), A))
    C = MaterialField.isotropic_elastic(Grid(4, 8), 1.7, 0.6, 2)
    cases.append((R2, C, C.values.samples[(...,) + (0,) * 4]))
    for R, mat, expect in cases:
        T, _ = homogenize(mat, R, CG)
        worst = max(worst, float(np.abs(T.entries - expect).max()))
    ok = worst < 1e-12
    record(2, ok, f"max deviation from input constant {worst:.2e} over conductivity, elasticity, curl")
    assert ok


def test_03_criterion_scan():
    bad = check_criterion(ProjectionMatrix.from_transpose([[1, Fraction(1, 2)]]), 2)
    t0 = time.perf_counter()
    good = check_criterion(fibonacci_projection(), 200)
    elapsed = time.perf_counter() - t0
    ok = (1, -2) in bad.violations and good.satisfied and good.certified_exact and elapsed < 1.0
    record(3, ok, f"(1,1/2) violations {bad.violations}; (1,tau) k_max=200 exact: {len(good.violations)} violations in {elapsed:.3f}s")
    assert ok


def test_04_fibonacci_word():
    w18 = fibonacci_word(18)
    long_sub = fibonacci_word(10_000)
    long_cut = cut_sequence(TAU, 10_000)
    ok = w18 == "ABAABABAABAABABAAB" and long_sub == long_cut
    record(4, ok, f"fibonacci_word(18) = {w18}; cut vs substitution agree on 10^4 letters: {long_sub == long_cut}")
    assert ok


def test_05_green_and_stokes():
    rng = np.random.default_rng(5)
    worst_green = worst_stokes = 0.0
    setups = [(Grid(2, 16), fibonacci_projection()), (Grid(4, 16), penrose_projection())]
    R3 = hyperplane_projection([1.0, np.sqrt(2.0), np.sqrt(3.0), np.sqrt(5.0)])
    for g, R in setups:
        for _ in range(100):
            phi = random_field(g, (R.n,), rng)
            th = random_field(g, (), rng)
            d = abs(-inner(div_R(phi, R), th) - inner(phi, grad_R(th, R))) / (norm(phi) * norm(th))
            worst_green = max(worst_green, d)
    g4 = Grid(4, 16)
    for _ in range(100):
        phi = random_field(g4, (3,), rng)
        th = random_field(g4, (3,), rng)
        d = abs(inner(curl_R(phi, R3), th) - inner(phi, curl_R(th, R3))) / (norm(phi) * norm(th))
        worst_stokes = max(worst_stokes, d)
    ok = worst_green < 1e-10 and worst_stokes < 1e-10
    record(5, ok, f"worst relative Green defect {worst_green:.2e}, Stokes defect {worst_stokes:.2e} (100 pairs each)")
    assert ok


def test_06_decomposition_round_trips():
    rng = np.random.default_rng(6)
    R2 = penrose_projection()
    R3 = hyperplane_projection([1.0, np.sqrt(2.0), np.sqrt(3.0), np.sqrt(5.0)])
    g = Grid(4, 8)
    recon = orth = idem = 0.0
    for i in range(100):
        if i % 2:
            v = random_field(g, (2,), rng)
            a, b = decompose_div(v, R2)
            a2, b2 = decompose_div(a, R2)
        else:
            v = random_field(g, (3,), rng)
            a, b = decompose_curl(v, R3)
            a2, b2 = decompose_curl(a, R3)
        scale = norm(v)
        recon = max(recon, norm(a + b - v) / scale)
        orth = max(orth, abs(inner(a, b)) / scale**2)
        per_mode = np.abs(a2.coefficients - a.coefficients) / (np.abs(a.coefficients).max() + 1e-300)
        idem = max(idem, float(per_mode.max()), norm(b2) / scale)
    ok = recon < 1e-12 and orth < 1e-10 and idem < 1e-14
    record(6, ok, f"reconstruction {recon:.2e}, cross term {orth:.2e}, per-mode idempotence defect {idem:.2e}")
    assert ok


def test_07_r_poisson():
    rng = np.random.default_rng(7)
    R = penrose_projection()
    g = Grid(4, 8)
    psi = random_field(g, (), rng)
    psi = psi - PeriodicField.constant(g, psi.mean())
    f = -div_R(grad_R(psi, R), R)
    err = norm(r_poisson_solve(f, R) - psi) / norm(psi)
    try:
        r_poisson_solve(PeriodicField.constant(g, 1.0), R)
        rejected = False
    except SolvabilityError:
        rejected = True
    ok = err < 1e-10 and rejected
    record(7, ok, f"round-trip error {err:.2e}; constant right-hand side rejected: {rejected}")
    assert ok


def test_08_ergodic_mean():
    R = fibonacci_projection()
    g = Grid(2, 8)
    worst = 0.0
    for k in ((1, 0), (2, -1), (1, 2), (-2, 2)):
        c = np.zeros(g.shape, dtype=complex)
        c[k] = 1.0
        f = PeriodicField.from_coefficients(g, c, real=False)
        for A in (2.5, 17.0):
            e = ergodic_mean(f, R, A, samples=20_000, rule="gauss")
            worst = max(worst, abs(e.value - sinc_box_average(k, R, A)))
    rng = np.random.default_rng(8)
    c = np.zeros(g.shape, dtype=complex)
    for k1 in range(-2, 3):
        for k2 in range(-2, 3):
            c[k1, k2] = complex(*rng.standard_normal(2))
    c = 0.5 * (c + np.conj(np.roll(np.flip(c, (0, 1)), 1, (0, 1))))
    poly = PeriodicField.from_coefficients(g, c, real=True)
    est = ergodic_mean(poly, R, 1000.0, samples=10**5, rule="gauss")
    bound = gap_bound(poly, R, 1000.0)
    exact = abs(exact_box_average(poly, R, 1000.0) - poly.coefficients[0, 0])
    ok = worst < 1e-10 and est.gap <= bound and est.gap < 5e-3
    record(8, ok, f"single-mode vs sinc {worst:.2e}; A=1e3 gap {est.gap:.2e} (exact {exact:.2e}) <= bound {bound:.2e}")
    assert ok


def test_09_convergence_and_corrector_ladder():
    t0 = time.perf_counter()
    g = Grid(2, 64)
    sig = MaterialField.isotropic("conductivity", g, cosine_sum(g), 1)
    runs, sigma_h, _ = convergence_ladder(sig, fibonacci_projection(), [0.1, 0.05, 0.025], M=4096, cfg=CG)
    elapsed = time.perf_counter() - t0
    l2 = [r.l2_error for r in runs]
    ce = [r.corrector_error for r in runs]
    h1 = [r.h1_error for r in runs]
    ok = (l2[0] > l2[1] > l2[2] and ce[0] > ce[1] > ce[2] and ce[2] < h1[2] and elapsed < 30.0)
    record(9, ok, "L2 " + ", ".join(f"{v:.2e}" for v in l2) + "; corrector " + ", ".join(f"{v:.2e}" for v in ce)
           + f"; plain H1 at 1/40 {h1[2]:.2e}; {elapsed:.1f}s")
    assert ok


def test_10_penrose_run(tmp_path):
    cfg = {
        "problem": "conductivity",
        "projection": "penrose4",
        "material": {"builtin": "two_phase", "geometry": "smooth", "a": 1.0, "b": 5.0, "sharpness": 2.0},
        "grid_N": 16,
        "solver": {"tol": 1e-10},
        "seed": 10,
    }
    p = tmp_path / "penrose.json"
    p.write_text(json.dumps(cfg))
    t0 = time.perf_counter()
    codes = [main(["run", "--config", str(p), "--out", str(tmp_path / d), "--quiet"]) for d in ("a", "b")]
    elapsed = (time.perf_counter() - t0) / 2
    ra = (tmp_path / "a" / "report.json").read_bytes()
    rb = (tmp_path / "b" / "report.json").read_bytes()
    rep = json.loads(ra)["effective"]
    T = np.array(rep["entries"])
    g = Grid(4, 16)
    y = g.points()
    phase = 0.5 * (1 + np.tanh(2.0 * np.cos(2 * np.pi * y).mean(axis=0)))
    s = 1.0 * phase + 5.0 * (1 - phase)
    voigt, reuss = s.mean(), 1.0 / np.mean(1.0 / s)
    eig = np.linalg.eigvalsh(0.5 * (T + T.T))
    ok = (codes == [0, 0] and elapsed < 120 and rep["symmetry_defect"] < 5e-6
          and reuss <= eig.min() and eig.max() <= voigt and ra == rb)
    record(10, ok, f"eigenvalues {eig[0]:.6f}, {eig[1]:.6f} in [{reuss:.6f}, {voigt:.6f}]; "
           f"symmetry defect {rep['symmetry_defect']:.1e}; {elapsed:.1f}s per run; byte-identical {ra == rb}")
    assert ok


def test_11_curl_membership():
    R = hyperplane_projection([1.0, np.sqrt(2.0), np.sqrt(3.0), TAU])
    g = Grid(4, 8)
    y = g.points()
    s = 2.5 + np.cos(2 * np.pi * y[0]) * np.cos(2 * np.pi * y[1]) + 0.5 * np.sin(2 * np.pi * (y[2] - y[3]))
    eps = MaterialField.isotropic("inverse_permittivity", g, s, 3)
    xi = wavevectors(g, R).xi
    worst = 0.0
    for k in range(3):
        sol = solve_curl_cell(eps, k, R, CG)
        assert sol.converged
        c = sol.corrector.coefficients
        worst = max(worst, float(np.abs(np.sum(xi * c, axis=0)).max()))
    ok = worst < 1e-10
    record(11, ok, f"max per-mode |xi . c_k| = {worst:.2e} over three loads")
    assert ok
