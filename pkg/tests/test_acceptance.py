"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
report including timings.
"""

import time

import numpy as np
import pytest

from loopwell.eigensolve import eigen_hermitian, lowest_k, sturm_eigenvalues
from loopwell.lab import (
    action_cylinder_graph,
    action_sampled_curve,
    compare_large_energy,
    compare_small_energy,
    detect_jumps,
    gap_scaling,
    oscillation_profile,
    sweep,
)
from loopwell.normalform import birkhoff_normal_form, replay_generator_chain
from loopwell.quantize import (
    LatticeParams,
    build_circle_operator,
    build_spin_sz2,
    build_weyl_polynomial_plane,
    poly2d_from_terms,
)
from loopwell.series import SymbolModel, split, subtract

from helpers import sample_normalizable_deformation

RADIAL_QUARTIC = [[4, 0, 1], [2, 2, 2], [0, 4, 1],
                  [2, 0, -2], [0, 2, -2], [0, 0, 1]]


def bs_model():
    """The benchmark well: quadratic fold, constant sub-fold, one-harmonic
    potential."""
    return SymbolModel(0.0, 0.37, np.array([0.0, 1.0, 0.3]),
                       fold_sub_taylor=np.array([0.2]),
                       pot0_fourier={1: 0.5})


def report(num, slug, ok, t0, budget, detail=""):
    elapsed = time.perf_counter() - t0
    status = "PASS" if ok and elapsed < budget else "FAIL"
    extra = f", {detail}" if detail else ""
    print(f"\nACCEPTANCE {num} {slug}: {status} ({elapsed:.2f}s/"
          f"{budget:.0f}s{extra})")
    assert ok, f"criterion {num} ({slug}): {detail}"
    assert elapsed < budget, f"criterion {num} ({slug}): runtime {elapsed:.1f}s"


# 1. Spin exactness ----------------------------------------------------------

def test_c1_spin_integer():
    t0 = time.perf_counter()
    worst = 0.0
    for s in np.arange(1.0, 10.5, 1.0):
        e0 = lowest_k(build_spin_sz2(s), 1).eigenvalues[0]
        worst = max(worst, abs(e0))
    report(1, "spin-integer", worst <= 1e-12, t0, 1.0, f"max |e0| = {worst:.2e}")


def test_c1_spin_half_integer():
    # Stated reference: e0 = 1/(8 (S+1)^2).  The operator definition
    # diag(m^2) / (4 (S+1)^2) makes its smallest half-integer entry
    # (1/4) / (4 (S+1)^2) = 1/(16 (S+1)^2): the quoted closed form is larger
    # by exactly 2x and cannot hold for this matrix.  The criterion is
    # implemented as stated and is expected to fail; the verified value is
    # asserted in tests/test_quantize.py.
    t0 = time.perf_counter()
    worst = 0.0
    for s in np.arange(0.5, 10.5, 1.0):
        e0 = lowest_k(build_spin_sz2(s), 1).eigenvalues[0]
        worst = max(worst, abs(e0 - 1.0 / (8.0 * (s + 1.0) ** 2)))
    report(1, "spin-half-integer", worst <= 1e-12, t0, 1.0,
           f"max deviation from stated closed form = {worst:.2e}")


# 2. Quartic plane sweep -----------------------------------------------------

def test_c2_plane_sweep():
    t0 = time.perf_counter()
    size, m = 401, 5
    symbol = poly2d_from_terms(RADIAL_QUARTIC)
    inv = np.arange(4.0, 20.0001, 0.05)
    records = sweep(lambda h: build_weyl_polynomial_plane(symbol, h, size),
                    1.0 / inv, m)

    # (b) closed-form oracle (h(2n+1) - 1)^2 + h^2, confirmed in
    # tests/test_quantize.py both analytically and by basis convergence
    n = np.arange(size)
    worst = 0.0
    for rec in records:
        closed = np.sort((rec.hbar * (2 * n + 1) - 1.0) ** 2 + rec.hbar ** 2)[:m]
        worst = max(worst, float(np.max(np.abs(rec.eigenvalues - closed))))
    ok_vals = worst <= 1e-8

    # (a) ground-state branch jumps at even integers, within one grid step
    jumps = detect_jumps(records)
    interior = [j for j in jumps if 4.5 <= j <= 19.5]
    ok_near = all(abs(j - 2 * round(j / 2)) <= 0.05 + 1e-9 for j in interior)
    expected = np.arange(6.0, 19.0, 2.0)
    ok_all = all(min(abs(j - e) for j in jumps) <= 0.05 + 1e-9
                 for e in expected)
    report(2, "plane-figure-sweep",
           ok_vals and ok_near and ok_all and len(interior) >= 7,
           t0, 120.0,
           f"max |eig - closed form| = {worst:.2e}, jumps = "
           f"{[round(j, 3) for j in jumps]}")


# 3. Normal-form residual suite ----------------------------------------------

def test_c3_normal_form_residuals():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_resid = 0.0
    worst_v0 = 0.0
    for _ in range(50):
        eps_cut = int(rng.integers(1, 5))
        fourier_cut = int(rng.integers(2, 7))
        p, model = sample_normalizable_deformation(
            rng, fourier_cut=fourier_cut, taylor_cut=eps_cut + 3,
            eps_cut=eps_cut)
        res = birkhoff_normal_form(p)
        scale = max(p.orders[1].max_abs(), 1e-12)

        # independent oracle: replay the stored chain on the untouched input
        replay = replay_generator_chain(p, res.generators)
        recon = res.reconstruct()
        for order in range(eps_cut):        # through eps^(eps_cut - 1)
            d = subtract(replay.orders[order], recon.orders[order])
            v = d.valid_taylor_order
            err = float(np.max(np.abs(d.coeffs[:, : v + 1]))) / scale
            worst_resid = max(worst_resid, err)

        bnd = split(p.orders[1]).boundary_part
        worst_v0 = max(worst_v0, float(
            np.max(np.abs(res.v_orders[0].coeffs - bnd.coeffs))))
    ok = worst_resid <= 1e-10 and worst_v0 <= 1e-15
    report(3, "normal-form-residuals", ok, t0, 30.0,
           f"worst replay residual = {worst_resid:.2e}, "
           f"worst V0 defect = {worst_v0:.2e}")


# 4. Small-energy comparison --------------------------------------------------

def test_c4_small_energy_window():
    t0 = time.perf_counter()
    model = bs_model()
    js = np.arange(6, 12)
    devs = []
    for j in js:
        c = compare_small_energy(model, 2.0 ** -int(j), window_scale=8.0)
        devs.append(c.max_deviation)
    slope = float(np.polyfit(np.log(2.0 ** -js.astype(float)),
                             np.log(devs), 1)[0])
    report(4, "small-energy-window", slope >= 1.8, t0, 120.0,
           f"slope = {slope:.3f}, deviations = "
           f"{[f'{d:.2e}' for d in devs]}")


# 5. Large-energy window -------------------------------------------------------

def test_c5_large_energy_window():
    t0 = time.perf_counter()
    model = bs_model()
    js = np.arange(8, 13)
    hbars = 2.0 ** -js.astype(float)
    slopes = {}
    prefactors = {}
    for energy in (0.05, 0.1, 0.2):
        devs = []
        for h in hbars:
            c = compare_large_energy(model, h, energy)
            devs.append(c.max_deviation)
        slopes[energy] = float(np.polyfit(np.log(hbars), np.log(devs), 1)[0])
        prefactors[energy] = float(np.median([d / h ** 2
                                              for h, d in zip(hbars, devs)]))
    ok_slopes = all(abs(s - 2.0) <= 0.3 for s in slopes.values())
    spread = max(prefactors.values()) / min(prefactors.values())
    report(5, "large-energy-window", ok_slopes and spread < 3.0, t0, 180.0,
           f"slopes = { {e: round(s, 3) for e, s in slopes.items()} }, "
           f"prefactor spread = {spread:.2f}x")


# 6. Oscillation and periodicity ----------------------------------------------

def test_c6_oscillation_periodicity():
    t0 = time.perf_counter()
    sigmas = np.linspace(0.0, 1.0, 200, endpoint=False)
    ok = True
    details = []
    for sub_slope in (0.0, 0.5):
        for v1 in (0.0, 0.1):
            coupling = {1: v1} if v1 else None
            params = LatticeParams(sigma=0.0, primary_slope=1.0,
                                   sub_slope=sub_slope, coupling=coupling,
                                   half_width=40)
            prof = oscillation_profile(params, sigmas)
            ok = ok and prof.periodicity_defect <= 1e-10
            if sub_slope or v1:
                ok = ok and prof.amplitude > 0.0
            else:
                expect = np.minimum(sigmas, 1.0 - sigmas) ** 2
                ok = ok and float(np.max(np.abs(prof.values - expect))) <= 1e-12
            details.append(f"defect({sub_slope},{v1})={prof.periodicity_defect:.1e}")
    report(6, "oscillation-periodicity", ok, t0, 10.0, "; ".join(details))


# 7. Gap collapse ---------------------------------------------------------------

def test_c7_gap_collapse():
    t0 = time.perf_counter()
    # constant potential; grid step 2/39 makes the sampled fractional parts
    # repeat exactly each period, so the per-period minima are deterministic
    # (grid points never hit the exact degenerate crossings)
    model = SymbolModel(0.0, 0.5, np.array([0.0, 1.0]), pot0_fourier={0: 0.15})
    inv = np.arange(20.0, 200.0001, 2.0 / 39.0)
    # the well sits at mode sigma = I0/hbar <= 100: the basis must cover it
    records = sweep(lambda h: build_circle_operator(model, h, 120), 1.0 / inv, 2)
    fit = gap_scaling(records, period_inv_hbar=2.0)
    ok = abs(fit.exponent - 2.0) <= 0.3
    report(7, "gap-collapse", ok, t0, 60.0,
           f"exponent = {fit.exponent:.4f}, r^2 = {fit.r_squared:.6f}, "
           f"{fit.n_points} periods")


# 8. Action quadrature -----------------------------------------------------------

def test_c8_action_quadrature():
    t0 = time.perf_counter()
    def circle(n):
        t = np.linspace(0.0, 2 * np.pi, n + 1)
        return np.column_stack([np.cos(t), np.sin(t)])

    v = action_sampled_curve(circle(10_000))
    ok_circle = abs(v - 0.5) <= 1e-7
    # power-of-two sample count: the mean of constant samples is then exact
    # in floating point, so strict equality is the right assertion
    ok_cyl = action_cylinder_graph(np.full(256, 0.31)) == 0.31
    errs = [abs(action_sampled_curve(circle(n)) - 0.5) for n in (1000, 2000, 4000)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok_order = all(abs(r - 4.0) <= 0.4 for r in ratios)
    report(8, "action-quadrature", ok_circle and ok_cyl and ok_order, t0, 1.0,
           f"circle error = {abs(v - 0.5):.2e}, halving ratios = "
           f"{[round(r, 2) for r in ratios]}")


# 9. Eigensolver cross-check ------------------------------------------------------

def test_c9_kernel_crosscheck():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    worst = 0.0
    worst_trace = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 201))
        a = rng.normal(size=(n, n))
        if rng.integers(0, 2):
            a = a + 1j * rng.normal(size=(n, n))
        a = 0.5 * (a + a.conj().T)
        spec = eigen_hermitian(a)
        oracle = sturm_eigenvalues(a)
        scale = max(float(np.max(np.abs(spec.eigenvalues))), 1.0)
        worst = max(worst, float(np.max(np.abs(spec.eigenvalues - oracle))) / scale)
        worst_trace = max(worst_trace, abs(float(np.sum(spec.eigenvalues))
                                           - float(np.trace(a).real))
                          / (scale * n))
    ok = worst <= 1e-11 and worst_trace <= 1e-10
    report(9, "kernel-crosscheck", ok, t0, 30.0,
           f"worst QL-vs-Sturm = {worst:.2e}, worst trace defect = "
           f"{worst_trace:.2e}")
