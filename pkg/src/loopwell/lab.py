"""Experiment layer: parameter sweeps, branch tracking, oscillation and gap
analysis, action quadrature, and the two spectral-asymptotics comparisons.

Everything here consumes matrices from :mod:`loopwell.quantize` and spectra
from :mod:`loopwell.eigensolve`; grid points are independent work items.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import floor

import numpy as np
from scipy.optimize import linear_sum_assignment

from .eigensolve import eigen_hermitian
from .quantize import (
    LatticeParams,
    build_large_energy_model,
    build_lattice_operator,
    build_small_energy_model,
    circle_block,
    circle_mode_range,
)
from .series import SymbolModel

__all__ = [
    "SweepRecord",
    "ScalingFit",
    "OscillationProfile",
    "SpectralComparison",
    "sweep",
    "detect_jumps",
    "oscillation_profile",
    "gap_scaling",
    "action_invariant",
    "action_radial",
    "action_cylinder_graph",
    "action_sampled_curve",
    "compare_small_energy",
    "compare_large_energy",
]


@dataclass(frozen=True)
class SweepRecord:
    """One grid point: the m lowest eigenvalues plus branch labels."""

    hbar: float
    inv_hbar: float
    eigenvalues: np.ndarray
    branch_ids: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        ids = np.asarray(self.branch_ids, dtype=int)
        ev.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "branch_ids", ids)


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    prefactor: float
    r_squared: float
    n_points: int = 0


@dataclass(frozen=True)
class OscillationProfile:
    sigmas: np.ndarray
    values: np.ndarray
    amplitude: float
    periodicity_defect: float


# ------------------------------------------------------------------ sweeps

def _extrapolate(xs, ys, x_new):
    if len(ys) >= 3:
        c = np.polyfit(xs[-3:], ys[-3:], 2)
        return float(np.polyval(c, x_new))
    if len(ys) == 2:
        c = np.polyfit(xs[-2:], ys[-2:], 1)
        return float(np.polyval(c, x_new))
    return float(ys[-1])


def _assign_branches(values: list[np.ndarray], xs: np.ndarray) -> list[np.ndarray]:
    """Continuation labels: nearest-neighbour matching against quadratic
    extrapolation of each branch's recent history in 1/hbar."""
    m = values[0].size
    labels = [np.arange(m)]
    history: dict[int, tuple[list, list]] = {
        b: ([xs[0]], [values[0][b]]) for b in range(m)}
    next_id = m
    for t in range(1, len(values)):
        prev_ids = labels[-1]
        vals = values[t]
        preds = np.array([_extrapolate(*history[b], xs[t]) for b in prev_ids])
        cost = np.abs(vals[:, None] - preds[None, :])
        rows, cols = linear_sum_assignment(cost)
        assigned = np.empty(m, dtype=int)
        matched_costs = cost[rows, cols]
        scale = max(float(np.max(np.abs(vals))), 1e-300)
        spawn_tol = max(100.0 * float(np.median(matched_costs)), 1e-6 * scale)
        for i, j in zip(rows, cols):
            if cost[i, j] > spawn_tol and matched_costs.size > 1:
                assigned[i] = next_id        # a new family entered the window
                next_id += 1
            else:
                assigned[i] = prev_ids[j]
        for i in range(m):
            b = assigned[i]
            hx, hv = history.setdefault(b, ([], []))
            hx.append(xs[t])
            hv.append(vals[i])
            if len(hx) > 3:
                del hx[0], hv[0]
        labels.append(assigned)
    return labels


def sweep(builder, hbar_grid, m: int, threads: int = 1) -> list[SweepRecord]:
    """m lowest eigenvalues of builder(hbar) over the grid, with branch ids.

    ``builder`` maps hbar to an OperatorMatrix; failures propagate with the
    offending hbar attached.
    """
    hbars = np.asarray(hbar_grid, dtype=float)
    if hbars.size == 0:
        return []

    def solve(h):
        try:
            op = builder(h)
            spec = eigen_hermitian(op)
        except Exception as exc:
            raise type(exc)(f"hbar={h}: {exc}") from exc
        if spec.eigenvalues.size < m:
            raise ValueError(f"hbar={h}: operator has only "
                             f"{spec.eigenvalues.size} eigenvalues, need {m}")
        return spec.eigenvalues[:m]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(solve, hbars))
    else:
        values = [solve(h) for h in hbars]

    xs = 1.0 / hbars
    labels = _assign_branches(values, xs)
    return [SweepRecord(h, x, v, l)
            for h, x, v, l in zip(hbars, xs, values, labels)]


def detect_jumps(records: list[SweepRecord]) -> list[float]:
    """1/hbar locations where the ground state changes branch.

    Each change is refined by intersecting the linear interpolants of the
    two competing branches over the bracketing grid interval.
    """
    if len(records) < 3:
        raise ValueError("jump detection needs at least 3 grid points")
    jumps = []
    for prev, cur in zip(records, records[1:]):
        a = int(prev.branch_ids[0])
        b = int(cur.branch_ids[0])
        if a == b:
            continue
        x1, x2 = prev.inv_hbar, cur.inv_hbar
        x_star = 0.5 * (x1 + x2)
        pa = np.where(prev.branch_ids == a)[0]
        pb = np.where(prev.branch_ids == b)[0]
        ca = np.where(cur.branch_ids == a)[0]
        cb = np.where(cur.branch_ids == b)[0]
        if pa.size and pb.size and ca.size and cb.size:
            da1 = prev.eigenvalues[pa[0]]
            db1 = prev.eigenvalues[pb[0]]
            da2 = cur.eigenvalues[ca[0]]
            db2 = cur.eigenvalues[cb[0]]
            denom = (db2 - db1) - (da2 - da1)
            if denom != 0.0:
                s = (da1 - db1) / denom
                if 0.0 <= s <= 1.0:
                    x_star = x1 + s * (x2 - x1)
        jumps.append(float(x_star))
    return jumps


# ----------------------------------------------------------- oscillation

def oscillation_profile(params: LatticeParams,
                        sigma_grid) -> OscillationProfile:
    """Ground state of the lattice model over a sigma grid.

    Reports the oscillation amplitude (max - min) and the periodicity
    defect max |f(sigma) - f(sigma + 1)|, the latter measured by genuinely
    rebuilding the operator at sigma + 1.
    """
    sigmas = np.asarray(sigma_grid, dtype=float)

    def ground(sigma):
        p = LatticeParams(sigma=sigma, primary_slope=params.primary_slope,
                          sub_slope=params.sub_slope, coupling=params.coupling,
                          half_width=params.half_width)
        return float(eigen_hermitian(build_lattice_operator(p)).eigenvalues[0])

    values = np.array([ground(s) for s in sigmas])
    shifted = np.array([ground(s + 1.0) for s in sigmas])
    defect = float(np.max(np.abs(values - shifted))) if sigmas.size else 0.0
    amp = float(np.max(values) - np.min(values)) if sigmas.size else 0.0
    return OscillationProfile(sigmas, values, amp, defect)


# ------------------------------------------------------------ gap scaling

def gap_scaling(records: list[SweepRecord], period_inv_hbar: float,
                fit_window: tuple[float, float] | None = None) -> ScalingFit:
    """Fit log(per-period minimum of e1 - e0) against log hbar.

    Periods are windows of length ``period_inv_hbar`` in 1/hbar.  An exact
    degenerate crossing inside a period (gap at rounding level) short-
    circuits to the +inf sentinel exponent.
    """
    pts = [(r.inv_hbar, r.eigenvalues[1] - r.eigenvalues[0],
            max(abs(r.eigenvalues[0]), abs(r.eigenvalues[1]), 1.0))
           for r in records if r.eigenvalues.size >= 2]
    if fit_window is not None:
        lo, hi = fit_window
        pts = [p for p in pts if lo <= p[0] <= hi]
    if not pts:
        raise ValueError("no grid points to fit")
    groups: dict[int, list] = {}
    for x, gap, scale in pts:
        groups.setdefault(floor(x / period_inv_hbar), []).append((x, gap, scale))

    # partially sampled boundary periods carry a biased minimum; keep only
    # groups whose grid span is comparable to the median period span
    spans = {idx: max(p[0] for p in g) - min(p[0] for p in g)
             for idx, g in groups.items()}
    median_span = float(np.median(list(spans.values())))
    full = [idx for idx in sorted(groups) if spans[idx] >= 0.9 * median_span]

    mins = []
    for idx in full:
        g = groups[idx]
        x, gap, scale = min(g, key=lambda p: p[1])
        if gap <= 1e-14 * scale:
            return ScalingFit(float("inf"), 0.0, 1.0, len(full))
        mins.append((1.0 / x, gap))
    if len(mins) < 5:
        raise ValueError(f"need >= 5 full periods for a fit, have {len(mins)}")

    lh = np.log([h for h, _ in mins])
    lg = np.log([g for _, g in mins])
    slope, intercept = np.polyfit(lh, lg, 1)
    pred = slope * lh + intercept
    ss_res = float(np.sum((lg - pred) ** 2))
    ss_tot = float(np.sum((lg - np.mean(lg)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(np.exp(intercept)), r2, len(mins))


# ------------------------------------------------------------- action

def action_radial(radius: float) -> float:
    """Enclosed area over 2 pi for a centred circle of given radius."""
    return 0.5 * radius * radius


def action_cylinder_graph(samples) -> float:
    """(1/2 pi) * loop integral of a graph xi = c(theta), uniform samples.

    Uses a correctly-rounded sum, so a constant graph sampled on a
    power-of-two grid reproduces its height exactly.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("need at least one sample")
    from math import fsum
    return fsum(samples.tolist()) / samples.size


def action_sampled_curve(points) -> float:
    """Shoelace area over 2 pi of a closed sampled curve.

    The first and last sample must coincide; orientation matters
    (counterclockwise positive).  Second-order accurate in the sample count.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise ValueError("need an (N, 2) array with N >= 4")
    diam = float(np.max(np.abs(pts - pts[0])))
    if np.max(np.abs(pts[0] - pts[-1])) > 1e-9 * max(diam, 1.0):
        raise ValueError("curve is not closed (first and last sample differ)")
    x, y = pts[:-1, 0], pts[:-1, 1]
    xn, yn = pts[1:, 0], pts[1:, 1]
    area = 0.5 * float(np.sum(x * yn - xn * y))
    return area / (2.0 * np.pi)


def action_invariant(descriptor: dict) -> float:
    """Dispatch on a descriptor: radial circle, cylinder graph, or curve."""
    kind = descriptor.get("kind")
    if kind == "radial":
        return action_radial(float(descriptor["radius"]))
    if kind == "cylinder_graph":
        return action_cylinder_graph(descriptor["samples"])
    if kind == "curve":
        return action_sampled_curve(descriptor["points"])
    raise ValueError(f"unknown symbol descriptor kind {kind!r}")


# ------------------------------------------------- asymptotic comparisons

@dataclass(frozen=True)
class SpectralComparison:
    max_deviation: float
    matched: int
    count_full: int
    count_model: int
    window_shrunk: bool
    deviations: np.ndarray


def _pair_windows(full_vals, model_vals, lo, hi, shrink):
    """Sorted-order pairing inside [lo, hi]; on a count mismatch, retry with
    the window shrunk by the given relative margin."""
    shrunk = False
    for attempt in (0, 1):
        if attempt == 1:
            span = hi - lo
            lo = lo + shrink * span
            hi = hi - shrink * span
            shrunk = True
        f = full_vals[(full_vals >= lo) & (full_vals <= hi)]
        m = model_vals[(model_vals >= lo) & (model_vals <= hi)]
        if f.size == m.size and f.size > 0:
            return f, m, shrunk
    n = min(f.size, m.size)
    return f[:n], m[:n], True


def compare_small_energy(model: SymbolModel, hbar: float,
                         window_scale: float) -> SpectralComparison:
    """Bottom-window comparison: full circle operator vs its sqrt(h) model.

    Full eigenvalues in [b0, b0 + C h] are matched against model eigenvalues
    lambda in [0, C] pushed through lambda -> b0 + h lambda, pairing by
    sorted order; mismatched counts shrink the window by h^(2/3).
    """
    c = window_scale
    top_energy = model.floor_energy + 2.5 * c * hbar
    lo_k, hi_k = circle_mode_range(model, hbar, top_energy)
    full = circle_block(model, hbar, lo_k, hi_k, window_top=top_energy * 0.99)
    full_lam = (eigen_hermitian(full).eigenvalues - model.floor_energy) / hbar

    spread = np.sqrt(2.5 * c / hbar) / abs(model.fold_slope())
    half_width = int(np.ceil(spread)) + 12
    small = build_small_energy_model(model, hbar, half_width,
                                     window_top=2.0 * c)
    model_lam = eigen_hermitian(small).eigenvalues

    lam_lo = min(np.min(full_lam), np.min(model_lam)) - 1.0
    f, m, shrunk = _pair_windows(full_lam, model_lam, lam_lo, c,
                                 shrink=hbar ** (2.0 / 3.0))
    devs = hbar * np.abs(f - m)
    return SpectralComparison(float(np.max(devs)) if devs.size else 0.0,
                              f.size, full_lam.size, model_lam.size,
                              shrunk, devs)


def compare_large_energy(model: SymbolModel, hbar: float, energy: float,
                         c1: float = 0.25, c2: float = 1.0
                         ) -> SpectralComparison:
    """Window [b0 + E/2, b0 + 2E]: full operator vs the rescaled model.

    Model eigenvalues mu are mapped back through mu -> b0 + E mu (the exact
    inverse of the implemented rescaling (1/E)(Q - b0)) and paired by sorted
    order; mismatched counts shrink the window by h^(2/3).
    """
    b0 = model.floor_energy
    top_energy = b0 + 2.5 * energy
    lo_k, hi_k = circle_mode_range(model, hbar, top_energy)
    full = circle_block(model, hbar, lo_k, hi_k, window_top=top_energy * 0.99)
    full_vals = eigen_hermitian(full).eigenvalues

    center = int(floor(model.action0 / hbar))
    mdl = build_large_energy_model(model, hbar, energy,
                                   lo_k - center, hi_k - center, c1, c2)
    model_vals = b0 + energy * eigen_hermitian(mdl).eigenvalues

    f, m, shrunk = _pair_windows(full_vals, model_vals,
                                 b0 + 0.5 * energy, b0 + 2.0 * energy,
                                 shrink=hbar ** (2.0 / 3.0))
    devs = np.abs(f - m)
    return SpectralComparison(float(np.max(devs)) if devs.size else 0.0,
                              f.size, full_vals.size, model_vals.size,
                              shrunk, devs)
