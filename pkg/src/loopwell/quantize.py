"""Finite Hermitian matrices for every operator the spectral experiments use.

Builders:

* circle operators  b0 + (g_h(h k))^2 + h V(theta)  on the Fourier basis,
* Weyl quantization of polynomial plane symbols on the Hermite basis,
* the normalized spin-z-squared matrix,
* the whole-line lattice model whose lowest eigenvalue oscillates in sigma,
* the two asymptotic model operators (small-energy and rescaled-window).

All builders are pure and return immutable :class:`OperatorMatrix` values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb, floor

import numpy as np
import scipy.sparse as sp

from .eigensolve import _herm_scan, eigen_hermitian
from .series import SymbolModel, _sym_profile

__all__ = [
    "Basis",
    "OperatorMatrix",
    "LatticeParams",
    "TruncationError",
    "WindowError",
    "build_circle_operator",
    "circle_block",
    "circle_mode_range",
    "build_weyl_polynomial_plane",
    "hermite_size_for_window",
    "poly2d_from_terms",
    "build_spin_sz2",
    "build_lattice_operator",
    "build_small_energy_model",
    "build_large_energy_model",
    "export_triplets",
]

HERMITICITY_TOL = 1e-13


class TruncationError(ValueError):
    """Basis too small for the requested energy window."""


class WindowError(ValueError):
    """Parameters outside the configured validity window."""


@dataclass(frozen=True)
class Basis:
    """Labelled basis: kind plus the ordered index labels of the modes."""

    kind: str
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=float)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    @classmethod
    def circle(cls, k_lo: int, k_hi: int) -> "Basis":
        return cls("circle_fourier", np.arange(k_lo, k_hi + 1))

    @classmethod
    def hermite(cls, n: int) -> "Basis":
        return cls("hermite", np.arange(n))

    @classmethod
    def spin_z(cls, s: float) -> "Basis":
        return cls("spin_z", np.arange(-s, s + 0.5))

    @classmethod
    def lattice(cls, center: int, half_width: int) -> "Basis":
        return cls("lattice_z",
                   center + np.arange(-half_width, half_width + 1))


@dataclass(frozen=True)
class OperatorMatrix:
    basis: Basis
    hbar: float
    entries: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("entries must be a square matrix")
        if a.shape[0] != self.basis.size:
            raise ValueError(f"dimension {a.shape[0]} does not match the "
                             f"{self.basis.size}-mode basis")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if not (np.issubdtype(a.dtype, np.floating)
                or np.issubdtype(a.dtype, np.complexfloating)):
            a = a.astype(np.float64)
        scale, defect = _herm_scan(np.ascontiguousarray(a))
        if defect > HERMITICITY_TOL * max(scale, 1e-300):
            raise ValueError(f"matrix is not Hermitian (defect {defect:.3g})")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _profile_values(*profiles) -> dict[int, complex]:
    """Merge Fourier profiles {offset: coefficient}; later args add."""
    out: dict[int, complex] = {}
    for prof in profiles:
        if not prof:
            continue
        for k, c in prof.items():
            out[k] = out.get(k, 0.0) + c
    return {k: c for k, c in out.items() if c != 0}


def _band_matrix(diag: np.ndarray, bands: dict[int, complex]) -> np.ndarray:
    """Dense matrix from a diagonal and constant bands A[i+d, i] = bands[d]."""
    n = diag.size
    realish = all(abs(complex(c).imag) == 0.0 for c in bands.values())
    dtype = np.float64 if realish else np.complex128
    a = np.zeros((n, n), dtype=dtype)
    a[np.arange(n), np.arange(n)] = diag.real if dtype == np.float64 else diag
    for d, c in bands.items():
        if d == 0:
            a[np.arange(n), np.arange(n)] += c.real if dtype == np.float64 else c
            continue
        if abs(d) >= n:
            continue
        rows = np.arange(abs(d), n) if d > 0 else np.arange(n - abs(d))
        cols = rows - d
        a[rows, cols] = c.real if dtype == np.float64 else c
    return a


# ---------------------------------------------------------------- circle ops

def _window_margin(hbar: float, bands: dict[int, complex]) -> float:
    return 2.0 * sum(abs(c) for c in bands.values()) + 1e-12


def circle_block(model: SymbolModel, hbar: float, k_lo: int, k_hi: int,
                 window_top: float | None = None) -> OperatorMatrix:
    """Circle operator on the Fourier modes k_lo..k_hi.

    Diagonal b0 + (g0(hk) + h g1(hk))^2; the potential h(V0 + h V1) couples
    modes at the offsets of its Fourier coefficients.  The fold profile is
    extended beyond its chart by its Taylor polynomial.
    """
    k = np.arange(k_lo, k_hi + 1)
    g = model.fold_at(hbar * k, hbar)
    diag = model.floor_energy + g ** 2
    v0 = model.pot0_fourier or {}
    v1 = model.pot1_fourier or {}
    bands = _profile_values({d: hbar * c for d, c in v0.items()},
                            {d: hbar * hbar * c for d, c in v1.items()})
    if window_top is not None:
        margin = _window_margin(hbar, bands)
        if diag[0] < window_top + margin or diag[-1] < window_top + margin:
            raise TruncationError(
                f"edge of the mode range [{k_lo}, {k_hi}] sits below the "
                f"energy window top {window_top:.6g} plus margin; enlarge K")
    diag_bands = {d: c for d, c in bands.items() if d == 0}
    for d, c in diag_bands.items():
        diag = diag + c.real
    off = {d: c for d, c in bands.items() if d != 0}
    a = _band_matrix(diag, off)
    return OperatorMatrix(Basis.circle(k_lo, k_hi), hbar, a)


def build_circle_operator(model: SymbolModel, hbar: float, half_width: int,
                          window_top: float | None = None) -> OperatorMatrix:
    """Circle operator on the symmetric mode range -K..K."""
    return circle_block(model, hbar, -half_width, half_width, window_top)


def circle_mode_range(model: SymbolModel, hbar: float, energy_top: float,
                      pad: int = 8) -> tuple[int, int]:
    """Contiguous mode range whose diagonal covers [floor, energy_top].

    Scans outward from the well center until the diagonal clears the window
    top plus margin for ``pad`` consecutive modes on each side.
    """
    v0 = model.pot0_fourier or {}
    margin = 2.0 * hbar * sum(abs(c) for c in v0.values()) + 1e-12
    center = int(round(model.action0 / hbar))

    def clears(k):
        g = model.fold_at(hbar * k, hbar)
        return model.floor_energy + g * g >= energy_top + margin

    def scan(step):
        k = center
        run = 0
        for _ in range(10_000_000):
            if clears(k):
                run += 1
                if run >= pad:
                    return k
            else:
                run = 0
            k += step
        raise TruncationError("mode scan did not terminate")

    return scan(-1), scan(+1)


# ------------------------------------------------------------- plane symbols

def poly2d_from_terms(terms) -> np.ndarray:
    """Coefficient array c[m, n] of x^m xi^n from [[m, n, c], ...]."""
    terms = list(terms)
    deg = max((int(m) + int(n) for m, n, _ in terms), default=0)
    out = np.zeros((deg + 1, deg + 1))
    for m, n, c in terms:
        out[int(m), int(n)] += float(c)
    return out


def hermite_size_for_window(hbar: float, window_top: float) -> int:
    """Oscillator-count heuristic: h(2N+1) >= 3 * window top."""
    return max(int(np.ceil((3.0 * window_top / hbar - 1.0) / 2.0)), 8)


def build_weyl_polynomial_plane(symbol: np.ndarray, hbar: float, size: int,
                                energy_top: float | None = None
                                ) -> OperatorMatrix:
    """Weyl quantization of a real polynomial in (x, xi) on the Hermite basis.

    Each monomial x^m xi^n is replaced by the average over all orderings of
    the corresponding operator word (full symmetrization).  Ladder matrices
    are built ``degree`` sizes larger and cropped, so every retained entry
    equals its infinite-matrix value exactly.
    """
    symbol = np.asarray(symbol, dtype=float)
    if symbol.ndim != 2:
        raise ValueError("symbol must be a 2D coefficient array c[m, n]")
    nz = np.argwhere(symbol != 0)
    deg = int(max((m + n for m, n in nz), default=0))
    if deg > 8:
        raise ValueError(f"symbol degree {deg} > 8 not supported")

    big = size + deg
    lad = np.sqrt(hbar / 2.0)
    raise_op = sp.diags(np.sqrt(np.arange(1, big)), -1, format="csr")
    lower_op = sp.diags(np.sqrt(np.arange(1, big)), 1, format="csr")
    x_op = (lad * (raise_op + lower_op)).astype(complex)
    xi_op = (-1j * lad * (lower_op - raise_op)).astype(complex)

    total = sp.csr_matrix((big, big), dtype=complex)
    for m, n in nz:
        m, n = int(m), int(n)
        coeff = symbol[m, n]
        if m + n == 0:
            total = total + coeff * sp.identity(big, dtype=complex, format="csr")
            continue
        word_sum = sp.csr_matrix((big, big), dtype=complex)
        for xpos in combinations(range(m + n), m):
            w = sp.identity(big, dtype=complex, format="csr")
            for slot in range(m + n):
                w = w @ (x_op if slot in xpos else xi_op)
            word_sum = word_sum + w
        total = total + (coeff / comb(m + n, m)) * word_sum

    dense = np.asarray(total[:size, :size].todense())
    if not np.any(dense.imag):
        dense = dense.real
    op = OperatorMatrix(Basis.hermite(size), hbar, dense,
                        info={"symbol_degree": deg})

    if energy_top is not None:
        spec = eigen_hermitian(op, want_vectors=True)
        sel = spec.eigenvalues <= energy_top
        if np.any(sel):
            tail_rows = max(4, size // 10)
            tail = np.sum(np.abs(spec.eigenvectors[size - tail_rows:, sel]) ** 2,
                          axis=0)
            if np.max(tail) > 1e-10:
                raise TruncationError(
                    f"window eigenvectors carry tail mass {np.max(tail):.3g} "
                    "at the basis edge; enlarge the Hermite size")
    return op


# -------------------------------------------------------------------- spin

def build_spin_sz2(spin: float) -> OperatorMatrix:
    """Normalized squared spin-z matrix diag(m^2) / (4 (S+1)^2).

    The semiclassical parameter of this family is 1/(2S).
    """
    two_s = round(2 * spin)
    if two_s <= 0 or abs(2 * spin - two_s) > 1e-12:
        raise ValueError("spin must be a positive half-integer")
    spin = two_s / 2.0
    m = np.arange(-spin, spin + 0.5)
    diag = m ** 2 / (4.0 * (spin + 1.0) ** 2)
    return OperatorMatrix(Basis.spin_z(spin), 1.0 / (2 * spin), np.diag(diag),
                          info={"spin": spin})


# ------------------------------------------------------------------ lattice

@dataclass(frozen=True)
class LatticeParams:
    """Whole-line model: diagonal lambda_k + v0, off-diagonal v_{l-k}.

    sigma         -- action over hbar; the spectrum is 1-periodic in it
    primary_slope -- fold slope at the loop; the quadratic coefficient of
                     lambda_k is its square
    sub_slope     -- free linear coefficient (the subleading reading is
                     ambiguous, so it stays an input)
    coupling      -- Fourier coefficients v of the subleading potential
    half_width    -- modes kept on each side of round(sigma)
    """

    sigma: float
    primary_slope: float
    sub_slope: float = 0.0
    coupling: dict[int, complex] | None = None
    half_width: int = 32

    def __post_init__(self):
        object.__setattr__(self, "coupling", _sym_profile(self.coupling))
        if self.half_width < 1:
            raise ValueError("half_width must be positive")


def build_lattice_operator(params: LatticeParams) -> OperatorMatrix:
    # floor(s + 1/2), not round(): the center must shift by exactly one when
    # sigma does, including at half-integers, for the periodicity relabeling
    center = int(np.floor(params.sigma + 0.5))
    k = center + np.arange(-params.half_width, params.half_width + 1)
    rel = k - params.sigma
    diag = rel * params.sub_slope + rel ** 2 * params.primary_slope ** 2
    v = params.coupling or {}
    bands = {}
    for d, c in v.items():
        if d == 0:
            diag = diag + c.real
        else:
            bands[-d] = c       # entry (k, l) = v_{l-k}: offset l-k = -d rows
    a = _band_matrix(diag, bands)
    return OperatorMatrix(Basis.lattice(center, params.half_width), 1.0, a,
                          info={"sigma": params.sigma})


# ------------------------------------------------- asymptotic model operators

def frac_part(action0: float, hbar: float) -> float:
    return action0 / hbar - floor(action0 / hbar)


def build_small_energy_model(model: SymbolModel, hbar: float, half_width: int,
                             window_top: float | None = None
                             ) -> OperatorMatrix:
    """Bottom-window model operator on the circle, semiclassical in sqrt(h).

    Diagonal in the gauge-shifted momentum w = sqrt(h) (m - {I0/h}):

        slope^2 w^2 + sqrt(h) slope (2 g1(I0) + g0''(I0) w^2) w

    plus the leading potential V0 coupling modes with coefficient one.  The
    fractional part used for the gauge shift is recorded in ``info``.
    """
    frac = frac_part(model.action0, hbar)
    m = np.arange(-half_width, half_width + 1)
    w = np.sqrt(hbar) * (m - frac)
    slope = model.fold_slope()
    curv = 2.0 * model.fold_taylor[2] if model.fold_taylor.size > 2 else 0.0
    g1v = float(model.fold_sub_taylor[0]) if model.fold_sub_taylor is not None \
        else 0.0
    diag = slope ** 2 * w ** 2 \
        + np.sqrt(hbar) * slope * (2.0 * g1v + curv * w ** 2) * w
    v0 = dict(model.pot0_fourier or {})
    bands = {d: c for d, c in v0.items() if d != 0}
    if 0 in v0:
        diag = diag + v0[0].real
    if window_top is not None:
        margin = 2.0 * sum(abs(c) for c in bands.values()) + 1e-12
        if diag[0] < window_top + margin or diag[-1] < window_top + margin:
            raise TruncationError("mode range too small for the requested "
                                  "window; enlarge half_width")
    a = _band_matrix(diag, bands)
    return OperatorMatrix(Basis.circle(-half_width, half_width), hbar, a,
                          info={"frac_part": frac, "hbar_eff": np.sqrt(hbar)})


def build_large_energy_model(model: SymbolModel, hbar: float, energy: float,
                             k_lo: int, k_hi: int,
                             c1: float = 0.25, c2: float = 1.0,
                             window_top: float | None = None
                             ) -> OperatorMatrix:
    """Rescaled window model at energy scale E, semiclassical in h/sqrt(E).

    Diagonal f(sqrt(E), eta)^2 + (h/sqrt(E)) * 2 f g1, where
    f(x, y) = g0(x y + I0)/x and eta is the gauge-shifted momentum
    (h/sqrt(E)) (m - {I0/h}); the potential couples with weight t = h/E.
    Together these reproduce (1/E)(Q - b0) exactly up to the h^2 g1^2 term.
    """
    if not (hbar / c2 <= energy <= c1):
        raise WindowError(f"energy {energy} outside [{hbar / c2}, {c1}]")
    frac = frac_part(model.action0, hbar)
    sqrt_e = np.sqrt(energy)
    hbar_eff = hbar / sqrt_e
    t = hbar / energy
    m = np.arange(k_lo, k_hi + 1)
    eta = hbar_eff * (m - frac)
    actions = sqrt_e * eta + model.action0
    f = model.fold_at(actions) / sqrt_e
    diag = f ** 2
    if model.fold_sub_taylor is not None:
        u = actions - model.action0
        g1v = np.polynomial.polynomial.polyval(u, model.fold_sub_taylor)
        diag = diag + hbar_eff * 2.0 * f * g1v
    v0 = dict(model.pot0_fourier or {})
    bands = {d: t * c for d, c in v0.items() if d != 0}
    if 0 in v0:
        diag = diag + t * v0[0].real
    if window_top is not None:
        margin = 2.0 * sum(abs(c) for c in bands.values()) + 1e-12
        if diag[0] < window_top + margin or diag[-1] < window_top + margin:
            raise TruncationError("mode range too small for the requested "
                                  "window; enlarge it")
    a = _band_matrix(diag, bands)
    return OperatorMatrix(Basis.circle(k_lo, k_hi), hbar, a,
                          info={"frac_part": frac, "hbar_eff": hbar_eff,
                                "coupling_weight": t, "energy": energy})


# ------------------------------------------------------------------- export

def export_triplets(matrix: OperatorMatrix, path, fmt: str = "csv") -> None:
    """Dump nonzero entries as (row, col, re, im) triplets."""
    a = matrix.entries
    rows, cols = np.nonzero(a)
    vals = a[rows, cols]
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write("row,col,re,im\n")
            for r, c, v in zip(rows, cols, vals):
                v = complex(v)
                fh.write(f"{r},{c},{v.real:.17g},{v.imag:.17g}\n")
    elif fmt == "npz":
        np.savez(path, row=rows, col=cols,
                 re=np.real(vals).astype(float),
                 im=np.imag(vals).astype(float))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
