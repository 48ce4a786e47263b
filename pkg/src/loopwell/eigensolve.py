"""Dense Hermitian eigensolver with a documented accuracy contract.

All spectra in this package flow through :func:`eigen_hermitian`: a unitary
Householder reduction to real symmetric tridiagonal form followed by
implicit-shift QL iteration.  A Sturm-sequence bisection solver on the same
tridiagonal form is kept as an independent cross-check oracle.

The solver is deterministic given its input.  Matrices that are already
tridiagonal (every circle operator with a one-harmonic potential) skip the
reduction entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = ["Spectrum", "eigen_hermitian", "lowest_k", "sturm_eigenvalues"]

HERMITICITY_TOL = 1e-13
RESIDUAL_TOL = 1e-10
MAX_QL_SWEEPS = 50


class NonHermitianError(ValueError):
    pass


class ConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Sorted eigenvalues, optional eigenvectors (columns), residual bound."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residual_bound: float

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)


def _entries(matrix) -> np.ndarray:
    return np.asarray(getattr(matrix, "entries", matrix))


@njit(cache=True)
def _herm_scan(a):
    """Single pass: (max |entry|, max |a - a^H| entrywise), no temporaries."""
    n = a.shape[0]
    mx = 0.0
    df = 0.0
    for i in range(n):
        x = a[i, i]
        ax = abs(x)
        if ax > mx:
            mx = ax
        dd = abs(x - np.conj(x))
        if dd > df:
            df = dd
        for j in range(i + 1, n):
            x = a[i, j]
            y = a[j, i]
            ax = abs(x)
            if ax > mx:
                mx = ax
            ay = abs(y)
            if ay > mx:
                mx = ay
            dd = abs(x - np.conj(y))
            if dd > df:
                df = dd
    return mx, df


def _check_hermitian(a: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if np.iscomplexobj(a) and not np.any(a.imag):
        a = np.ascontiguousarray(a.real, dtype=np.float64)
    elif np.iscomplexobj(a):
        a = np.ascontiguousarray(a, dtype=np.complex128)
    else:
        a = np.ascontiguousarray(a, dtype=np.float64)
    scale, defect = _herm_scan(a)
    if defect > HERMITICITY_TOL * max(scale, 1e-300):
        raise NonHermitianError(f"matrix is not Hermitian (defect {defect:.3g})")
    return a


def _is_tridiagonal(a: np.ndarray) -> bool:
    n = a.shape[0]
    if n <= 2:
        return True
    # structural zeros only; avoids materializing index arrays on big inputs
    nnz_band = int(np.count_nonzero(np.diag(a)))
    nnz_band += int(np.count_nonzero(np.diag(a, 1)))
    nnz_band += int(np.count_nonzero(np.diag(a, -1)))
    return int(np.count_nonzero(a)) == nnz_band


@njit(cache=True)
def _hh_reduce(w, d, e_raw, v_store, work):
    """Householder reduction; v_store keeps the unit reflectors per column."""
    n = w.shape[0]
    for k in range(n - 2):
        nx2 = 0.0
        for i in range(k + 1, n):
            nx2 += (w[i, k] * np.conj(w[i, k])).real
        nx = np.sqrt(nx2)
        if nx == 0.0:
            e_raw[k] = 0.0
            continue
        x0 = w[k + 1, k]
        ax0 = abs(x0)
        # reflect onto a multiple of e1, phase chosen to avoid cancellation
        ph = x0 / ax0 if ax0 > 0.0 else x0 * 0.0 + 1.0
        alpha = -ph * nx
        nv2 = 0.0
        for i in range(k + 1, n):
            v_store[i, k] = w[i, k]
        v_store[k + 1, k] = x0 - alpha
        for i in range(k + 1, n):
            nv2 += (v_store[i, k] * np.conj(v_store[i, k])).real
        nv = np.sqrt(nv2)
        if nv < 1e-290:
            for i in range(k + 1, n):
                v_store[i, k] = 0.0
            e_raw[k] = x0
            continue
        for i in range(k + 1, n):
            v_store[i, k] /= nv
        # p = B v on the trailing block, then the Hermitian rank-2 update
        for i in range(k + 1, n):
            acc = w[i, k + 1] * v_store[k + 1, k]
            for j in range(k + 2, n):
                acc += w[i, j] * v_store[j, k]
            work[i] = acc
        kap = 0.0
        for i in range(k + 1, n):
            kap += (np.conj(v_store[i, k]) * work[i]).real
        for i in range(k + 1, n):
            work[i] = 2.0 * (work[i] - kap * v_store[i, k])
        for i in range(k + 1, n):
            vi = v_store[i, k]
            wi = work[i]
            for j in range(k + 1, i + 1):
                w[i, j] -= vi * np.conj(work[j]) + wi * np.conj(v_store[j, k])
        for i in range(k + 1, n):
            for j in range(i + 1, n):
                w[i, j] = np.conj(w[j, i])
        w[k + 1, k] = alpha
        e_raw[k] = alpha
    if n > 1:
        e_raw[n - 2] = w[n - 1, n - 2]
    for i in range(n):
        d[i] = w[i, i].real


@njit(cache=True)
def _hh_accumulate(v_store, q):
    """Back-accumulate the product of the stored reflectors into q (= eye)."""
    n = q.shape[0]
    for k in range(n - 3, -1, -1):
        nz = False
        for i in range(k + 1, n):
            if v_store[i, k] != 0.0:
                nz = True
                break
        if not nz:
            continue
        for col in range(n):
            acc = np.conj(v_store[k + 1, k]) * q[k + 1, col]
            for i in range(k + 2, n):
                acc += np.conj(v_store[i, k]) * q[i, col]
            acc *= 2.0
            for i in range(k + 1, n):
                q[i, col] -= v_store[i, k] * acc


def _householder_tridiag(a: np.ndarray, want_q: bool):
    """Reduce a Hermitian matrix to real tridiagonal (d, e) with A = Q T Q*."""
    n = a.shape[0]
    w = a.copy()
    d = np.zeros(n)
    e_raw = np.zeros(n - 1 if n > 1 else 0, dtype=w.dtype)
    v_store = np.zeros_like(w)
    work = np.zeros(n, dtype=w.dtype)
    _hh_reduce(w, d, e_raw, v_store, work)
    e = np.abs(e_raw).astype(np.float64)

    q = None
    if want_q:
        q = np.eye(n, dtype=w.dtype)
        _hh_accumulate(v_store, q)
        # chase subdiagonal phases (signs, in the real case) into Q so the
        # tridiagonal form with e = |e_raw| stays similar to the input
        t = np.ones(n, dtype=w.dtype)
        for i in range(n - 1):
            if e[i] != 0.0:
                t[i + 1] = e_raw[i] * t[i] / e[i]
        q *= t[None, :]
    return d, e, q


@njit(cache=True)
def _ql_values(d, e):
    """Implicit-shift QL on a symmetric tridiagonal; eigenvalues only.

    EISPACK-style sweep; d is overwritten with unordered eigenvalues.
    Returns the sweep count of the worst row (negative on failure).
    """
    n = d.shape[0]
    eps = 2.3e-16
    worst = 0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > MAX_QL_SWEEPS:
                return -(l + 1)
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            sgn = r if g >= 0 else -r
            g = d[m] - d[l] + e[l] / (g + sgn)
            s = 1.0
            c = 1.0
            p = 0.0
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            else:
                d[l] -= p
                e[l] = g
                e[m] = 0.0
        if it > worst:
            worst = it
    return worst


@njit(cache=True)
def _ql_vectors(d, e, z):
    """As _ql_values but rotates the columns of z along."""
    n = d.shape[0]
    eps = 2.3e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > MAX_QL_SWEEPS:
                return -(l + 1)
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            sgn = r if g >= 0 else -r
            g = d[m] - d[l] + e[l] / (g + sgn)
            s = 1.0
            c = 1.0
            p = 0.0
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = z[k, i + 1]
                    z[k, i + 1] = s * z[k, i] + c * f
                    z[k, i] = c * z[k, i] - s * f
            else:
                d[l] -= p
                e[l] = g
                e[m] = 0.0
    return 0


@njit(cache=True)
def _sturm_count(d, e2, x):
    n = d.shape[0]
    count = 0
    q = 1.0
    for i in range(n):
        if i == 0:
            q = d[0] - x
        else:
            prev = q if q != 0.0 else 1e-300
            q = d[i] - x - e2[i - 1] / prev
        if q < 0.0:
            count += 1
    return count


@njit(cache=True)
def _sturm_all(d, e):
    """All eigenvalues of a symmetric tridiagonal by Sturm bisection."""
    n = d.shape[0]
    e2 = np.zeros(n - 1 if n > 1 else 0)
    radius = np.zeros(n)
    for i in range(n - 1):
        e2[i] = e[i] * e[i]
        radius[i] += abs(e[i])
        radius[i + 1] += abs(e[i])
    lo = d[0] - radius[0]
    hi = d[0] + radius[0]
    for i in range(1, n):
        lo = min(lo, d[i] - radius[i])
        hi = max(hi, d[i] + radius[i])
    span = max(hi - lo, 1e-300)
    lo -= 1e-12 * span
    hi += 1e-12 * span
    out = np.empty(n)
    for idx in range(n):
        a = lo
        b = hi
        for _ in range(120):
            mid = 0.5 * (a + b)
            if b - a <= 1e-15 * max(abs(a), abs(b), 1.0):
                break
            if _sturm_count(d, e2, mid) <= idx:
                a = mid
            else:
                b = mid
        out[idx] = 0.5 * (a + b)
    return out


def _tridiag_parts(a: np.ndarray, want_q: bool):
    """d, e, Q for an input that is already tridiagonal (phase-chased)."""
    n = a.shape[0]
    d = np.real(np.diag(a)).astype(np.float64)
    e_raw = np.diag(a, -1).copy() if n > 1 else np.zeros(0)
    e = np.abs(e_raw).astype(np.float64)
    q = None
    if want_q:
        t = np.ones(n, dtype=a.dtype)
        for i in range(n - 1):
            if e[i] != 0.0:
                t[i + 1] = e_raw[i] * t[i] / e[i]
        q = np.diag(t)
    return d, e, q


def eigen_hermitian(matrix, want_vectors: bool = False) -> Spectrum:
    """Full spectrum of a Hermitian matrix (checked), ascending.

    With ``want_vectors`` the returned columns satisfy
    max_i ||A v_i - lam_i v_i|| / ||A|| <= 1e-10 (verified, else raises).
    """
    raw = _entries(matrix)
    if raw.shape[0] == 0:
        return Spectrum(np.zeros(0), np.zeros((0, 0)) if want_vectors else None, 0.0)
    a = _check_hermitian(raw)
    n = a.shape[0]

    if _is_tridiagonal(a):
        d, e, q = _tridiag_parts(a, want_vectors)
    else:
        d, e, q = _householder_tridiag(a, want_vectors)

    ee = np.zeros(n)
    ee[: n - 1] = e
    if want_vectors:
        z = np.asarray(q, order="C")
        status = _ql_vectors(d, ee, z)
    else:
        status = _ql_values(d, ee)
        z = None
    if status < 0:
        raise ConvergenceError(
            f"QL iteration exceeded {MAX_QL_SWEEPS} sweeps at row {-status - 1}")

    order = np.argsort(d, kind="stable")
    vals = d[order]
    vecs = None
    bound = 0.0
    if want_vectors:
        vecs = z[:, order]
        anorm = max(float(np.max(np.abs(vals))), 1e-300)
        resid = np.max(np.linalg.norm(a @ vecs - vecs * vals[None, :], axis=0))
        bound = float(resid / anorm)
        if bound > RESIDUAL_TOL:
            raise ConvergenceError(f"residual bound {bound:.3g} above contract")
    return Spectrum(vals, vecs, bound)


def lowest_k(matrix, m: int, want_vectors: bool = False) -> Spectrum:
    """The m smallest eigenvalues (full solve, then sliced)."""
    a = _entries(matrix)
    if m > a.shape[0]:
        raise ValueError(f"requested {m} eigenvalues of a {a.shape[0]}-dim matrix")
    full = eigen_hermitian(matrix, want_vectors)
    vecs = full.eigenvectors[:, :m] if want_vectors else None
    return Spectrum(full.eigenvalues[:m], vecs, full.residual_bound)


def sturm_eigenvalues(matrix) -> np.ndarray:
    """Independent oracle: bisection via Sturm sequence counts.

    Reduces with the same Householder step but replaces the QL iteration by
    bisection, so the iterative core is cross-checked rather than trusted.
    """
    a = _check_hermitian(_entries(matrix))
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    if _is_tridiagonal(a):
        d, e, _ = _tridiag_parts(a, False)
    else:
        d, e, _ = _householder_tridiag(a, False)
    if n == 1:
        return d.copy()
    return _sturm_all(d, e)
