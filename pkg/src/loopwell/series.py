"""Truncated Fourier-in-angle x Taylor-in-action series algebra.

A ``FourierTaylorSeries`` stores coefficients c[k, j] of

    h(theta, I) = sum_{|k| <= K} sum_{0 <= j <= J} c[k, j] e^{i k theta} (I - I0)^j

where ``I0`` is the action value the Taylor expansion is centered at.  The
algebra (products, Poisson brackets, angle averaging, the kernel/image/boundary
splitting and the cohomological solve) is what the normal-form iteration in
:mod:`loopwell.normalform` is built from.

Truncation bookkeeping: every series carries ``valid_taylor_order``, the
largest Taylor order whose coefficients are still trustworthy.  Sums and
products keep the minimum of their inputs; a Poisson bracket or a Taylor
division loses one order on the side the action derivative hits (an
angle-free factor spares the other side, see :func:`poisson_bracket`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChartMismatchError",
    "TruncationExhaustedError",
    "DivisionRemainderError",
    "FourierTaylorSeries",
    "SymbolModel",
    "SplitResult",
    "CohomologicalSolution",
    "add",
    "subtract",
    "scale",
    "multiply",
    "poisson_bracket",
    "average",
    "split",
    "solve_cohomological",
    "taylor_mul",
    "taylor_div",
    "taylor_compose",
    "taylor_invert",
]

#: Relative tolerance below which the constant term of a Taylor-division
#: numerator is declared zero.
DIVISION_TOL = 1e-12


class ChartMismatchError(ValueError):
    """Series expanded at different base points cannot be combined."""


class TruncationExhaustedError(ValueError):
    """No trustworthy Taylor orders are left for the requested operation."""


class DivisionRemainderError(ValueError):
    """A Taylor division has a non-vanishing remainder (non-solvable input)."""


# ----------------------------------------------------------------------
# one-variable truncated Taylor helpers (coefficients in increasing order)
# ----------------------------------------------------------------------

def taylor_mul(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    """Product of two Taylor polynomials truncated at ``order``."""
    return np.convolve(np.asarray(a), np.asarray(b))[: order + 1]


def taylor_div(num: np.ndarray, den: np.ndarray, order: int) -> np.ndarray:
    """Power-series quotient num/den to ``order``; requires den[0] != 0."""
    num = np.asarray(num, dtype=complex)
    den = np.asarray(den, dtype=complex)
    if den.size == 0 or den[0] == 0:
        raise DivisionRemainderError("denominator has vanishing constant term")
    q = np.zeros(order + 1, dtype=complex)
    for j in range(order + 1):
        acc = num[j] if j < num.size else 0.0
        top = min(j, den.size - 1)
        if top >= 1:
            acc = acc - np.dot(q[j - top : j][::-1], den[1 : top + 1])
        q[j] = acc / den[0]
    return q


def taylor_compose(outer: np.ndarray, inner: np.ndarray, order: int) -> np.ndarray:
    """outer(inner(s)) truncated at ``order``; requires inner[0] == 0."""
    outer = np.asarray(outer, dtype=complex)
    inner = np.asarray(inner, dtype=complex)
    if inner.size and inner[0] != 0:
        raise ValueError("composition needs an inner series without constant term")
    res = np.zeros(order + 1, dtype=complex)
    if outer.size == 0:
        return res
    # Horner from the top coefficient down
    res[0] = outer[-1]
    for c in outer[-2::-1]:
        res = np.convolve(res, inner)[: order + 1]
        res = np.pad(res, (0, order + 1 - res.size))
        res[0] += c
    return res


def taylor_invert(g: np.ndarray, order: int) -> np.ndarray:
    """Compositional inverse of g (g[0] == 0, g[1] != 0) to ``order``."""
    g = np.asarray(g, dtype=complex)
    if g.size < 2 or g[0] != 0 or g[1] == 0:
        raise ValueError("inversion needs g(0) = 0 and g'(0) != 0")
    h = np.zeros(order + 1, dtype=complex)
    if order >= 1:
        h[1] = 1.0 / g[1]
    for m in range(2, order + 1):
        comp = taylor_compose(g, h, m)
        h[m] -= comp[m] / g[1]
    return h


# ----------------------------------------------------------------------
# the series type
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FourierTaylorSeries:
    """Doubly truncated series around a closed loop.

    coeffs has shape (2K+1, J+1); row index ``k + K`` holds the Fourier mode
    k, column j the Taylor order in (I - base_point).
    """

    base_point: float
    fourier_cut: int
    taylor_cut: int
    coeffs: np.ndarray
    valid_taylor_order: int

    def __post_init__(self):
        K, J = self.fourier_cut, self.taylor_cut
        if K < 0 or J < 0:
            raise ValueError("truncation orders must be non-negative")
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * K + 1, J + 1):
            raise ValueError(f"coeffs shape {c.shape} != {(2 * K + 1, J + 1)}")
        if not (0 <= self.valid_taylor_order <= J):
            raise ValueError("valid_taylor_order out of range")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # -- constructors ---------------------------------------------------

    @classmethod
    def zeros(cls, base_point: float, fourier_cut: int, taylor_cut: int,
              valid_taylor_order: int | None = None) -> "FourierTaylorSeries":
        v = taylor_cut if valid_taylor_order is None else valid_taylor_order
        return cls(base_point, fourier_cut, taylor_cut,
                   np.zeros((2 * fourier_cut + 1, taylor_cut + 1), dtype=complex), v)

    @classmethod
    def from_terms(cls, base_point: float, fourier_cut: int, taylor_cut: int,
                   terms: dict[tuple[int, int], complex],
                   valid_taylor_order: int | None = None) -> "FourierTaylorSeries":
        out = np.zeros((2 * fourier_cut + 1, taylor_cut + 1), dtype=complex)
        for (k, j), c in terms.items():
            if abs(k) > fourier_cut or not (0 <= j <= taylor_cut):
                raise ValueError(f"term ({k}, {j}) outside truncation")
            out[k + fourier_cut, j] += c
        v = taylor_cut if valid_taylor_order is None else valid_taylor_order
        return cls(base_point, fourier_cut, taylor_cut, out, v)

    @classmethod
    def constant(cls, value: complex, base_point: float, fourier_cut: int,
                 taylor_cut: int) -> "FourierTaylorSeries":
        return cls.from_terms(base_point, fourier_cut, taylor_cut, {(0, 0): value})

    @classmethod
    def from_taylor(cls, taylor: np.ndarray, base_point: float, fourier_cut: int,
                    taylor_cut: int) -> "FourierTaylorSeries":
        """Angle-independent series from 1D Taylor coefficients."""
        taylor = np.asarray(taylor, dtype=complex)
        out = np.zeros((2 * fourier_cut + 1, taylor_cut + 1), dtype=complex)
        n = min(taylor.size, taylor_cut + 1)
        out[fourier_cut, :n] = taylor[:n]
        return cls(base_point, fourier_cut, taylor_cut, out, taylor_cut)

    @classmethod
    def from_fourier(cls, profile: dict[int, complex], base_point: float,
                     fourier_cut: int, taylor_cut: int) -> "FourierTaylorSeries":
        """Action-independent series from Fourier coefficients {k: c_k}."""
        return cls.from_terms(base_point, fourier_cut, taylor_cut,
                              {(k, 0): c for k, c in profile.items()})

    # -- accessors ------------------------------------------------------

    def coeff(self, k: int, j: int) -> complex:
        if abs(k) > self.fourier_cut or not (0 <= j <= self.taylor_cut):
            return 0.0
        return complex(self.coeffs[k + self.fourier_cut, j])

    def fourier_modes(self) -> np.ndarray:
        return np.arange(-self.fourier_cut, self.fourier_cut + 1)

    def taylor_block(self, k: int) -> np.ndarray:
        """1D Taylor coefficients of the Fourier mode k."""
        return np.array(self.coeffs[k + self.fourier_cut])

    def theta_profile(self) -> dict[int, complex]:
        """Fourier coefficients of the restriction to the loop (j = 0 column)."""
        col = self.coeffs[:, 0]
        return {int(k): complex(col[k + self.fourier_cut])
                for k in range(-self.fourier_cut, self.fourier_cut + 1)
                if col[k + self.fourier_cut] != 0}

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def reality_defect(self) -> float:
        """max |c(-k, j) - conj(c(k, j))|; zero for a real-valued function."""
        return float(np.max(np.abs(self.coeffs[::-1] - np.conj(self.coeffs))))

    def evaluate(self, theta: float, action: float) -> complex:
        u = action - self.base_point
        upow = u ** np.arange(self.taylor_cut + 1)
        phases = np.exp(1j * self.fourier_modes() * theta)
        return complex(phases @ self.coeffs @ upow)

    def truncate_to(self, fourier_cut: int, taylor_cut: int) -> "FourierTaylorSeries":
        """Crop to a smaller truncation (Taylor tails drop harmlessly)."""
        if fourier_cut > self.fourier_cut or taylor_cut > self.taylor_cut:
            raise ValueError("truncate_to cannot grow the truncation")
        return _crop(self, fourier_cut, taylor_cut)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        entries = []
        for k in range(-self.fourier_cut, self.fourier_cut + 1):
            for j in range(self.taylor_cut + 1):
                c = self.coeffs[k + self.fourier_cut, j]
                if c != 0:
                    entries.append([int(k), int(j), float(c.real), float(c.imag)])
        d = {"base_point": self.base_point, "K": self.fourier_cut,
             "J": self.taylor_cut, "coeffs": entries}
        if self.valid_taylor_order != self.taylor_cut:
            d["valid_taylor_order"] = self.valid_taylor_order
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FourierTaylorSeries":
        K, J = int(d["K"]), int(d["J"])
        out = np.zeros((2 * K + 1, J + 1), dtype=complex)
        for k, j, re, im in d["coeffs"]:
            out[int(k) + K, int(j)] = complex(re, im)
        return cls(float(d["base_point"]), K, J, out,
                   int(d.get("valid_taylor_order", J)))

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, _coerce(other, self))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, FourierTaylorSeries):
            return multiply(self, other)
        return scale(self, other)

    __rmul__ = __mul__


def _coerce(x, like: FourierTaylorSeries) -> FourierTaylorSeries:
    if isinstance(x, FourierTaylorSeries):
        return x
    return FourierTaylorSeries.constant(complex(x), like.base_point,
                                        like.fourier_cut, like.taylor_cut)


def _reconcile(a: FourierTaylorSeries, b: FourierTaylorSeries):
    """Common truncation (minimum of both) after a chart check."""
    if a.base_point != b.base_point:
        raise ChartMismatchError(
            f"incompatible charts: base points {a.base_point} != {b.base_point}")
    K = min(a.fourier_cut, b.fourier_cut)
    J = min(a.taylor_cut, b.taylor_cut)
    return _crop(a, K, J), _crop(b, K, J)


def _crop(a: FourierTaylorSeries, K: int, J: int) -> FourierTaylorSeries:
    if K == a.fourier_cut and J == a.taylor_cut:
        return a
    sl = a.coeffs[a.fourier_cut - K: a.fourier_cut + K + 1, : J + 1]
    return FourierTaylorSeries(a.base_point, K, J, sl.copy(),
                               min(a.valid_taylor_order, J))


# ----------------------------------------------------------------------
# algebra
# ----------------------------------------------------------------------

def add(a: FourierTaylorSeries, b: FourierTaylorSeries) -> FourierTaylorSeries:
    a, b = _reconcile(a, b)
    return FourierTaylorSeries(a.base_point, a.fourier_cut, a.taylor_cut,
                               a.coeffs + b.coeffs,
                               min(a.valid_taylor_order, b.valid_taylor_order))


def subtract(a: FourierTaylorSeries, b: FourierTaylorSeries) -> FourierTaylorSeries:
    return add(a, scale(b, -1.0))


def scale(a: FourierTaylorSeries, c: complex) -> FourierTaylorSeries:
    return FourierTaylorSeries(a.base_point, a.fourier_cut, a.taylor_cut,
                               a.coeffs * complex(c), a.valid_taylor_order)


def multiply(a: FourierTaylorSeries, b: FourierTaylorSeries) -> FourierTaylorSeries:
    a, b = _reconcile(a, b)
    K, J = a.fourier_cut, a.taylor_cut
    # Cauchy product: Fourier indices add (cropped to |k| <= K), Taylor orders
    # add (discarded above J).
    full = np.zeros((4 * K + 1, J + 1), dtype=complex)
    for j in range(J + 1):
        block = np.zeros(4 * K + 1, dtype=complex)
        for j1 in range(j + 1):
            block += np.convolve(a.coeffs[:, j1], b.coeffs[:, j - j1])
        full[:, j] = block
    out = full[K: 3 * K + 1, :]
    return FourierTaylorSeries(a.base_point, K, J, out,
                               min(a.valid_taylor_order, b.valid_taylor_order))


def _d_action(a: FourierTaylorSeries) -> FourierTaylorSeries:
    out = np.zeros_like(a.coeffs)
    J = a.taylor_cut
    out[:, :J] = a.coeffs[:, 1:] * np.arange(1, J + 1)
    return FourierTaylorSeries(a.base_point, a.fourier_cut, J, out,
                               a.valid_taylor_order)


def _d_theta(a: FourierTaylorSeries) -> FourierTaylorSeries:
    out = a.coeffs * (1j * a.fourier_modes())[:, None]
    return FourierTaylorSeries(a.base_point, a.fourier_cut, a.taylor_cut, out,
                               a.valid_taylor_order)


def _theta_free(a: FourierTaylorSeries) -> bool:
    K = a.fourier_cut
    return not (np.any(a.coeffs[:K]) or np.any(a.coeffs[K + 1:]))


def poisson_bracket(a: FourierTaylorSeries,
                    b: FourierTaylorSeries) -> FourierTaylorSeries:
    """{a, b} = dI a * dtheta b - dtheta a * dI b.

    The action derivative costs one trustworthy Taylor order on the side it
    hits.  When one argument carries no angle dependence the term that would
    differentiate the other side in action vanishes identically, so only the
    angle-free argument pays the order.
    """
    va, vb = a.valid_taylor_order, b.valid_taylor_order
    a_free, b_free = _theta_free(a), _theta_free(b)
    if a_free and b_free:
        return FourierTaylorSeries.zeros(a.base_point, a.fourier_cut,
                                         a.taylor_cut, min(va, vb))
    if b_free:        # {a, b} = -dtheta a * dI b
        if vb < 1:
            raise TruncationExhaustedError("no Taylor orders left on the "
                                           "angle-free argument")
        out = scale(multiply(_d_theta(a), _d_action(b)), -1.0)
        v = min(va, vb - 1)
    elif a_free:      # {a, b} = dI a * dtheta b
        if va < 1:
            raise TruncationExhaustedError("no Taylor orders left on the "
                                           "angle-free argument")
        out = multiply(_d_action(a), _d_theta(b))
        v = min(va - 1, vb)
    else:
        if min(va, vb) < 1:
            raise TruncationExhaustedError(
                "poisson_bracket needs valid_taylor_order >= 1 on both arguments")
        lhs = multiply(_d_action(a), _d_theta(b))
        rhs = multiply(_d_theta(a), _d_action(b))
        out = subtract(lhs, rhs)
        v = min(va, vb) - 1
    return FourierTaylorSeries(out.base_point, out.fourier_cut, out.taylor_cut,
                               out.coeffs, v)


def average(h: FourierTaylorSeries) -> FourierTaylorSeries:
    """Angle average: keep only the k = 0 Fourier block."""
    out = np.zeros_like(h.coeffs)
    out[h.fourier_cut, :] = h.coeffs[h.fourier_cut, :]
    return FourierTaylorSeries(h.base_point, h.fourier_cut, h.taylor_cut, out,
                               h.valid_taylor_order)


@dataclass(frozen=True)
class SplitResult:
    """Three-way decomposition driving the normal-form iteration.

    kernel_part   -- k = 0 block with the loop value removed (h0(I) - h0(I0))
    image_part    -- k != 0 blocks with their loop values removed
    boundary_part -- the restriction to the loop, a function of the angle only
    """

    kernel_part: FourierTaylorSeries
    image_part: FourierTaylorSeries
    boundary_part: FourierTaylorSeries


def split(h: FourierTaylorSeries) -> SplitResult:
    K = h.fourier_cut
    kern = np.zeros_like(h.coeffs)
    kern[K, 1:] = h.coeffs[K, 1:]
    img = np.array(h.coeffs)
    img[:, 0] = 0.0
    img[K, :] = 0.0
    bnd = np.zeros_like(h.coeffs)
    bnd[:, 0] = h.coeffs[:, 0]
    mk = lambda c: FourierTaylorSeries(h.base_point, K, h.taylor_cut, c,
                                       h.valid_taylor_order)
    return SplitResult(mk(kern), mk(img), mk(bnd))


# ----------------------------------------------------------------------
# symbol model and the cohomological solve
# ----------------------------------------------------------------------

def _sym_profile(profile: dict[int, complex] | None) -> dict[int, complex] | None:
    """Normalize a Fourier profile of a real function: fill c(-k) = conj(c(k))."""
    if profile is None:
        return None
    out: dict[int, complex] = {}
    for k, c in profile.items():
        c = complex(c)
        k = int(k)
        if -k in out and abs(out[-k] - np.conj(c)) > 1e-13 * max(1.0, abs(c)):
            raise ValueError(f"Fourier modes {k}/{-k} are not conjugate")
        out[k] = c
        out.setdefault(-k, np.conj(c))
    if 0 in out and abs(out[0].imag) > 1e-13 * max(1.0, abs(out[0])):
        raise ValueError("mode 0 of a real profile must be real")
    return out


@dataclass(frozen=True)
class SymbolModel:
    """Data of a symbol b0 + (g(I))^2 near its minimizing loop.

    floor_energy    -- depth b0 of the well (value on the loop)
    action0         -- action of the loop; Taylor expansions are centered here
    fold_taylor     -- Taylor coefficients of the fold profile g at action0;
                       g(action0) = 0 is required exactly and g'(action0) != 0
    fold_sub_taylor -- optional semiclassical correction g1 to the fold
    pot0_fourier    -- optional Fourier coefficients of the leading potential
    pot1_fourier    -- optional subleading potential
    """

    floor_energy: float
    action0: float
    fold_taylor: np.ndarray
    fold_sub_taylor: np.ndarray | None = None
    pot0_fourier: dict[int, complex] | None = None
    pot1_fourier: dict[int, complex] | None = None

    def __post_init__(self):
        g = np.asarray(self.fold_taylor, dtype=float)
        if g.size < 2:
            raise ValueError("fold_taylor needs at least a linear coefficient")
        if g[0] != 0.0:
            raise ValueError("fold profile must vanish at action0 exactly")
        if g[1] == 0.0:
            raise ValueError("fold profile must have non-vanishing slope")
        g.setflags(write=False)
        object.__setattr__(self, "fold_taylor", g)
        if self.fold_sub_taylor is not None:
            g1 = np.asarray(self.fold_sub_taylor, dtype=float)
            g1.setflags(write=False)
            object.__setattr__(self, "fold_sub_taylor", g1)
        object.__setattr__(self, "pot0_fourier", _sym_profile(self.pot0_fourier))
        object.__setattr__(self, "pot1_fourier", _sym_profile(self.pot1_fourier))

    def fold_at(self, action, hbar: float = 0.0):
        """Evaluate g (plus hbar * g1 if present) at absolute action values."""
        u = np.asarray(action, dtype=float) - self.action0
        val = np.polynomial.polynomial.polyval(u, self.fold_taylor)
        if hbar and self.fold_sub_taylor is not None:
            val = val + hbar * np.polynomial.polynomial.polyval(u, self.fold_sub_taylor)
        return val

    def fold_slope(self) -> float:
        return float(self.fold_taylor[1])

    def p_series(self, fourier_cut: int, taylor_cut: int) -> FourierTaylorSeries:
        """floor_energy + g(I)^2 as a series at the chart truncation."""
        g2 = taylor_mul(self.fold_taylor, self.fold_taylor, taylor_cut)
        p = np.zeros(taylor_cut + 1, dtype=complex)
        p[: g2.size] = g2
        p[0] += self.floor_energy
        return FourierTaylorSeries.from_taylor(p, self.action0, fourier_cut,
                                               taylor_cut)

    def to_dict(self) -> dict:
        d = {"floor_energy": self.floor_energy, "action0": self.action0,
             "fold_taylor": list(map(float, self.fold_taylor))}
        if self.fold_sub_taylor is not None:
            d["fold_sub_taylor"] = list(map(float, self.fold_sub_taylor))
        for name in ("pot0_fourier", "pot1_fourier"):
            prof = getattr(self, name)
            if prof is not None:
                d[name] = [[k, c.real, c.imag] for k, c in sorted(prof.items())]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SymbolModel":
        kw = {"floor_energy": float(d["floor_energy"]),
              "action0": float(d["action0"]),
              "fold_taylor": np.asarray(d["fold_taylor"], dtype=float)}
        if "fold_sub_taylor" in d:
            kw["fold_sub_taylor"] = np.asarray(d["fold_sub_taylor"], dtype=float)
        for name in ("pot0_fourier", "pot1_fourier"):
            if name in d:
                kw[name] = {int(k): complex(re, im) for k, re, im in d[name]}
        return cls(**kw)


@dataclass(frozen=True)
class CohomologicalSolution:
    """Solution triple of {p, a} = r - q o f - V.

    generator        -- a; its k = 0 block is identically zero
    kernel_profile   -- Taylor coefficients of q in the folded variable s = g(I)
    boundary_profile -- V, the angle-only part of r
    """

    generator: FourierTaylorSeries
    kernel_profile: np.ndarray
    boundary_profile: FourierTaylorSeries


def solve_cohomological(r: FourierTaylorSeries,
                        model: SymbolModel) -> CohomologicalSolution:
    """Invert the bracket with p = b0 + g(I)^2 against the splitting of r.

    For each Fourier mode k != 0 the equation {p, a} = r - V - q o f reads
    2 g'(I) g(I) (ik) a_k(I) = r_k(I) - r_k(I0); both sides vanish at I0, so
    one power of (I - I0) cancels and the quotient is a regular Taylor
    division.  The k = 0 block re-expressed in s = g(I) gives q.
    """
    if r.base_point != model.action0:
        raise ChartMismatchError("series and model use different chart centers")
    K, J = r.fourier_cut, r.taylor_cut
    parts = split(r)

    g = np.zeros(J + 1, dtype=complex)
    n = min(model.fold_taylor.size, J + 1)
    g[:n] = model.fold_taylor[:n]
    gp = np.zeros(J + 1, dtype=complex)
    gp[: J] = g[1:] * np.arange(1, J + 1)
    den = taylor_mul(2.0 * g, gp, J)          # 2 g g', vanishes to first order
    den_shift = den[1:]                        # exact: den[0] = 2 g(0) g'(0) = 0

    a = np.zeros_like(r.coeffs)
    for k in range(-K, K + 1):
        if k == 0:
            continue
        num = parts.image_part.taylor_block(k)
        if not np.any(num):
            continue
        if abs(num[0]) > DIVISION_TOL * max(np.max(np.abs(num)), 1e-300):
            raise DivisionRemainderError(
                f"mode {k}: numerator does not vanish on the loop "
                "(truncation too short?)")
        quot = taylor_div(num[1:], den_shift, J - 1)
        a[k + K, : J] = quot / (1j * k)

    v_r = r.valid_taylor_order
    gen = FourierTaylorSeries(r.base_point, K, J, a, max(v_r - 1, 0))

    kern = parts.kernel_part.taylor_block(0)
    if np.any(kern[1:]):
        ginv = taylor_invert(g, J)
        q = taylor_compose(kern, ginv, J)
        q[0] = 0.0
    else:
        q = np.zeros(J + 1, dtype=complex)

    return CohomologicalSolution(gen, q, parts.boundary_part)
