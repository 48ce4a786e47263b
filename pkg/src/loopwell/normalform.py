"""Iterated normal form for formal deformations of a folded well.

Given a deformation  p_eps = p + eps p_1 + eps^2 p_2 + ...  of
p = b0 + (g(I))^2, the driver produces a chain of Lie generators together
with corrected fold data g_eps and an angle-only potential V_eps such that

    (transformed p_eps) = b0 + (g_eps(I))^2 + eps V_eps(theta)

holds coefficientwise through the epsilon cut.  Each step solves one
cohomological equation, applies one Lie transform and completes one square.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .series import (
    FourierTaylorSeries,
    SymbolModel,
    add,
    poisson_bracket,
    scale,
    solve_cohomological,
    subtract,
    taylor_compose,
    taylor_div,
    taylor_mul,
)

__all__ = [
    "CompletionError",
    "FormalDeformation",
    "NormalFormResult",
    "lie_transform",
    "complete_square",
    "birkhoff_normal_form",
]


class CompletionError(ValueError):
    """The kernel term cannot be absorbed into the square.

    Raised when the required fold correction would not vanish on the loop,
    i.e. the absorbed term has a non-zero linear part in the folded variable.
    Such deformations shift the invariant action of the minimizing loop and
    are outside the strict normal-form class handled here.
    """


@dataclass(frozen=True)
class FormalDeformation:
    """Epsilon-graded list of series; orders[n] multiplies eps^n.

    The zeroth order is pinned to the unperturbed symbol of ``model``
    (checked at construction).
    """

    model: SymbolModel
    orders: tuple[FourierTaylorSeries, ...]

    def __post_init__(self):
        if not self.orders:
            raise ValueError("a deformation needs at least the order-0 term")
        K, J = self.orders[0].fourier_cut, self.orders[0].taylor_cut
        for s in self.orders:
            if (s.fourier_cut, s.taylor_cut) != (K, J):
                raise ValueError("all epsilon orders must share one truncation")
            if s.base_point != self.model.action0:
                raise ValueError("orders must be expanded at the model action")
        p0 = self.model.p_series(K, J)
        defect = np.max(np.abs(self.orders[0].coeffs - p0.coeffs))
        if defect > 1e-12 * max(p0.max_abs(), 1.0):
            raise ValueError("order 0 must equal the unperturbed symbol "
                             f"(defect {defect:.3g})")
        object.__setattr__(self, "orders", tuple(self.orders))

    @classmethod
    def from_perturbations(cls, model: SymbolModel,
                           perturbations: list[FourierTaylorSeries],
                           fourier_cut: int, taylor_cut: int,
                           eps_cut: int | None = None) -> "FormalDeformation":
        if eps_cut is None:
            eps_cut = len(perturbations)
        orders = [model.p_series(fourier_cut, taylor_cut)]
        for n in range(1, eps_cut + 1):
            if n - 1 < len(perturbations):
                orders.append(perturbations[n - 1])
            else:
                orders.append(FourierTaylorSeries.zeros(
                    model.action0, fourier_cut, taylor_cut))
        return cls(model, tuple(orders))

    @property
    def eps_cut(self) -> int:
        return len(self.orders) - 1

    @property
    def fourier_cut(self) -> int:
        return self.orders[0].fourier_cut

    @property
    def taylor_cut(self) -> int:
        return self.orders[0].taylor_cut


def lie_transform(p: FormalDeformation, generator: FourierTaylorSeries,
                  step_order: int) -> FormalDeformation:
    """exp(eps^N ad_a) applied to the deformation, truncated at its eps cut.

    ad_a h = {a, h}; the m-th iterate raises the epsilon degree by m*N, so
    the exponential series terminates.
    """
    if step_order < 1:
        raise ValueError("step_order must be >= 1")
    n_max = p.eps_cut
    if step_order > n_max or generator.max_abs() == 0.0:
        return p
    # ad-chains per source order: chains[i][m] = ad^m(orders[i]) / m!
    new = list(p.orders)
    for i, src in enumerate(p.orders):
        reach = (n_max - i) // step_order
        term = src
        for m in range(1, reach + 1):
            term = scale(poisson_bracket(generator, term), 1.0 / m)
            tgt = i + m * step_order
            new[tgt] = add(new[tgt], term)
    return FormalDeformation(p.model, tuple(new))


def complete_square(g_orders: list[np.ndarray], q: np.ndarray,
                    step_order: int) -> list[np.ndarray]:
    """Absorb an eps^N kernel term q(s) into the square of the fold series.

    ``q`` is a Taylor series in the folded variable s = g(I) with q(0) = 0.
    Writing G = sum_m eps^m g_m, the correction c solves 2 g_0 c = q o g_0,
    so that (G + eps^N c)^2 gains exactly eps^N q(g_0(I)) at leading order.
    c must vanish on the loop (c(0) = 0); otherwise CompletionError.
    """
    if step_order < 1:
        raise ValueError("step_order must be >= 1")
    q = np.asarray(q, dtype=complex)
    g0 = np.asarray(g_orders[0], dtype=complex)
    j_cut = g0.size - 1
    out = [np.array(g) for g in g_orders]
    while len(out) <= step_order:
        out.append(np.zeros(j_cut + 1, dtype=complex))
    if q.size == 0 or not np.any(q):
        return out
    if abs(q[0]) > 1e-11 * np.max(np.abs(q)):
        raise CompletionError("kernel term does not vanish on the loop")

    num = taylor_compose(q, g0, j_cut)         # q(g0(u)), vanishes at u = 0
    den = 2.0 * g0                             # vanishes to exactly first order
    corr = np.zeros(j_cut + 1, dtype=complex)
    corr[: j_cut] = taylor_div(num[1:], den[1:], j_cut - 1)
    scale_ = max(np.max(np.abs(corr)), np.max(np.abs(q)), 1e-300)
    if abs(corr[0]) > 1e-11 * scale_:
        raise CompletionError(
            "square completion would shift the fold off the loop "
            f"(constant term {corr[0]:.3g}); the kernel term must vanish "
            "to second order in the folded variable")
    corr[0] = 0.0
    out[step_order] = out[step_order] + corr
    return out


@dataclass(frozen=True)
class NormalFormResult:
    """Output of the iteration.

    g_orders   -- Taylor coefficients (in I - action0) of the fold series per
                  epsilon order; entry 0 is the unperturbed fold profile
    v_orders   -- angle-only series per epsilon order; v_orders[n] multiplies
                  eps^{n+1} in the full symbol (the global eps prefactor)
    generators -- the applied chain [(step_order, series), ...]
    residual   -- leftover at the top epsilon order after the final step
    residual_below_max -- largest coefficient left at any lower order
    """

    model: SymbolModel
    fourier_cut: int
    taylor_cut: int
    g_orders: list[np.ndarray]
    v_orders: list[FourierTaylorSeries]
    generators: list[tuple[int, FourierTaylorSeries]]
    residual: FourierTaylorSeries
    residual_below_max: float

    @property
    def eps_cut(self) -> int:
        return len(self.v_orders)

    def reconstruct(self) -> FormalDeformation:
        """b0 + (g_eps(I))^2 + eps V_eps as a formal deformation."""
        return _reconstruct(self.model, self.fourier_cut, self.taylor_cut,
                            self.eps_cut, self.g_orders, self.v_orders)

    def to_dict(self) -> dict:
        def _arr(a):
            a = np.asarray(a)
            if np.max(np.abs(a.imag), initial=0.0) > 1e-12:
                return [[float(x.real), float(x.imag)] for x in a]
            return [float(x.real) for x in a]

        return {
            "model": self.model.to_dict(),
            "fourier_cut": self.fourier_cut,
            "taylor_cut": self.taylor_cut,
            "eps_cut": self.eps_cut,
            "g_orders": [_arr(g) for g in self.g_orders],
            "v_orders": [v.to_dict() for v in self.v_orders],
            "generators": [{"order": n, "series": a.to_dict()}
                           for n, a in self.generators],
            "residual": self.residual.to_dict(),
            "residual_below_max": self.residual_below_max,
        }


def _reconstruct(model, K, J, eps_cut, g_orders, v_orders) -> FormalDeformation:
    orders = []
    for n in range(eps_cut + 1):
        sq = np.zeros(J + 1, dtype=complex)
        for i in range(n + 1):
            if i < len(g_orders) and n - i < len(g_orders):
                sq += taylor_mul(g_orders[i], g_orders[n - i], J)
        s = FourierTaylorSeries.from_taylor(sq, model.action0, K, J)
        if n == 0:
            s = add(s, FourierTaylorSeries.constant(model.floor_energy,
                                                    model.action0, K, J))
        if 1 <= n <= len(v_orders):
            s = add(s, v_orders[n - 1])
        orders.append(s)
    return FormalDeformation(model, tuple(orders))


def birkhoff_normal_form(p: FormalDeformation,
                         model: SymbolModel | None = None) -> NormalFormResult:
    """Run the full iteration on a deformation.

    Per step N: split the eps^N remainder, solve the cohomological equation,
    apply the Lie transform with the generator sign that actually cancels the
    remainder (asserted, not assumed), absorb the kernel part into the fold
    square, and append the boundary part to the potential.
    """
    model = p.model if model is None else model
    if model is not p.model and model.to_dict() != p.model.to_dict():
        raise ValueError("deformation was built for a different model")
    n_max = p.eps_cut
    if n_max < 1:
        raise ValueError("nothing to normalize: eps cut is 0")
    K, J = p.fourier_cut, p.taylor_cut
    if J < n_max + 2:
        raise ValueError(f"taylor_cut {J} too small; need >= eps_cut + 2")

    j_g = J
    g_orders: list[np.ndarray] = [np.zeros(j_g + 1, dtype=complex)]
    g_orders[0][: min(model.fold_taylor.size, j_g + 1)] = \
        model.fold_taylor[: j_g + 1]
    v_orders = [FourierTaylorSeries.zeros(model.action0, K, J)
                for _ in range(n_max)]
    chain: list[tuple[int, FourierTaylorSeries]] = []
    work = p

    for N in range(1, n_max + 1):
        recon = _reconstruct(model, K, J, n_max, g_orders, v_orders)
        r = subtract(work.orders[N], recon.orders[N])
        sol = solve_cohomological(r, model)

        qf = taylor_compose(sol.kernel_profile, g_orders[0], J)
        target = add(FourierTaylorSeries.from_taylor(qf, model.action0, K, J),
                     sol.boundary_profile)
        tol = 1e-9 * max(r.max_abs(), 1.0)

        applied = sol.generator
        if applied.max_abs() != 0.0:
            for cand in (sol.generator, scale(sol.generator, -1.0)):
                moved = lie_transform(work, cand, N)
                leftover = subtract(subtract(moved.orders[N],
                                             recon.orders[N]), target)
                v = min(leftover.valid_taylor_order, J - 1)
                if np.max(np.abs(leftover.coeffs[:, : v + 1])) <= tol:
                    work, applied = moved, cand
                    break
            else:
                raise ArithmeticError(
                    f"step {N}: neither generator sign cancels the remainder")

        g_orders = complete_square(g_orders, sol.kernel_profile, N)
        v_orders[N - 1] = add(v_orders[N - 1], sol.boundary_profile)
        chain.append((N, applied))

    recon = _reconstruct(model, K, J, n_max, g_orders, v_orders)
    below = 0.0
    for n in range(n_max):
        d = subtract(work.orders[n], recon.orders[n])
        v = d.valid_taylor_order
        below = max(below, float(np.max(np.abs(d.coeffs[:, : v + 1]))))
    residual = subtract(work.orders[n_max], recon.orders[n_max])

    return NormalFormResult(model, K, J, g_orders, v_orders, chain,
                            residual, below)


def replay_generator_chain(p: FormalDeformation,
                           chain: list[tuple[int, FourierTaylorSeries]],
                           ) -> FormalDeformation:
    """Re-apply a stored generator chain to an untouched deformation.

    Used as the independent cross-check of the driver: the replayed series
    must match the reconstructed normal form coefficientwise.
    """
    out = p
    for step_order, gen in chain:
        out = lie_transform(out, gen, step_order)
    return out
