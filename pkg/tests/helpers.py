"""Shared test utilities: random inputs that the drivers must accept."""

import numpy as np

from loopwell.normalform import FormalDeformation, lie_transform, _reconstruct
from loopwell.series import FourierTaylorSeries, SymbolModel, scale


def random_real_fts(rng, base, K, J, amplitude=1.0, support=None,
                    zero_mean_modes=False):
    c = rng.normal(size=(2 * K + 1, J + 1)) + 1j * rng.normal(size=(2 * K + 1, J + 1))
    c = 0.5 * (c + np.conj(c[::-1]))
    c *= amplitude
    if support is not None and support < K:
        c[: K - support, :] = 0.0
        c[K + support + 1:, :] = 0.0
    if zero_mean_modes:
        c[K, :] = 0.0
    return FourierTaylorSeries(base, K, J, c, J)


def sample_normalizable_deformation(rng, fourier_cut=4, taylor_cut=None,
                                    eps_cut=3, amplitude=0.4):
    """Draw a deformation the strict normal-form iteration can handle.

    Built backwards: pick normal-form data (fold corrections vanishing on the
    loop, angle-only potentials) plus a generator chain, then undo the chain.
    Generic raw perturbations shift the loop's action invariant, which the
    strict form cannot absorb; this construction stays inside the admissible
    class by design.
    """
    if taylor_cut is None:
        taylor_cut = eps_cut + 3
    K, N = fourier_cut, eps_cut
    # run the reverse chain with Taylor headroom, then crop: low Taylor
    # orders of truncated products never depend on the dropped tails
    Jb = taylor_cut + 2 * eps_cut
    base = float(rng.uniform(-0.5, 0.5))
    fold = np.zeros(3)
    fold[1] = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.7, 1.5))
    fold[2] = float(0.4 * rng.normal())
    model = SymbolModel(float(0.2 * rng.normal()), base, fold)

    g_orders = [np.concatenate([fold, np.zeros(Jb + 1 - fold.size)])]
    for _ in range(N):
        corr = amplitude * rng.normal(size=Jb + 1)
        corr[0] = 0.0
        g_orders.append(corr.astype(complex))
    v_orders = []
    for _ in range(N):
        prof = random_real_fts(rng, base, K, Jb, amplitude)
        c = np.zeros_like(prof.coeffs)
        c[:, 0] = prof.coeffs[:, 0]
        v_orders.append(FourierTaylorSeries(base, K, Jb, c, Jb))

    work = _reconstruct(model, K, Jb, N, g_orders, v_orders)
    for n in range(N, 0, -1):
        gen = random_real_fts(rng, base, K, Jb, amplitude, support=K // 2,
                              zero_mean_modes=True)
        work = lie_transform(work, scale(gen, -1.0), n)
    cropped = tuple(s.truncate_to(K, taylor_cut) for s in work.orders)
    return FormalDeformation(model, cropped), model
