"""Shared generators and quadrature oracles for the test suite."""

import numpy as np

from peakonlab.core import Grid, PeakonTrain, grid_for


def random_sign_ordered_train(rng, n_max=3, amp_range=(0.3, 0.7), gap_min=2.0,
                              span=6.0):
    """Random admissible train: negatives strictly left of positives,
    amplitudes O(1), crest gaps at least gap_min."""
    n = int(rng.integers(1, n_max + 1))
    kneg = int(rng.integers(0, n + 1))
    amps = np.sort(rng.uniform(*amp_range, n))
    if kneg == 0:
        p = amps
    elif kneg == n:
        p = -amps[::-1]
    else:
        p = np.concatenate([-amps[:kneg][::-1], amps[kneg:]])
    q = np.sort(rng.uniform(-span, span, n))
    while n > 1 and np.any(np.diff(q) < gap_min):
        q = np.sort(rng.uniform(-span, span, n))
    return PeakonTrain(p, q)


def snap_to_midcells(train: PeakonTrain, grid: Grid) -> PeakonTrain:
    """Move crests onto cell midpoints, where the jump-cell trapezoid error
    of kinked integrands vanishes by symmetry (keeps quadratures at O(h^2))."""
    q = grid.x0 + (np.round((train.q - grid.x0) / grid.h - 0.5) + 0.5) * grid.h
    return PeakonTrain(train.p, q)


def midcell_train(rng, h=1e-3, pad=25.0, **kw):
    tr = random_sign_ordered_train(rng, **kw)
    g = grid_for(tr.q, h, pad)
    return snap_to_midcells(tr, g), g


def h1_inner_quadrature(a: PeakonTrain, b: PeakonTrain, h=1e-4, pad=25.0):
    """Independent oracle for the closed-form H^1 inner product: composite
    trapezoid of u v + u_x v_x on a fine padded grid."""
    from peakonlab.core import sample_on_grid

    g = grid_for(np.concatenate([a.q, b.q]), h, pad)
    fa = sample_on_grid(a, g)
    fb = sample_on_grid(b, g)
    y = fa.u * fb.u + fa.ux * fb.ux
    return h * (y.sum() - 0.5 * (y[0] + y[-1]))
