"""Independent desk-scale oracles used only by the test suite.

These recompute expected values through routes the library does not take:
exhaustive grid scans of tiny Gram spectrahedra and direct coefficient sums.
"""

import numpy as np

from sos_approx.gram import gram_preimage_free


def min_rank_two_vars_degree_one(a, grid=2001, span=3.0, psd_tol=1e-12,
                                 rank_tol=1e-8):
    """Brute-force minimal Gram rank for a Hermitian quadratic in x1, x2.

    The fiber over a = alpha x1^2 + gamma x1 x2 + beta x2^2 is the
    one-parameter family [[alpha, gamma/2 + i t], [gamma/2 - i t, beta]];
    scan t and report the smallest rank among the PSD members.
    """
    alpha = a.coefficient((2, 0)).real
    beta = a.coefficient((0, 2)).real
    gamma = a.coefficient((1, 1)).real
    points = list(np.linspace(-span, span, grid))
    # rank drops exactly where det vanishes; include those boundary points
    disc = alpha * beta - gamma * gamma / 4.0
    if disc >= 0:
        points.extend([np.sqrt(disc), -np.sqrt(disc)])
    best = None
    for t in points:
        M = np.array([[alpha, gamma / 2 + 1j * t],
                      [gamma / 2 - 1j * t, beta]])
        w = np.linalg.eigvalsh(M)
        if w.min() < -psd_tol:
            continue
        rank = int((w > rank_tol * max(w.max(), 1e-30)).sum())
        best = rank if best is None else min(best, rank)
    return best


def free_pythagoras_number(p, d):
    """Exact Pythagoras number of a free sum of squares: the unique Gram rank."""
    M = gram_preimage_free(p, d)
    w = np.linalg.eigvalsh(M)
    if w.min() < -1e-9 * max(abs(w).max(), 1e-30):
        return None
    return int((w > 1e-9 * max(w.max(), 1e-30)).sum())
