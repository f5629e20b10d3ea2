"""Quadrature rules on the reference triangle and interval."""
import numpy as np

# Barycentric points / weights (weights sum to 1, multiply by area).
_TRI_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
}


def _dunavant5():
    a1 = (6 - np.sqrt(15)) / 21
    a2 = (6 + np.sqrt(15)) / 21
    w1 = (155 - np.sqrt(15)) / 1200
    w2 = (155 + np.sqrt(15)) / 1200
    pts = [[1 / 3, 1 / 3, 1 / 3]]
    wts = [9 / 40]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1 - 2 * a
        pts += [[b, a, a], [a, b, a], [a, a, b]]
        wts += [w, w, w]
    return np.array(pts), np.array(wts)


_TRI_RULES[5] = _dunavant5()


def triangle_rule(order):
    """Barycentric points (q, 3) and weights (q,) exact to the given degree."""
    for k in sorted(_TRI_RULES):
        if k >= order:
            return _TRI_RULES[k]
    raise ValueError(f"no triangle rule of order {order}")


def gauss_interval(npts):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w
