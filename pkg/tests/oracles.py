"""Independent reference computations shared by several test modules."""
import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as P


def divided_difference_poly(c, a, b):
    """(u(a) - u(b)) / (a - b) for u = sum c_k t^k, evaluated without division."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(np.broadcast(a, b).shape)
    for k in range(1, len(c)):
        for j in range(k):
            out = out + c[k] * a ** j * b ** (k - 1 - j)
    return out


def seminorm_oracle_1d(c, npoints=200):
    """Half-order seminorm of a monomial-coefficient polynomial by dense quadrature."""
    x, w = npleg.leggauss(npoints)
    dd = divided_difference_poly(c, x[:, None], x[None, :])
    return float(np.einsum("i,j,ij->", w, w, dd * dd))


def half_norm_oracle_1d(c, npoints=200):
    x, w = npleg.leggauss(npoints)
    return float(w @ P.polyval(x, c) ** 2) + seminorm_oracle_1d(c, npoints)


def threehalf_norm_oracle_1d(c, npoints=200):
    x, w = npleg.leggauss(npoints)
    dc = P.polyder(c)
    l2 = float(w @ P.polyval(x, c) ** 2)
    h1 = float(w @ P.polyval(x, dc) ** 2)
    return l2 + h1 + seminorm_oracle_1d(dc, npoints)


def seminorm_oracle_2d(coef, extents, npoints=40):
    """Two-direction kernel sum for ``u(s, t) = sum coef[i, j] s^i t^j`` on a reference face."""
    x, w = npleg.leggauss(npoints)
    total = 0.0
    # direction s, integrate over t
    for t, wt in zip(x, w):
        line = np.array([P.polyval(t, coef[i]) for i in range(coef.shape[0])])
        total += wt * seminorm_oracle_1d(line, npoints) * extents[1] / 2.0
    for s, ws in zip(x, w):
        line = np.array([P.polyval(s, coef[:, j]) for j in range(coef.shape[1])])
        total += ws * seminorm_oracle_1d(line, npoints) * extents[0] / 2.0
    return total
