"""Shared numerical kernels: quadrature, Si/Ci integrals, dense linear solves.

Everything here is deterministic and stateless.  The physics modules build
their oscillatory integrals and impedance solves on top of these primitives,
so tolerances promised there ultimately trace back to this file.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import get_lapack_funcs

from .errors import ConditioningError, DomainError, NumericalError, QuadratureError

_EULER_GAMMA = 0.5772156649015329
# Series/continued-fraction switchover for Si/Ci; both are comfortably
# accurate on either side of this point.
_SICI_SWITCH = 4.0


@dataclass(frozen=True)
class Quadrature1D:
    """Fixed composite Gauss-Legendre rule: `panels` equal panels of `nodes` points.

    A single panel of n nodes integrates polynomials up to degree 2n-1
    exactly; panels are for integrands with kinks or many oscillations.
    """

    nodes: int = 64
    panels: int = 1

    def __post_init__(self) -> None:
        if self.nodes < 1 or self.panels < 1:
            raise DomainError("Quadrature1D requires nodes >= 1 and panels >= 1")


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cached Gauss-Legendre nodes and weights on the reference interval [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_nodes(a: float, b: float, q: Quadrature1D) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the composite rule `q` mapped onto [a, b]."""
    xr, wr = gauss_legendre(q.nodes)
    edges = np.linspace(a, b, q.panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    x = (mid[:, None] + half * xr[None, :]).ravel()
    w = np.broadcast_to(half * wr, (q.panels, q.nodes)).ravel()
    return x, w


def integrate_1d(f: Callable, a: float, b: float, q: Quadrature1D = Quadrature1D()) -> complex:
    """Integrate f over [a, b] with the fixed rule q.

    f is called with an ndarray of abscissae and may return real or complex
    values; a scalar-only callable is accepted too.  A non-finite sample
    raises QuadratureError naming the abscissa.
    """
    if not a < b:
        raise DomainError(f"integration interval must satisfy a < b, got [{a}, {b}]")
    x, w = composite_nodes(a, b, q)
    y = np.asarray(f(x))
    if y.shape != x.shape:  # scalar-only callable
        y = np.asarray([f(xi) for xi in x])
    bad = ~np.isfinite(y)
    if np.any(bad):
        raise QuadratureError(f"integrand not finite at x = {x[np.argmax(bad)]!r}")
    return complex(np.sum(w * y))


def _sici_series(x: float) -> tuple[float, float]:
    """Power series for (Si, Ci), reliable for 0 < x < ~6."""
    x2 = x * x
    # Si = sum u_k/(2k+1),  u_k = (-1)^k x^(2k+1)/(2k+1)!
    u = x
    si = x
    # Cin = sum v_k/(2k),   v_k = (-1)^(k+1) x^(2k)/(2k)!;  Ci = gamma + ln x - Cin
    v = 0.5 * x2
    cin = 0.5 * v
    for k in range(1, 80):
        u *= -x2 / ((2 * k) * (2 * k + 1))
        si += u / (2 * k + 1)
        v *= -x2 / ((2 * k + 1) * (2 * k + 2))
        cin += v / (2 * k + 2)
        if abs(u) < 1e-18 * (abs(si) + 1.0) and abs(v) < 1e-18 * (abs(cin) + 1.0):
            break
    return si, _EULER_GAMMA + math.log(x) - cin


def _e1_imag_axis(x: float) -> complex:
    """E1(jx) for real x > 0 via the standard continued fraction (modified Lentz).

    E1(jx) = -Ci(x) + j(Si(x) - pi/2), which is how Si/Ci for large argument
    are recovered.
    """
    z = 1j * x
    tiny = 1e-300
    b = z + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for k in range(1, 500):
        a = -float(k * k)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h * cmath.exp(-z)
    raise NumericalError(f"continued fraction for E1(jx) did not converge at x = {x}")


def sin_integral(x: float) -> float:
    """Si(x) = integral of sin(t)/t from 0 to x; odd in x; abs error <= 1e-10."""
    x = float(x)
    if x == 0.0:
        return 0.0
    if x < 0.0:
        return -sin_integral(-x)
    if x < _SICI_SWITCH:
        return _sici_series(x)[0]
    return 0.5 * math.pi + _e1_imag_axis(x).imag


def cos_integral(x: float) -> float:
    """Ci(x) = -integral of cos(t)/t from x to infinity, for x > 0."""
    x = float(x)
    if x <= 0.0:
        raise DomainError(f"cos_integral requires x > 0, got {x}")
    if x < _SICI_SWITCH:
        return _sici_series(x)[1]
    return -_e1_imag_axis(x).real


def symmetry_defect(a: np.ndarray, hermitian: bool = False) -> float:
    """Relative departure of a square matrix from (complex or Hermitian) symmetry."""
    a = np.asarray(a)
    other = a.conj().T if hermitian else a.T
    scale = np.max(np.abs(a))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - other)) / scale)


def solve_linear(a: np.ndarray, b: np.ndarray, rcond_floor: float = 1e-14) -> np.ndarray:
    """Solve the dense complex system a @ x = b by LU with partial pivoting.

    Raises ConditioningError with a condition estimate when the 1-norm
    reciprocal condition falls below `rcond_floor`.  `b` may be a vector or
    a matrix of stacked right-hand sides.
    """
    a = np.asarray(a, dtype=np.complex128)
    b_arr = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    if b_arr.shape[0] != a.shape[0]:
        raise DomainError(f"shape mismatch: a is {a.shape}, b is {b_arr.shape}")
    getrf, getrs, gecon = get_lapack_funcs(("getrf", "getrs", "gecon"), (a,))
    anorm = np.linalg.norm(a, 1)
    lu, piv, info = getrf(a)
    if info > 0:
        raise ConditioningError("matrix is exactly singular (zero pivot in LU)")
    rcond = gecon(lu, anorm)[0] if anorm > 0.0 else 0.0
    if not np.isfinite(rcond) or rcond < rcond_floor:
        est = 1.0 / rcond if rcond > 0.0 else math.inf
        raise ConditioningError(f"matrix too ill-conditioned: condition estimate {est:.3e}")
    x, info = getrs(lu, piv, b_arr)
    if info != 0:
        raise ConditioningError(f"LAPACK getrs failed with info = {info}")
    return x
