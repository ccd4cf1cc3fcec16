"""The law ``q(k) = P(LIS(T) = k)`` of the BGW tree, its tail ``Q`` and the
exponent equation.

The table is built from the root decomposition of the BGW tree.  For
``k >= 2`` the value ``x = q(k)`` solves

    (1-p)/2 x^2 + ((1-p) S - 1) x + B = 0,
    S = q(1) + ... + q(k-1),
    B = p sum_{i <= (k-1)/2} q(i) q(k-i) + [k even] p/2 q(k/2)^2,

and we keep the smaller root.  Arithmetic is exact fixed point on Python
integers scaled by ``2**precision_bits``; the forward recursion amplifies
errors, so the precision matters (see :func:`perturbed_sequence`).
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate, optimize, special

DEFAULT_PRECISION = 192
REGULARITY_BOUNDS = (1e-3, 1e3)


class PrecisionFailure(ArithmeticError):
    """The fixed-point recursion lost positivity or monotonicity."""


@dataclass(frozen=True, eq=False)
class QTable:
    p: float
    K: int
    precision_bits: int
    q_fixed: tuple[int, ...]  # q_fixed[k] = round(q(k) * 2**bits), index 0 unused
    q: np.ndarray = field(repr=False)   # float64, q[0] = 0
    Q: np.ndarray = field(repr=False)   # float64, Q[k] for k = 1 .. K+1, Q[0] = nan
    cumq: np.ndarray = field(repr=False)  # cumq[k] = q(1) + ... + q(k)

    def q_mp(self, k: int) -> mpmath.mpf:
        with mpmath.workprec(self.precision_bits):
            return mpmath.ldexp(mpmath.mpf(self.q_fixed[k]), -self.precision_bits)

    def Q_fixed(self, k: int) -> int:
        one = 1 << self.precision_bits
        return one - sum(self.q_fixed[1:k])

    def Q_mp(self, k: int) -> mpmath.mpf:
        with mpmath.workprec(self.precision_bits):
            return mpmath.ldexp(mpmath.mpf(self.Q_fixed(k)), -self.precision_bits)

    def decimal_rows(self):
        """``(k, q, Q)`` as decimal strings carrying the full precision."""
        bits = self.precision_bits
        digits = int(bits * math.log10(2)) + 3
        with localcontext() as ctx:
            ctx.prec = digits + 10
            scale = Decimal(1 << bits)
            tail = 1 << bits
            for k in range(1, self.K + 1):
                qk = self.q_fixed[k]
                yield (k, _fmt(Decimal(qk) / scale, digits),
                       _fmt(Decimal(tail) / scale, digits))
                tail -= qk

    def to_csv(self) -> str:
        lines = ["k,q,Q"]
        lines += [f"{k},{a},{b}" for k, a, b in self.decimal_rows()]
        return "\n".join(lines) + "\n"


def _fmt(d: Decimal, digits: int) -> str:
    return format(d, f".{digits}g")


def _fixed(x: Fraction, bits: int) -> int:
    return (x.numerator << bits) // x.denominator


def _q1_fixed(p: float, bits: int) -> tuple[int, int]:
    one = 1 << bits
    P = _fixed(Fraction(p), bits)
    sqrt_p = math.isqrt(P << bits)
    return P, (one << bits) // (one + sqrt_p)


def _forward(P: int, q1: int, K: int, bits: int, strict: bool = True):
    """Run the recursion; returns the list of fixed-point values.

    With ``strict`` a lost root or a nonpositive value raises
    :class:`PrecisionFailure`; otherwise the sequence is cut where the
    recursion breaks down.
    """
    one = 1 << bits
    a2 = one - P  # 1 - p, the quadratic coefficient is a2 / 2
    q = [0] * (K + 1)
    q[1] = q1
    S = q1
    for k in range(2, K + 1):
        h = (k - 1) // 2
        conv = sum(map(operator.mul, q[1:h + 1], q[k - 1:k - h - 1:-1]))
        B = (P * conv) >> (2 * bits)
        if k % 2 == 0:
            B += ((P * q[k // 2] * q[k // 2]) >> (2 * bits)) // 2
        b = ((a2 * S) >> bits) - one
        disc = b * b - 2 * a2 * B
        if disc < 0:
            if strict:
                raise PrecisionFailure(f"no real root at k={k}")
            return q[:k]
        root = math.isqrt(disc)
        x = (2 * B << bits) // (root - b)
        if strict:
            if x <= 0:
                raise PrecisionFailure(f"q({k}) <= 0 at {bits} bits")
            if x >= one - S:
                raise PrecisionFailure(f"q({k}) >= 1 - S at {bits} bits")
            # the discarded root (root - b) / a2 must exceed 1 - S
            if (root - b) << bits <= a2 * (one - S):
                raise PrecisionFailure(f"roots of the k={k} quadratic not separated")
        q[k] = x
        S += x
    return q


def build_q_table(p: float, K: int, precision_bits: int = DEFAULT_PRECISION) -> QTable:
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if K < 1:
        raise ValueError("K must be >= 1")
    if precision_bits < 64:
        raise ValueError("precision_bits must be >= 64")
    P, q1 = _q1_fixed(p, precision_bits)
    qf = _forward(P, q1, K, precision_bits)
    q = np.array([0.0] + [math.ldexp(x, -precision_bits) if x else 0.0
                          for x in qf[1:]])
    # tails from the exact integers, then converted
    one = 1 << precision_bits
    tails = [0] * (K + 2)
    t = one
    for k in range(1, K + 2):
        tails[k] = t
        if k <= K:
            t -= qf[k]
    Q = np.array([math.nan] + [math.ldexp(x, -precision_bits) for x in tails[1:]])
    if not (np.diff(Q[1:]) < 0).all() or Q[K + 1] <= 0:
        raise PrecisionFailure("Q not strictly decreasing and positive")
    cumq = np.concatenate([[0.0], np.cumsum(q[1:])])
    return QTable(float(p), int(K), int(precision_bits), tuple(qf), q, Q, cumq)


@lru_cache(maxsize=16)
def q_table(p: float, K: int, precision_bits: int = DEFAULT_PRECISION) -> QTable:
    """Cached :func:`build_q_table` that doubles the precision on failure."""
    bits = precision_bits
    while True:
        try:
            return build_q_table(p, K, bits)
        except PrecisionFailure:
            if bits >= 8192:
                raise
            bits *= 2


def other_root(table: QTable, k: int) -> float:
    """Larger root of the k-th quadratic; exceeds 1 - S_{k-1}, and 1 when p >= 1/3."""
    p = table.p
    S = table.cumq[k - 1]
    a = (1 - p) / 2
    b = (1 - p) * S - 1
    x = table.q[k]
    return -b / a - x


def perturbed_sequence(p: float, K: int, shift: float,
                       precision_bits: int = DEFAULT_PRECISION) -> np.ndarray:
    """Forward recursion started from ``q(1) + shift``.

    The result is cut where the quadratic has no real root, so it may be
    shorter than ``K + 1``.
    """
    P, q1 = _q1_fixed(p, precision_bits)
    q1 += _fixed(Fraction(shift), precision_bits)
    qf = _forward(P, q1, K, precision_bits, strict=False)
    return np.array([0.0] + [math.ldexp(x, -precision_bits) for x in qf[1:]])


def regularity_ratio(table: QTable) -> np.ndarray:
    """``k q(k) / Q(k)`` for k = 1 .. K (index 0 is nan)."""
    k = np.arange(table.K + 1)
    with np.errstate(invalid="ignore"):
        return np.where(k > 0, k * table.q / table.Q[:table.K + 1], np.nan)


def decay_slope(table: QTable, lo: int, hi: int) -> float:
    """Least-squares slope of log q(k) against log k on [lo, hi]."""
    k = np.arange(lo, hi + 1)
    return float(np.polyfit(np.log(k), np.log(table.q[lo:hi + 1]), 1)[0])


# -- kernels of the decreasing chain ---------------------------------------

def theta(table: QTable, m: int) -> float:
    """Parameter of the geometric waiting time at level m."""
    if not 1 <= m <= table.K - 1:
        raise ValueError(f"m must lie in [1, {table.K - 1}]")
    if m == 1:
        return 0.5 / table.q[1]
    p = table.p
    return p + (1 - p) * (table.Q[m] + table.Q[m + 1]) / 2


def _pi_factor(table: QTable, m: int) -> float:
    p = table.p
    return 1.0 / (1.0 + (1 - p) / p * (table.Q[m] - table.q[m] / 2))


def pi_transition(table: QTable, m: int, m_next: int) -> float:
    if m == 1:
        if m_next != 0:
            raise ValueError("from 1 the only transition is to 0")
        return 1.0
    if not 2 <= m <= table.K or not 1 <= m_next < m:
        raise ValueError("need 2 <= m <= K and 1 <= m_next < m")
    q = table.q
    return _pi_factor(table, m) * m_next / m * q[m_next] * q[m - m_next] / q[m]


def pi_row(table: QTable, m: int) -> np.ndarray:
    """``row[j] = pi(m; j)`` for j = 0 .. m-1."""
    if m == 1:
        return np.array([1.0])
    if not 2 <= m <= table.K:
        raise ValueError(f"m must lie in [1, {table.K}]")
    q = table.q
    j = np.arange(1, m)
    row = np.empty(m)
    row[0] = 0.0
    row[1:] = _pi_factor(table, m) * j / m * q[1:m] * q[m - 1:0:-1] / q[m]
    return row


# -- size law -------------------------------------------------------------

def size_law_r(n: int) -> float:
    """``P(|T| = n) = 2^{-(2n-1)} Catalan(n-1)`` for the critical BGW tree."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = n - 1
    log_cat = math.lgamma(2 * m + 1) - math.lgamma(m + 1) - math.lgamma(m + 2)
    return math.exp(log_cat - (2 * n - 1) * math.log(2))


# -- log-gamma and the exponent equation ----------------------------------

def log_gamma(x: float) -> tuple[float, int]:
    """``(log|Gamma(x)|, sign Gamma(x))``; reflection below 1/2."""
    if x <= 0 and float(x).is_integer():
        raise ValueError(f"Gamma has a pole at {x}")
    if x >= 0.5:
        return math.lgamma(x), 1
    # Gamma(x) Gamma(1-x) = pi / sin(pi x)
    s = math.sin(math.pi * x)
    val = math.log(math.pi) - math.log(abs(s)) - math.lgamma(1.0 - x)
    return val, (1 if s > 0 else -1)


def gamma_form(alpha: float) -> float:
    """Left-hand side of the exponent equation,
    ``Gamma(1/2 - s) / (4^s sqrt(pi) Gamma(1 - s))`` with ``s = 1/(2 alpha)``."""
    s = 0.5 / alpha
    la, sa = log_gamma(0.5 - s)
    lb, sb = log_gamma(1.0 - s)
    return sa * sb * math.exp(la - lb - s * math.log(4.0) - 0.5 * math.log(math.pi))


def _log_product_partial(s: float, N: int) -> float:
    i = np.arange(2, N + 1, dtype=float)
    # first factor (1-s)^2 / (1 - 2s) is negative; handled by the caller
    return float(np.sum(2 * np.log1p(-s / i) - np.log1p(-2 * s / i)))


def _log_product_tail(s: float, N: int, terms: int = 60) -> float:
    # log((i-s)^2 / (i(i-2s))) = sum_{j>=2} (2^j - 2) s^j / (j i^j)
    total = 0.0
    for j in range(2, terms):
        c = (2.0 ** j - 2.0) * s ** j / j
        t = c * special.zeta(j, N + 1)
        total += t
        if abs(t) < 1e-18 * max(1.0, abs(total)):
            break
    return total


def product_form(alpha: float, tol: float = 1e-12, N0: int = 10_000,
                 return_terms: bool = False):
    """``prod_{i>=1} (i - s)^2 / (i (i - 2s))`` with ``s = 1/(2 alpha)``.

    The partial product over ``i <= N`` is completed by the exact tail
    series in Hurwitz zeta values; N doubles until two successive
    estimates differ by less than ``tol / 10`` (relative).
    """
    s = 0.5 / alpha
    first = (1 - s) ** 2 / (1 - 2 * s)
    N = N0
    prev = None
    while True:
        lp = _log_product_partial(s, N) + _log_product_tail(s, N)
        val = first * math.exp(lp)
        if prev is not None and abs(val - prev) <= tol / 10 * abs(val):
            return (val, N) if return_terms else val
        prev = val
        N *= 2
        if N > 10 ** 7:
            return (val, N) if return_terms else val


def integral_form(alpha: float) -> float:
    """``-2^{2g-1} + g int_0^{1/2} x^{1-g} (1-x)^{-g-1} dx`` with
    ``g = 1/(2 alpha) + 1``; the exponent equation reads
    ``integral_form(alpha) = (1-p)/p``."""
    g = 0.5 / alpha + 1.0
    val, _ = integrate.quad(lambda x: (1.0 - x) ** (-g - 1.0), 0.0, 0.5,
                            weight="alg", wvar=(1.0 - g, 0.0),
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return -(2.0 ** (2 * g - 1)) + g * val


@dataclass(frozen=True)
class AlphaSolution:
    p: float
    alpha: float
    method: str
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {"p": self.p, "alpha": self.alpha, "method": self.method,
                "residual": self.residual, "iterations": self.iterations}


METHODS = ("gamma", "product", "integral")


def _residual(method: str, p: float, tol: float):
    target = p / (p - 1)
    if method == "gamma":
        return lambda a: gamma_form(a) - target
    if method == "product":
        return lambda a: product_form(a, tol=min(tol, 1e-12)) - target
    if method == "integral":
        rhs = (1 - p) / p
        return lambda a: integral_form(a) - rhs
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def solve_alpha(p: float, method: str = "gamma", tol: float = 1e-12) -> AlphaSolution:
    """Root of the exponent equation in (1/2, 1) by Brent's method.

    The residual is monotone in alpha, so a bracket ``[1/2 + d, 1 - d]``
    with a sign change contains the unique root; ``d`` shrinks by a factor
    ten until the bracket straddles it.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    method = {"gamma-form": "gamma", "product-form": "product",
              "integral-form": "integral"}.get(method, method)
    f = _residual(method, p, tol)
    d = 1e-2
    while True:
        lo, hi = 0.5 + d, 1.0 - d
        flo, fhi = f(lo), f(hi)
        if flo * fhi < 0:
            break
        d /= 10
        if d < 1e-15:
            raise ArithmeticError(f"no sign change in bracket for p={p}")
    root, info = optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                 full_output=True, maxiter=500)
    return AlphaSolution(float(p), float(root), method, float(f(root)), info.iterations)


@lru_cache(maxsize=256)
def alpha_of(p: float) -> float:
    return solve_alpha(p, "gamma", 1e-14).alpha
