"""Independent one-variable engine: scalar series, quadrature, oracle.

At one variable the transport equation collapses to a scalar
power-series fixed point,

    ghat(x) = Pi[ -W(x + f(x)) - f(x)^2 / 2
                  + 2 * integral log(1 + (f(x) - f(y)) / (x - y)) deta(y) ],

with f = (Sigma ghat)' and deta the semicircle distribution on [-2, 2].
The log term is expanded as a power series in the difference quotient
(a bivariate polynomial in the commuting pair (x, y)) and integrated
termwise by a Gauss-type quadrature that is exact for polynomials
against the semicircle weight, so no numerical differentiation or
principal values are ever needed.  Pi removes the constant term, which
pins the free additive constant so both sides vanish at x = 0.

The series cutoffs and stopping rules are shared with the n-variable
solver: at n = 1 the two engines implement the same truncated map and
their fixed points agree coefficientwise to solver precision.

``moment_recursion`` is a fully independent oracle (it never touches the
transport machinery): it solves the one-variable loop equation

    m_{k+1} + beta * sum_i i w_i m_{k+i-1} = sum_{l<k} m_l m_{k-1-l}

as a power series in beta for the Gibbs moments of
V = x^2/2 + beta * sum_i w_i x^i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .solver import (
    ConvergenceError,
    ratio_estimate,
    series_cutoff,
)


class RatioTestError(ArithmeticError):
    """The beta series shows no decay at the truncation order."""


class OneVarSeries:
    """Dense univariate polynomial with a radius tag.

    ``coeffs[k]`` is the coefficient of x^k.  Series playing the role of
    ghat / g / W carry a zero constant term; derived objects like
    f = g' may have one.
    """

    __slots__ = ("coeffs", "radius")

    def __init__(self, coeffs, radius=None):
        c = np.asarray(coeffs, dtype=float).copy()
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-d array")
        self.coeffs = c
        self.radius = radius

    @classmethod
    def zero(cls, degree, radius=None):
        return cls(np.zeros(degree + 1), radius)

    @classmethod
    def monomial(cls, degree, coeff=1.0, radius=None):
        c = np.zeros(degree + 1)
        c[degree] = coeff
        return cls(c, radius)

    @property
    def degree(self):
        nz = np.nonzero(self.coeffs)[0]
        return int(nz[-1]) if nz.size else 0

    def norm_a(self, radius=None):
        r = self.radius if radius is None else radius
        return float(np.sum(np.abs(self.coeffs) * r ** np.arange(self.coeffs.size)))

    def derivative(self):
        k = np.arange(1, self.coeffs.size)
        return OneVarSeries(self.coeffs[1:] * k if self.coeffs.size > 1 else [0.0],
                            self.radius)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def __repr__(self):
        return f"OneVarSeries(deg<={self.coeffs.size - 1}, radius={self.radius})"


# ---------------------------------------------------------------------------
# semicircle quadrature
# ---------------------------------------------------------------------------


class QuadratureGrid:
    """Gauss nodes/weights for the semicircle weight on [-2, 2].

    The weight (1/2pi) sqrt(4 - x^2) is the Chebyshev second-kind weight
    rescaled, so nodes and weights are closed-form:
    x_i = 2 cos(i pi / (m+1)), w_i = (2 / (m+1)) sin^2(i pi / (m+1)).
    Exactly integrates polynomials of degree <= 2m - 1.
    """

    __slots__ = ("nodes", "weights", "count")

    def __init__(self, count):
        if count < 1:
            raise ValueError("need at least one node")
        i = np.arange(1, count + 1)
        theta = i * np.pi / (count + 1)
        self.nodes = 2.0 * np.cos(theta)
        self.weights = (2.0 / (count + 1)) * np.sin(theta) ** 2
        self.count = count

    @property
    def design_degree(self):
        return 2 * self.count - 1

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def integrate_function(self, fn):
        return self.integrate(fn(self.nodes))

    def moments_upto(self, degree):
        """Semicircle moments m_0..m_degree (exact up to design degree)."""
        powers = self.nodes[None, :] ** np.arange(degree + 1)[:, None]
        return powers @ self.weights


def catalan_float(k):
    out = 1.0
    for i in range(k):
        out = out * (2 * k - i) / (i + 1)
    return out / (k + 1)


# ---------------------------------------------------------------------------
# truncated polynomial helpers (plain coefficient arrays)
# ---------------------------------------------------------------------------


def _trim(c, dmax):
    out = np.zeros(dmax + 1)
    m = min(c.size, dmax + 1)
    out[:m] = c[:m]
    return out


def _mul_trunc(a, b, dmax):
    full = np.convolve(a, b)
    return _trim(full, dmax)


def _compose_shift(w, f, dmax):
    """w(x + f(x)) truncated at dmax; w, f are coefficient arrays."""
    base = np.zeros(dmax + 1)
    base[0] = 1.0
    shift = _trim(f.copy(), dmax)
    if shift.size > 1:
        shift[1] += 1.0
    else:
        shift = np.array([shift[0], 1.0])
        shift = _trim(shift, dmax)
    out = np.zeros(dmax + 1)
    power = base
    for k, wk in enumerate(w):
        if k > 0:
            power = _mul_trunc(power, shift, dmax)
        if wk:
            out += wk * power
    return out


def _conv2_trunc(a, b, dmax):
    """2-d coefficient convolution with both axes capped at dmax."""
    la0, la1 = a.shape
    lb0, lb1 = b.shape
    n0 = min(la0 + lb0 - 1, dmax + 1)
    n1 = min(la1 + lb1 - 1, dmax + 1)
    out = np.zeros((n0, n1))
    for i in range(la0):
        row = a[i]
        if not row.any():
            continue
        top = min(lb0, n0 - i)
        if top <= 0:
            break
        for j in range(la1):
            v = row[j]
            if v == 0.0:
                continue
            wide = min(lb1, n1 - j)
            if wide <= 0:
                continue
            out[i:i + top, j:j + wide] += v * b[:top, :wide]
    return out


def _difference_quotient(f, dmax):
    """Bivariate coefficients of (f(x) - f(y)) / (x - y).

    For a monomial x^k the quotient is sum_{a+b=k-1} x^a y^b.
    """
    J = np.zeros((dmax + 1, dmax + 1))
    for k in range(1, f.size):
        ck = f[k]
        if ck == 0.0:
            continue
        for a in range(k):
            b = k - 1 - a
            if a <= dmax and b <= dmax:
                J[a, b] += ck
    return J


# ---------------------------------------------------------------------------
# the one-variable solve
# ---------------------------------------------------------------------------


@dataclass
class OneVarTransport:
    ghat: OneVarSeries
    g: OneVarSeries
    f: OneVarSeries
    F: OneVarSeries
    iterations: int
    final_delta: float
    contraction_ratio_estimate: float
    deltas: list = field(default_factory=list)


def _rhs(ghat, w, cfg, ymom):
    """One application of the fixed-point right-hand side (with Pi)."""
    dmax = cfg.dmax
    # f = (Sigma ghat)' : coefficient shift, exactly as the cyclic
    # gradient of Sigma ghat collapses at one variable
    f = ghat[1:].copy() if ghat.size > 1 else np.zeros(1)
    norm_ghat = float(np.sum(np.abs(ghat) * cfg.A ** np.arange(ghat.size)))
    r = 2.0 * norm_ghat / (cfg.A * cfg.A)
    kmax = series_cutoff(r, cfg.tol_series)

    J = _difference_quotient(f, dmax)
    log_pair = np.zeros(dmax + 1)
    power = J
    for k in range(1, kmax + 1):
        if k > 1:
            power = _conv2_trunc(power, J, dmax)
        left = power[:, : ymom.size] @ ymom[: power.shape[1]]
        right = power.T[:, : ymom.size] @ ymom[: power.shape[0]]
        pair = _trim(left, dmax) + _trim(right, dmax)
        log_pair += ((-1.0) ** (k + 1) / k) * pair

    w_sub = _compose_shift(w, f, dmax)
    quad = 0.5 * _mul_trunc(f, f, dmax)
    out = log_pair - w_sub - quad
    out[0] = 0.0  # Pi: fixes the additive constant (both sides vanish at 0)
    return out


def solve_1d(W, cfg):
    """Solve the scalar fixed point for ghat; return all derived series.

    ``W`` is a :class:`OneVarSeries` (zero constant term).  Stopping and
    contraction diagnostics mirror the n-variable solver.
    """
    dmax = cfg.dmax
    w = _trim(np.asarray(W.coeffs, dtype=float), dmax)
    grid = QuadratureGrid(2 * dmax)
    ymom = grid.moments_upto(dmax)

    ghat = w.copy()
    ghat[0] = 0.0
    deltas = []
    converged = False
    iterations = 0
    radii = cfg.A ** np.arange(dmax + 1)
    while iterations < cfg.max_iter:
        iterations += 1
        nxt = _rhs(ghat, w, cfg, ymom)
        delta = float(np.sum(np.abs(nxt - ghat) * radii))
        deltas.append(delta)
        ghat = nxt
        if delta < cfg.tol_fix:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"one-variable iteration stalled (last delta {deltas[-1]})",
            deltas=deltas,
        )
    ratio = ratio_estimate(deltas, cfg.tol_fix)
    if ratio >= 1.0:
        raise ConvergenceError(
            f"one-variable contraction ratio {ratio} >= 1", deltas=deltas
        )

    k = np.arange(dmax + 1)
    g = ghat.copy()
    g[1:] = g[1:] / k[1:]
    f = np.zeros(dmax + 1)
    f[: dmax] = ghat[1:]
    F = f.copy()
    F[1] += 1.0
    A = cfg.A
    return OneVarTransport(
        ghat=OneVarSeries(ghat, A),
        g=OneVarSeries(g, A),
        f=OneVarSeries(f, A),
        F=OneVarSeries(F, A),
        iterations=iterations,
        final_delta=deltas[-1],
        contraction_ratio_estimate=ratio,
        deltas=deltas,
    )


# ---------------------------------------------------------------------------
# the independent moment oracle
# ---------------------------------------------------------------------------


def moment_recursion_table(w_unit, kmax, order=8):
    """Beta-series table m[k][p] for the Gibbs moments of
    V = x^2/2 + beta * w_unit(x).

    Solved order by order from the loop equation; m_0 = 1, odd moments
    vanish.  Never touches the transport machinery.
    """
    w = np.asarray(w_unit, dtype=float)
    dw = np.array([i * w[i] for i in range(1, w.size)])  # coefficients of W'
    shift = max(dw.size - 1, 0)  # index reach of the potential term
    kmax_internal = kmax + max(shift - 1, 0) * order
    table = np.zeros((kmax_internal + 1, order + 1))
    table[0, 0] = 1.0
    # order 0: Catalan moments
    for k in range(2, kmax_internal + 1, 2):
        table[k, 0] = sum(
            table[l, 0] * table[k - 2 - l, 0] for l in range(0, k - 1, 2)
        )
    for p in range(1, order + 1):
        top = kmax_internal - max(shift - 1, 0) * p
        for k in range(1, top, 2):  # computes even moment m_{k+1}
            conv = 0.0
            for l in range(0, k):
                for a in range(0, p + 1):
                    conv += table[l, a] * table[k - 1 - l, p - a]
            drift = sum(
                (i + 1) * w[i + 1] * table[k + i, p - 1]
                for i in range(dw.size)
                if k + i <= kmax_internal
            )
            table[k + 1, p] = conv - drift
    return table[: kmax + 1]


def moment_recursion(beta, w_unit, kmax, order=8):
    """Evaluate the oracle moments m_0..m_kmax at a concrete beta.

    Raises :class:`RatioTestError` when the series terms stop decaying
    at the truncation order (beta outside the perturbative radius).
    """
    table = moment_recursion_table(w_unit, kmax, order)
    powers = float(beta) ** np.arange(order + 1)
    terms = table * powers[None, :]
    if beta != 0.0 and order >= 2:
        tail = np.abs(terms[:, order])
        prev = np.abs(terms[:, order - 1])
        bad = (prev > 0) & (tail >= prev)
        meaningful = np.abs(terms).max(axis=1) > 1e-300
        if np.any(bad & meaningful):
            raise RatioTestError(
                f"beta={beta} outside the perturbative radius at order {order}"
            )
    return terms.sum(axis=1)


# ---------------------------------------------------------------------------
# pushforward moments and monotonicity
# ---------------------------------------------------------------------------


def pushforward_moments(F, k, grid=None):
    """integral F(x)^k deta(x) by evaluation on an exact quadrature grid."""
    deg = F.degree * k
    if grid is None or grid.design_degree < deg:
        grid = QuadratureGrid(deg // 2 + 1)
    vals = F(grid.nodes) ** k
    return grid.integrate(vals)


def monotonicity_check(F, npoints=401):
    """True when F' > 0 on a dense grid of [-2, 2]."""
    d = F.derivative()
    xs = np.linspace(-2.0, 2.0, npoints)
    return bool(np.all(d(xs) > 0.0))


def oracle_comparison(betas, w_unit, kmax, cfg, order=8):
    """Rows (beta, k, moment_transport, moment_oracle, |diff|) for k <= kmax."""
    w = np.asarray(w_unit, dtype=float)
    rows = []
    for beta in betas:
        W = OneVarSeries(w * float(beta), cfg.A)
        transported = solve_1d(W, cfg)
        oracle = moment_recursion(float(beta), w, kmax, order)
        deg = transported.F.degree * kmax
        grid = QuadratureGrid(deg // 2 + 1)
        for k in range(1, kmax + 1):
            mt = pushforward_moments(transported.F, k, grid)
            mo = float(oracle[k])
            rows.append((float(beta), k, mt, mo, abs(mt - mo)))
    return rows
