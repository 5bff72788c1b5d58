"""Fixed-point solver for the free Monge-Ampere equation.

Given a small self-adjoint, cyclically symmetric perturbation W of the
quadratic potential, the solver iterates

    ghat_{k} = S Pi F(ghat_{k-1}),        ghat_0 = W,

where S is cyclic symmetrization, Pi kills constants, and

    F(g) = (1 (x) tau + tau (x) 1) Tr log(1 + J D Sigma g)
           - W(X + D Sigma g) - (1/2) D Sigma g # D Sigma g.

The log term is evaluated through the alternating series in powers of
the Hessian J D Sigma g, with the geometric tail bound

    || pair-trace Tr (J D Sigma g)^m ||_A  <=  2 (2 A^-2)^m ||g||_A^m

driving a dynamic cutoff certified against ``tol_series``.  At the fixed
point, g = Sigma ghat, f = D g, and Y = X + f transports the semicircle
law to the free Gibbs law of (1/2) sum X_j^2 + W.

Contractivity is certified up front: with A > 4, 0 < rho <= 1,
||W||_A < rho/12 and sum_j pnorm(fdq_j W, A + rho) < 1/8, the iteration
map is a contraction (factor <= 7/8) on the ball of radius rho/4 and
every iterate stays inside it.  Runs outside these conditions are
allowed with an explicit override and come back flagged uncertified,
with the empirical contraction ratio reported instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .calculus import (
    cyclic_gradient,
    cyclic_symmetrize,
    fdq,
    jacobian,
    project0,
    sigma_inv,
)
from .ncalg import NCPoly, PolyVec, TruncationLog
from .semitrace import tau_pair, tau_poly, trace_matrix


class DivergenceError(ArithmeticError):
    """The series argument is outside its certified convergence region."""


class ConvergenceError(RuntimeError):
    """The fixed-point iteration failed; carries the iterate history."""

    def __init__(self, message, deltas=None, norms=None):
        super().__init__(message)
        self.deltas = list(deltas or [])
        self.norms = list(norms or [])


class ConditionCheckError(ValueError):
    """Contractivity conditions failed and no override was requested."""

    def __init__(self, report):
        super().__init__(
            "contractivity conditions violated: " + "; ".join(report.violations())
        )
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    """Radii, truncation degree and tolerances for one solve.

    A is the outer norm radius, Aprime < A the certificate radius, rho
    the ball parameter of the contractivity conditions.  tol_fix stops
    the fixed-point iteration on the A-norm of successive differences;
    tol_series bounds the certified tail of the log/Q series.
    """

    A: float
    Aprime: float
    rho: float = 1.0
    dmax: int = 8
    tol_fix: float = 1e-13
    max_iter: int = 200
    tol_series: float = 1e-12

    def __post_init__(self):
        if not (self.A > self.Aprime > 4):
            raise ValueError("need A > Aprime > 4")
        if not (0 < self.rho <= 1):
            raise ValueError("need 0 < rho <= 1")
        if self.dmax < 1:
            raise ValueError("dmax must be >= 1")


@dataclass
class ConditionReport:
    """Outcome of the three contractivity conditions."""

    norm_W_A: float
    bound_rho12: float
    sum_pnorm_dW: float
    radius_ok: bool
    norm_ok: bool
    gradient_ok: bool

    @property
    def passed(self):
        return self.radius_ok and self.norm_ok and self.gradient_ok

    def violations(self):
        out = []
        if not self.radius_ok:
            out.append("A <= 4")
        if not self.norm_ok:
            out.append(
                f"norm_W_A >= rho/12 ({self.norm_W_A!r} >= {self.bound_rho12!r})"
            )
        if not self.gradient_ok:
            out.append(f"sum_pnorm_dW >= 1/8 ({self.sum_pnorm_dW!r} >= 0.125)")
        return out

    def as_dict(self):
        return {
            "norm_W_A": self.norm_W_A,
            "bound_rho12": self.bound_rho12,
            "sum_pnorm_dW": self.sum_pnorm_dW,
            "radius_ok": self.radius_ok,
            "norm_ok": self.norm_ok,
            "gradient_ok": self.gradient_ok,
            "passed": self.passed,
            "violations": self.violations(),
        }


@dataclass
class QSeriesResult:
    poly: NCPoly
    tail_bound: float
    kmax: int
    ratio: float


@dataclass
class InverseResult:
    H: PolyVec
    residual: float
    iterations: int
    deltas: list


@dataclass
class TransportResult:
    """Converged transport data plus its certificates.

    Y = X + f with f = D g and g = Sigma ghat.  hessian_pnorm is the
    projective-norm bound on J D g at the certificate radius Aprime;
    strictly below 1 it certifies that 1 + J D g is strictly positive,
    i.e. that the transport is monotone.  truncation_loss_total is the
    dropped coefficient mass, weighted at radius A, accumulated by every
    product in the run.
    """

    g: NCPoly
    ghat: NCPoly
    f: PolyVec
    Y: PolyVec
    H: PolyVec | None
    iterations: int
    final_delta: float
    contraction_ratio_estimate: float
    hessian_pnorm: float
    truncation_loss_total: float
    conditions: ConditionReport
    certified_conditions: bool
    monotone_certified: bool
    uncertified: bool
    series_certified: bool = True
    iterate_norms: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    inverse_residual: float | None = None
    loss: TruncationLog | None = None


# ---------------------------------------------------------------------------
# contractivity conditions
# ---------------------------------------------------------------------------


def _require_admissible(W, cfg):
    """W must be self-adjoint, cyclically symmetric, with zero constant."""
    if W.is_float:
        atol = 1e-9 * (1.0 + float(W.norm_a(1.0)))
        if abs(float(W.constant_term)) > atol:
            raise ValueError("W must have zero constant term")
        if not W.adjoint().isclose(W, atol):
            raise ValueError("W must be self-adjoint")
        if not cyclic_symmetrize(project0(W)).isclose(project0(W), atol):
            raise ValueError("W must be cyclically symmetric")
    else:
        if W.constant_term != 0:
            raise ValueError("W must have zero constant term")
        if not W.adjoint().equals(W):
            raise ValueError("W must be self-adjoint")
        if not cyclic_symmetrize(project0(W)).equals(project0(W)):
            raise ValueError("W must be cyclically symmetric")


def check_conditions(W, cfg):
    """Evaluate the three smallness conditions with norm upper bounds."""
    _require_admissible(W, cfg)
    norm_W = float(W.norm_a(cfg.A))
    bound = cfg.rho / 12.0
    grad_radius = cfg.A + cfg.rho
    sum_pnorm = sum(
        float(fdq(W, j).pnorm(grad_radius)) for j in range(1, W.sig.n + 1)
    )
    return ConditionReport(
        norm_W_A=norm_W,
        bound_rho12=bound,
        sum_pnorm_dW=sum_pnorm,
        radius_ok=cfg.A > 4,
        norm_ok=norm_W < bound,
        gradient_ok=sum_pnorm < 0.125,
    )


# ---------------------------------------------------------------------------
# the log / Q series
# ---------------------------------------------------------------------------


def _series_ratio(g, cfg):
    return 2.0 * float(g.norm_a(cfg.A)) / (cfg.A * cfg.A)


def series_tail_bound(r, k):
    # sum_{m>k} 2 r^m / m  <=  2 r^(k+1) / ((k+1)(1-r))
    return 2.0 * r ** (k + 1) / ((k + 1) * (1.0 - r))


def series_cutoff(r, tol_series, cap=400):
    if not r < 1.0:
        raise DivergenceError(f"series ratio 2||g||_A/A^2 = {r} >= 1")
    k = 1
    while series_tail_bound(r, k) >= tol_series:
        k += 1
        if k > cap:
            raise DivergenceError(
                f"certified tail cannot reach {tol_series} (ratio {r})"
            )
    return k


def _pair_trace_powers(J, kmax, loss=None):
    """pair-trace of Tr(J^k) for k = 1..kmax, sharing the power chain."""
    out = []
    power = J
    for k in range(1, kmax + 1):
        if k > 1:
            power = power.matmul(J, loss)
        out.append(tau_pair(trace_matrix(power)))
    return out


def _pair_trace_powers_empirical(J, A, tol_series, loss=None, cap=200):
    """Uncertified variant: extend the power chain until the pair-traced
    terms' A-norms have decayed below tolerance (twice in a row).

    Used only for override runs whose iterates leave the certified
    region; a sustained growth of the terms still raises.
    """
    out = []
    power = J
    small_streak = 0
    grow_streak = 0
    prev = float("inf")
    scale = 1.0
    for k in range(1, cap + 1):
        if k > 1:
            power = power.matmul(J, loss)
        term = tau_pair(trace_matrix(power))
        out.append(term)
        nk = float(term.norm_a(A)) / k
        scale = max(scale, nk)
        if nk < tol_series * scale:
            small_streak += 1
            if small_streak >= 2:
                return out
        else:
            small_streak = 0
        if nk > prev * 1.25:
            grow_streak += 1
            if grow_streak >= 5:
                raise DivergenceError(
                    f"series terms growing at k={k} (norm {nk}); "
                    "iterate outside any usable radius"
                )
        else:
            grow_streak = 0
        prev = nk
    raise DivergenceError(f"series terms did not decay within {cap} powers")


def q_m(g, m, loss=None):
    """pair-trace of Tr((J D Sigma g)^m), the m-th series building block."""
    if m < 1:
        raise ValueError("need m >= 1")
    f = cyclic_gradient(sigma_inv(g))
    J = jacobian(f)
    return tau_pair(trace_matrix(J.power(m, loss)))


def q_series(g, cfg, loss=None, kmax=None):
    """Alternating remainder series Q = sum_{k>=2} (-1)^k q_k / k.

    The cutoff is the smallest k whose certified geometric tail drops
    below ``cfg.tol_series``; pass ``kmax`` to pin it instead.  Requires
    2 ||g||_A / A^2 < 1, otherwise the tail estimate is vacuous.
    """
    r = _series_ratio(g, cfg)
    k_used = series_cutoff(r, cfg.tol_series) if kmax is None else kmax
    f = cyclic_gradient(sigma_inv(g))
    J = jacobian(f)
    terms = _pair_trace_powers(J, k_used, loss)
    total = NCPoly.zero(g.sig, g.is_float)
    for k in range(2, k_used + 1):
        coeff = _scalar(g, (-1) ** k, k)
        total = total.add(terms[k - 1].scale(coeff))
    return QSeriesResult(
        poly=total, tail_bound=series_tail_bound(r, k_used), kmax=k_used, ratio=r
    )


def _scalar(g, num, den):
    if g.is_float:
        return num / den
    return Fraction(num, den)


def _big_f_impl(g, W, cfg, loss=None, allow_uncertified_series=False):
    """big_f plus a flag telling whether the certified cutoff was lost."""
    sig = g.sig
    r = _series_ratio(g, cfg)
    f = cyclic_gradient(sigma_inv(g))
    J = jacobian(f)
    fell_back = False
    try:
        k_used = series_cutoff(r, cfg.tol_series)
        terms = _pair_trace_powers(J, k_used, loss)
    except DivergenceError:
        if not allow_uncertified_series:
            raise
        terms = _pair_trace_powers_empirical(J, cfg.A, cfg.tol_series, loss)
        k_used = len(terms)
        fell_back = True
    log_pair = NCPoly.zero(sig, g.is_float)
    for k in range(1, k_used + 1):
        log_pair = log_pair.add(terms[k - 1].scale(_scalar(g, (-1) ** (k + 1), k)))
    X = PolyVec.identity(sig, g.is_float)
    w_sub = W.substitute(X.add(f), loss)
    quad = f.dot(f, loss).scale(_scalar(g, 1, 2))
    return log_pair.sub(w_sub).sub(quad), fell_back


def big_f(g, W, cfg, loss=None):
    """One application of the fixed-point map's right-hand side F.

    Evaluated in the series form: the pair-traced log of the Hessian
    enters as q_1 - Q with the certified dynamic cutoff, then the
    substituted potential and the quadratic contraction are subtracted.
    F(0) = -W exactly.  Raises :class:`DivergenceError` outside the
    certified series region; the override path through
    :func:`solve_transport` is the only place that relaxes this.
    """
    poly, _ = _big_f_impl(g, W, cfg, loss)
    return poly


# ---------------------------------------------------------------------------
# the transport solve
# ---------------------------------------------------------------------------


def ratio_estimate(deltas, tol_fix):
    """Asymptotic contraction ratio from the convergent tail.

    Early iterates may overshoot (the start is W while the fixed point
    sits near -W), so the estimate is the worst of the last few
    above-floor ratios rather than the global maximum.
    """
    floor = 100.0 * tol_fix
    ratios = [d1 / d0 for d0, d1 in zip(deltas, deltas[1:]) if d0 > floor]
    if not ratios:
        return 0.0
    return max(ratios[-5:])


def solve_transport(
    W, cfg, override_conditions=False, compute_inverse=False, loss=None
):
    """Iterate ghat <- S Pi F(ghat) from ghat_0 = W to the fixed point.

    Returns a :class:`TransportResult`; raises
    :class:`ConditionCheckError` when the contractivity conditions fail
    without an override, and :class:`ConvergenceError` when the
    iteration stalls or its empirical ratio reaches 1.
    """
    if loss is None:
        loss = TruncationLog()
    report = check_conditions(W, cfg)
    if not report.passed and not override_conditions:
        raise ConditionCheckError(report)

    ghat = project0(W)
    norms = [float(ghat.norm_a(cfg.A))]
    deltas = []
    iterations = 0
    converged = False
    series_certified = True
    while iterations < cfg.max_iter:
        iterations += 1
        rhs, fell_back = _big_f_impl(
            ghat, W, cfg, loss, allow_uncertified_series=override_conditions
        )
        series_certified = series_certified and not fell_back
        nxt = cyclic_symmetrize(project0(rhs))
        delta = float(nxt.sub(ghat).norm_a(cfg.A))
        deltas.append(delta)
        norms.append(float(nxt.norm_a(cfg.A)))
        ghat = nxt
        if delta < cfg.tol_fix:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"no convergence in {cfg.max_iter} iterations "
            f"(last delta {deltas[-1] if deltas else float('nan')})",
            deltas=deltas,
            norms=norms,
        )
    ratio = ratio_estimate(deltas, cfg.tol_fix)
    if ratio >= 1.0:
        raise ConvergenceError(
            f"empirical contraction ratio {ratio} >= 1", deltas=deltas, norms=norms
        )

    g = sigma_inv(ghat)
    f = cyclic_gradient(g)
    X = PolyVec.identity(W.sig, W.is_float)
    Y = X.add(f)
    hessian_pnorm = float(jacobian(f).pnorm(cfg.Aprime))

    inverse = None
    inverse_residual = None
    if compute_inverse:
        inv = invert_transport(f, cfg, loss)
        inverse = inv.H
        inverse_residual = inv.residual

    return TransportResult(
        g=g,
        ghat=ghat,
        f=f,
        Y=Y,
        H=inverse,
        iterations=iterations,
        final_delta=deltas[-1],
        contraction_ratio_estimate=ratio,
        hessian_pnorm=hessian_pnorm,
        truncation_loss_total=loss.norm(cfg.A),
        conditions=report,
        certified_conditions=report.passed,
        monotone_certified=hessian_pnorm < 1.0,
        uncertified=not (report.passed and series_certified),
        series_certified=series_certified,
        iterate_norms=norms,
        deltas=deltas,
        inverse_residual=inverse_residual,
        loss=loss,
    )


def invert_transport(f, cfg, loss=None):
    """Inverse power series H with H(X + f) = X up to truncation.

    Iterates H <- id - f o H from H = id; the composition residual of
    the limit against Y = X + f is evaluated at the certificate radius
    and reported.
    """
    if loss is None:
        loss = TruncationLog()
    sig = f.sig
    X = PolyVec.identity(sig, f.is_float)
    Y = X.add(f)
    G = X
    deltas = []
    converged = False
    for _ in range(cfg.max_iter):
        nxt = X.sub(f.substitute(G, loss))
        delta = float(nxt.sub(G).norm_a(cfg.Aprime))
        deltas.append(delta)
        G = nxt
        if delta < cfg.tol_fix:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"inverse iteration stalled (last delta {deltas[-1]})", deltas=deltas
        )
    ratio = ratio_estimate(deltas, cfg.tol_fix)
    if ratio >= 1.0:
        raise ConvergenceError(
            f"inverse iteration ratio {ratio} >= 1", deltas=deltas
        )
    residual = float(G.substitute(Y, loss).sub(X).norm_a(cfg.Aprime))
    return InverseResult(H=G, residual=residual, iterations=len(deltas), deltas=deltas)


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepPoint:
    beta: float
    result: TransportResult
    moments: dict


def default_sweep_monomials(n):
    if n == 1:
        return [(1,) * 2, (1,) * 4, (1,) * 6]
    return [(1, 1), (2, 2), (1, 1, 1, 1), (1, 2, 1, 2), (1, 1, 2, 2)]


def beta_sweep(W_unit, betas, cfg, monomials=None, override_conditions=False):
    """Solve W = beta * W_unit for each beta; collect transported moments.

    The moment curves tau(w(Y_beta)) for the registered test words are
    the data behind the analyticity smoke tests.
    """
    Wf = W_unit.as_float()
    if monomials is None:
        monomials = default_sweep_monomials(Wf.sig.n)
    points = []
    for beta in betas:
        W = Wf.scale(float(beta))
        result = solve_transport(
            W, cfg, override_conditions=override_conditions
        )
        moments = {}
        for w in monomials:
            p = NCPoly.monomial(Wf.sig, w, 1.0, float_backend=True)
            moments[w] = float(tau_poly(p.substitute(result.Y, result.loss)))
        points.append(SweepPoint(beta=float(beta), result=result, moments=moments))
    return points
