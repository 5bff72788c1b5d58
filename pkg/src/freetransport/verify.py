"""Independent checks that Y = X + f carries the intended Gibbs law.

Three layers of evidence, none of which trusts the solver's own
arithmetic:

* Schwinger-Dyson residuals: the target law is characterized by
  tau(P dV) = tau (x) tau (Tr jacobian(P)) for polynomial test vectors
  P.  Realizing the law as "trace of polynomials in Y" turns the defect
  into a computable scalar per test vector.  The final trace pairings
  are evaluated on concatenated words directly (no truncation), so the
  only truncation entering the residual is the one already inside Y and
  the substitutions, which is exactly what the reported loss budget
  covers.

* The entropy shift (tau (x) tau) Tr log(1 + jacobian(D g)), the
  change-of-variables correction to free entropy, computed two
  independent ways (direct matrix powers vs the remainder-series
  recombination) with certified tails.

* An exact-rational identity suite for the operator calculus; every
  identity is checked to literal equality on randomized inputs, which
  makes it the engine's ground-truth regression layer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .calculus import (
    TensorMatrix,
    cyclic_derivative,
    cyclic_gradient,
    cyclic_symmetrize,
    fdq,
    fdq_adjoint,
    jacobian,
    jstar,
    number_op,
    project0,
    sigma_inv,
)
from .ncalg import AlgebraSignature, NCPoly, PolyVec, TruncationLog
from .semitrace import (
    tau,
    tau_pair,
    tau_poly,
    tau_product,
    tau_tau,
    trace_matrix,
)
from .solver import DivergenceError, q_series


# ---------------------------------------------------------------------------
# Schwinger-Dyson residuals
# ---------------------------------------------------------------------------


@dataclass
class SDReport:
    residuals: dict
    max_residual: float
    degree_cap: int
    truncation_loss: float

    def as_dict(self):
        return {
            "max_residual": self.max_residual,
            "degree_cap": self.degree_cap,
            "truncation_loss": self.truncation_loss,
            "residuals": {
                f"j={j} w={list(w)}": v for (j, w), v in sorted(self.residuals.items())
            },
        }


def _gradient_of_potential(W):
    """Cyclic gradient of V = (1/2) sum X_j^2 + W, one entry per letter."""
    sig = W.sig
    out = []
    for j in range(1, sig.n + 1):
        out.append(
            NCPoly.letter(sig, j, W.is_float).add(cyclic_derivative(W, j))
        )
    return PolyVec(out)


def sd_residual(Y, W, P, loss=None, cache=None):
    """|tau(P dV (at Y)) - tau (x) tau (Tr jacobian(P) at Y)|.

    P is a test vector; substitutions into Y truncate with loss, the
    final pairings do not.
    """
    dv = _gradient_of_potential(W)
    lhs = 0.0 if Y.is_float else Fraction(0)
    rhs = 0.0 if Y.is_float else Fraction(0)
    sub_cache = {}

    def substituted(p):
        key = tuple(sorted(p.terms.items()))
        hit = sub_cache.get(key)
        if hit is None:
            hit = p.substitute(Y, loss)
            sub_cache[key] = hit
        return hit

    for j in range(1, Y.sig.n + 1):
        pj = P.entry(j)
        if pj.is_zero:
            continue
        lhs += tau_product(substituted(pj), substituted(dv.entry(j)), cache)
        for (wl, wr), c in fdq(pj, j).terms.items():
            left = tau_poly(
                substituted(NCPoly.monomial(Y.sig, wl, 1, float_backend=Y.is_float)),
                cache,
            )
            if left:
                right = tau_poly(
                    substituted(
                        NCPoly.monomial(Y.sig, wr, 1, float_backend=Y.is_float)
                    ),
                    cache,
                )
                rhs += c * left * right
    return abs(lhs - rhs)


def sd_report(Y, W, degree_cap=3, loss=None, cache=None):
    """Max SD residual over single-slot monomial test vectors.

    For every word w of degree <= degree_cap and every slot j the test
    vector is w placed in slot j (zero elsewhere); linearity extends the
    conclusion to arbitrary test vectors of that degree.
    """
    if loss is None:
        loss = TruncationLog()
    sig = Y.sig
    dv = _gradient_of_potential(W)
    dv_sub = [dv.entry(j).substitute(Y, loss) for j in range(1, sig.n + 1)]
    word_sub = {}

    def substituted_word(w):
        hit = word_sub.get(w)
        if hit is None:
            hit = NCPoly.monomial(sig, w, 1, float_backend=Y.is_float).substitute(
                Y, loss
            )
            word_sub[w] = hit
        return hit

    residuals = {}
    for w in sig.words_up_to(degree_cap):
        pw = substituted_word(w)
        for j in range(1, sig.n + 1):
            lhs = tau_product(pw, dv_sub[j - 1], cache)
            rhs = 0.0 if Y.is_float else Fraction(0)
            for (wl, wr), c in fdq(
                NCPoly.monomial(sig, w, 1, float_backend=Y.is_float), j
            ).terms.items():
                left = tau_poly(substituted_word(wl), cache)
                if left:
                    rhs += c * left * tau_poly(substituted_word(wr), cache)
            residuals[(j, w)] = abs(float(lhs - rhs))
    max_res = max(residuals.values(), default=0.0)
    return SDReport(
        residuals=residuals,
        max_residual=max_res,
        degree_cap=degree_cap,
        truncation_loss=loss.norm(1.0),
    )


# ---------------------------------------------------------------------------
# entropy shift
# ---------------------------------------------------------------------------


@dataclass
class EntropyShift:
    value: float
    first_order: float
    tail_bound: float
    kmax: int
    hessian_pnorm: float


def entropy_shift(g, cfg, loss=None, cache=None):
    """(tau (x) tau) Tr log(1 + jacobian(D g)) with a certified tail.

    Requires the Hessian bound pnorm(J, Aprime) < 1.  Reports the full
    alternating series and its linear term separately (the linear term
    dominates at first order; the quadratic term only leads once it is
    subtracted).
    """
    J = jacobian(cyclic_gradient(g))
    h = float(J.pnorm(cfg.Aprime))
    n = g.sig.n
    if not h < 1.0:
        raise DivergenceError(f"hessian pnorm {h} >= 1 at radius {cfg.Aprime}")
    if h == 0.0:
        return EntropyShift(0.0, 0.0, 0.0, 0, 0.0)
    kmax = 1
    while n * h ** (kmax + 1) / ((kmax + 1) * (1.0 - h)) >= cfg.tol_series:
        kmax += 1
        if kmax > 400:
            raise DivergenceError(f"entropy tail cannot reach {cfg.tol_series}")
    total = 0.0
    first = 0.0
    power = J
    for k in range(1, kmax + 1):
        if k > 1:
            power = power.matmul(J, loss)
        term = float(tau_tau(trace_matrix(power), cache)) * ((-1.0) ** (k + 1) / k)
        if k == 1:
            first = term
        total += term
    tail = n * h ** (kmax + 1) / ((kmax + 1) * (1.0 - h))
    return EntropyShift(
        value=total, first_order=first, tail_bound=tail, kmax=kmax, hessian_pnorm=h
    )


def entropy_shift_qroute(g, cfg, loss=None, cache=None):
    """Second route: linear term minus half the traced remainder series.

    Uses the solver's remainder series on number_op(g) (whose graded
    inverse is g), then collapses the pair trace with one more tau.
    Independent summation path from :func:`entropy_shift`.
    """
    J = jacobian(cyclic_gradient(g))
    linear = float(tau_tau(trace_matrix(J), cache))
    ghat = number_op(g)
    qs = q_series(ghat, cfg, loss)
    return linear - 0.5 * float(tau_poly(qs.poly, cache))


# ---------------------------------------------------------------------------
# randomized exact inputs
# ---------------------------------------------------------------------------


def random_word(rng, n, min_len=1, max_len=4):
    length = rng.randint(min_len, max_len)
    return tuple(rng.randint(1, n) for _ in range(length))


def random_poly(rng, sig, max_degree=4, n_words=3, zero_constant=True):
    """Random exact-backend polynomial with small rational coefficients."""
    mapping = {}
    for _ in range(n_words):
        w = random_word(rng, sig.n, 1 if zero_constant else 0, max_degree)
        c = Fraction(rng.randint(-3, 3), rng.randint(1, 3))
        if c:
            mapping[w] = mapping.get(w, Fraction(0)) + c
    p = NCPoly.build(sig, mapping, float_backend=False)
    return project0(p) if zero_constant else p


def random_vector(rng, sig, max_degree=3, n_words=2):
    return PolyVec(
        [random_poly(rng, sig, max_degree, n_words) for _ in range(sig.n)]
    )


def random_cyclic_selfadjoint(rng, sig, max_degree=4, n_words=2):
    """Cyclically symmetric, self-adjoint, zero-constant random input."""
    h = random_poly(rng, sig, max_degree, n_words)
    sym = h.add(h.adjoint())
    g = cyclic_symmetrize(project0(sym))
    if g.is_zero:
        g = cyclic_symmetrize(
            NCPoly.build(sig, {(1,) * min(2, sig.dmax): Fraction(1)})
        )
    return g


# ---------------------------------------------------------------------------
# the exact identity suite
# ---------------------------------------------------------------------------


def _double_split_left(word, j, k):
    """(fdq_j (x) 1) fdq_k of a word, as a triple-word multiset."""
    out = {}
    for q, b in enumerate(word):
        if b == k:
            left, right = word[:q], word[q + 1:]
            for p, a in enumerate(left):
                if a == j:
                    key = (left[:p], left[p + 1:], right)
                    out[key] = out.get(key, 0) + 1
    return out


def _double_split_right(word, j, k):
    """(1 (x) fdq_k) fdq_j of a word, as a triple-word multiset."""
    out = {}
    for p, a in enumerate(word):
        if a == j:
            left, right = word[:p], word[p + 1:]
            for q, b in enumerate(right):
                if b == k:
                    key = (left, right[:q], right[q + 1:])
                    out[key] = out.get(key, 0) + 1
    return out


def adjoint_pairing_check(sig, p_degree=4, q_degree=4, cache=None):
    """Exhaustive pairing test for the adjoint closed form.

    For every monomial p with deg <= p_degree, every elementary tensor
    q = a (x) b with deg a + deg b <= q_degree and every letter j:
        tau(adjoint(fdq_adjoint(q, j)) * p) == <q, fdq(p, j)>
    with <a (x) b, c (x) d> = tau(a* c) tau(b* d).  Exact integers.
    """
    words = sig.words_up_to(p_degree)
    failures = []
    tensors = [
        (a, b)
        for a in sig.words_up_to(q_degree)
        for b in sig.words_up_to(q_degree - len(a))
    ]
    for j in range(1, sig.n + 1):
        for (a, b) in tensors:
            q = _elementary_tensor(sig, a, b)
            adj = fdq_adjoint(q, j, cache)
            for p in words:
                pp = NCPoly.monomial(sig, p, 1)
                lhs = tau_product(adj.adjoint(), pp, cache)
                rhs = 0
                for pos, letter in enumerate(p):
                    if letter == j:
                        rhs += tau(a[::-1] + p[:pos], cache) * tau(
                            b[::-1] + p[pos + 1:], cache
                        )
                if lhs != rhs:
                    failures.append((j, a, b, p, lhs, rhs))
    return failures


def _elementary_tensor(sig, a, b):
    from .calculus import TensorPoly

    return TensorPoly.build(sig, {(tuple(a), tuple(b)): Fraction(1)})


@dataclass
class LemmaSuiteReport:
    seed: int
    trials: int
    degree_cap: int
    checks: list = field(default_factory=list)

    @property
    def all_passed(self):
        return all(ok for _, ok, _ in self.checks)

    def as_dict(self):
        return {
            "seed": self.seed,
            "trials": self.trials,
            "degree_cap": self.degree_cap,
            "all_passed": self.all_passed,
            "checks": [
                {"name": name, "passed": ok, "detail": detail}
                for name, ok, detail in self.checks
            ],
        }


def lemma_suite(seed=0, n=2, degree_cap=4, trials=50, dmax=12):
    """Exact-backend identity checks on randomized small inputs.

    Any failure is a hard error for the engine; the suite is the
    ground-truth regression layer behind the analytic machinery.
    """
    rng = random.Random(seed)
    sig = AlgebraSignature(n, dmax)
    X = PolyVec.identity(sig)
    report = LemmaSuiteReport(seed=seed, trials=trials, degree_cap=degree_cap)

    def run(name, fn):
        for t in range(trials):
            detail = fn(t)
            if detail is not None:
                report.checks.append((name, False, detail))
                return
        report.checks.append((name, True, ""))

    def check_grad_of_symmetrization(t):
        h = random_poly(rng, sig, degree_cap, n_words=3, zero_constant=False)
        lhs = cyclic_gradient(cyclic_symmetrize(project0(h)))
        rhs = cyclic_gradient(h)
        return None if lhs == rhs else f"trial {t}"

    def check_symmetrize_via_gradient(t):
        g = random_poly(rng, sig, degree_cap, n_words=3)
        lhs = cyclic_symmetrize(g)
        rhs = sigma_inv(cyclic_gradient(g).dot(X))
        return None if lhs == rhs else f"trial {t}"

    def check_grading_commutator(t):
        g = random_poly(rng, sig, degree_cap, n_words=3)
        lhs = PolyVec([number_op(p) for p in cyclic_gradient(g)])
        rhs = cyclic_gradient(number_op(g)).sub(cyclic_gradient(g))
        return None if lhs == rhs else f"trial {t}"

    def check_jacobian_sharp_identity(t):
        f = random_vector(rng, sig, degree_cap - 1)
        lhs = jacobian(f).sharp_vec(X)
        rhs = PolyVec([number_op(p) for p in f])
        return None if lhs == rhs else f"trial {t}"

    def check_hessian_flip_symmetry(t):
        g = random_poly(rng, sig, degree_cap, n_words=3)
        J = jacobian(cyclic_gradient(g))
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if not J.entry(i, j).flip().equals(J.entry(j, i)):
                    return f"trial {t} entry ({i},{j})"
        return None

    def check_hessian_dagger(t):
        g = random_cyclic_selfadjoint(rng, sig, degree_cap)
        J = jacobian(cyclic_gradient(g))
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if not J.entry(i, j).dagger().equals(J.entry(i, j)):
                    return f"trial {t} entry ({i},{j})"
        return None

    def check_coderivation_commutation(t):
        w = random_word(rng, n, 2, degree_cap + 2)
        j = rng.randint(1, n)
        k = rng.randint(1, n)
        lhs = _double_split_left(w, j, k)
        rhs = _double_split_right(w, j, k)
        return None if lhs == rhs else f"word {w} j={j} k={k}"

    def check_adjoint_of_unit(t):
        j = rng.randint(1, n)
        one = _elementary_tensor(sig, (), ())
        return (
            None
            if fdq_adjoint(one, j) == NCPoly.letter(sig, j)
            else f"letter {j}"
        )

    def _power_chain(J, kmax):
        powers = [TensorMatrix.identity(sig)]
        for _ in range(kmax):
            powers.append(powers[-1].matmul(J))
        return powers

    def check_gradient_of_traced_powers(t):
        # the m in {-1, 0, 1} family tying the cyclic gradient of
        # pair-traced Hessian powers to adjoint contractions
        g = random_cyclic_selfadjoint(rng, sig, degree_cap)
        f = cyclic_gradient(g)
        J = jacobian(f)
        powers = _power_chain(J, 3)
        for m in (-1, 0, 1):
            lhs = cyclic_gradient(
                tau_pair(trace_matrix(powers[m + 2]))
            ).scale(Fraction(1, m + 2))
            rhs_vec = jstar(powers[m + 2]).scale(Fraction(-1)).add(
                J.sharp_vec(jstar(powers[m + 1]))
            )
            if not lhs == rhs_vec:
                return f"trial {t} m={m}"
        return None

    def check_k_map_as_gradient(t):
        g = random_cyclic_selfadjoint(rng, sig, degree_cap)
        f = cyclic_gradient(g)
        J = jacobian(f)
        lhs = jstar(J).scale(Fraction(-1)).sub(f)
        inner = tau_pair(trace_matrix(J)).sub(number_op(g))
        rhs = cyclic_gradient(inner)
        return None if lhs == rhs else f"trial {t}"

    def check_symmetrization_contracts_norm(t):
        g = random_poly(rng, sig, degree_cap, n_words=4)
        A = Fraction(5)
        return (
            None
            if cyclic_symmetrize(g).norm_a(A) <= g.norm_a(A)
            else f"trial {t}"
        )

    run("cyclic_gradient_absorbs_symmetrization", check_grad_of_symmetrization)
    run("symmetrization_from_gradient_contraction", check_symmetrize_via_gradient)
    run("grading_vs_gradient_commutator", check_grading_commutator)
    run("jacobian_contract_coordinates_is_grading", check_jacobian_sharp_identity)
    run("hessian_flip_symmetry", check_hessian_flip_symmetry)
    run("hessian_dagger_hermitian", check_hessian_dagger)
    run("coderivation_commutation", check_coderivation_commutation)
    run("adjoint_of_unit_tensor", check_adjoint_of_unit)
    run("gradient_of_traced_powers", check_gradient_of_traced_powers)
    run("k_map_as_gradient", check_k_map_as_gradient)
    run("symmetrization_contracts_norm", check_symmetrization_contracts_norm)

    pairing_sig = AlgebraSignature(n, dmax)
    failures = adjoint_pairing_check(pairing_sig, p_degree=3, q_degree=3)
    report.checks.append(
        (
            "adjoint_pairing_low_degree",
            not failures,
            "" if not failures else f"{len(failures)} failures, first {failures[0]}",
        )
    )
    return report
