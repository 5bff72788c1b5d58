"""Differential and structural operators on noncommutative polynomials.

This module houses the derivation calculus the transport construction is
made of:

* ``fdq(p, j)``: the j-th free difference quotient, the derivation into
  the tensor square sending word u X_j v to u (x) v summed over the
  occurrences of letter j,
* ``cyclic_derivative(p, j)``: same splits recombined as v u, the
  gradient adapted to trace functionals,
* ``jacobian(f)``: the matrix (fdq(f_i, j))_{i,j} over the tensor square,
* the ``#`` contractions: a tensor acts on a polynomial as
  ``(a (x) b) # g = a g b``, and tensors multiply by
  ``(a (x) b)(A (x) B) = aA (x) Bb`` (the right legs live in the
  opposite algebra),
* grading operators ``number_op`` (multiplies a degree-k word by k),
  ``sigma_inv`` (its inverse after killing constants), ``project0``
  (kills constants), ``cyclic_symmetrize`` (averages words over cyclic
  rotations),
* ``fdq_adjoint`` / ``jstar``: the adjoint of the free difference
  quotient with respect to the semicircle pairing,
* the projective norm upper bounds ``pnorm`` / ``pnorm_mat`` that
  certify ``# `` contractions: pnorm is evaluated on the stored
  representation, which upper-bounds the true projective norm, so every
  certificate consuming it only gets stronger.

The adjoint uses the closed form

    fdq_adjoint(a (x) b, j) = a X_j b
                              - (1 (x) tau)(fdq(a, j)) * b
                              - a * (tau (x) 1)(fdq(b, j))

whose ground truth is the pairing identity
``tau((fdq_adjoint(q, j))^* p) = <q, fdq(p, j)>`` with
``<a (x) b, c (x) d> = tau(a* c) tau(b* d)``; the test suite checks the
closed form against that pairing exhaustively at low degree.
"""

from __future__ import annotations

from fractions import Fraction

from . import semitrace
from .ncalg import (
    BackendMismatch,
    NCPoly,
    PolyVec,
    SignatureMismatch,
    word_key,
)


class DegreeOverflow(ValueError):
    """Raised when an operation cannot represent its result below dmax."""


# ---------------------------------------------------------------------------
# tensor square elements
# ---------------------------------------------------------------------------


class TensorPoly:
    """Element of the tensor square: a map (left word, right word) -> coeff.

    Left and right legs are truncated independently at dmax.  The right
    leg carries opposite-algebra multiplication, which is what the
    product rule ``(a (x) b)(A (x) B) = aA (x) Bb`` encodes.
    """

    __slots__ = ("sig", "terms", "is_float")

    def __init__(self, sig, terms, is_float):
        self.sig = sig
        self.terms = terms
        self.is_float = is_float

    @classmethod
    def build(cls, sig, mapping, float_backend=None):
        items = [((sig.check_word(l), sig.check_word(r)), c) for (l, r), c in mapping.items()]
        if float_backend is None:
            float_backend = any(isinstance(c, float) for _, c in items)
        terms = {}
        for (l, r), c in items:
            if len(l) > sig.dmax or len(r) > sig.dmax:
                raise ValueError("tensor leg exceeds truncation degree")
            c = float(c) if float_backend else _exact(c)
            key = (l, r)
            terms[key] = terms.get(key, 0.0 if float_backend else Fraction(0)) + c
        _prune_tensor(terms, float_backend)
        return cls(sig, terms, float_backend)

    @classmethod
    def zero(cls, sig, float_backend=False):
        return cls(sig, {}, float_backend)

    @classmethod
    def one(cls, sig, float_backend=False):
        c = 1.0 if float_backend else Fraction(1)
        return cls(sig, {((), ()): c}, float_backend)

    @property
    def is_zero(self):
        return not self.terms

    def _check_compat(self, other):
        if self.sig != other.sig:
            raise SignatureMismatch(f"{self.sig} vs {other.sig}")
        if self.is_float != other.is_float:
            raise BackendMismatch("cannot combine exact and float tensors")

    def add(self, other):
        self._check_compat(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms.get(k, 0.0 if self.is_float else Fraction(0)) + c
        _prune_tensor(terms, self.is_float)
        return TensorPoly(self.sig, terms, self.is_float)

    def neg(self):
        return TensorPoly(self.sig, {k: -c for k, c in self.terms.items()}, self.is_float)

    def sub(self, other):
        return self.add(other.neg())

    def scale(self, factor):
        factor = float(factor) if self.is_float else _exact(factor)
        terms = {k: c * factor for k, c in self.terms.items()}
        _prune_tensor(terms, self.is_float)
        return TensorPoly(self.sig, terms, self.is_float)

    def mul(self, other, loss=None):
        """Tensor-square product: left legs concatenate, right legs
        concatenate in reverse order.  Overlong legs drop with loss."""
        self._check_compat(other)
        dmax = self.sig.dmax
        terms = {}
        for (la, ra), ca in self.terms.items():
            for (lb, rb), cb in other.terms.items():
                c = ca * cb
                if len(la) + len(lb) > dmax or len(rb) + len(ra) > dmax:
                    if loss is not None:
                        loss.add(len(la) + len(lb) + len(ra) + len(rb), abs(c))
                    continue
                key = (la + lb, rb + ra)
                if key in terms:
                    terms[key] += c
                else:
                    terms[key] = c
        _prune_tensor(terms, self.is_float)
        return TensorPoly(self.sig, terms, self.is_float)

    def sharp(self, g, loss=None):
        """Contraction (a (x) b) # g = a g b, truncated with loss."""
        if g.sig != self.sig:
            raise SignatureMismatch(f"{self.sig} vs {g.sig}")
        if g.is_float != self.is_float:
            raise BackendMismatch("sharp operand on a different backend")
        dmax = self.sig.dmax
        terms = {}
        for (l, r), ct in self.terms.items():
            base = len(l) + len(r)
            for w, cg in g.terms.items():
                c = ct * cg
                if base + len(w) > dmax:
                    if loss is not None:
                        loss.add(base + len(w), abs(c))
                    continue
                word = l + w + r
                if word in terms:
                    terms[word] += c
                else:
                    terms[word] = c
        out = NCPoly.zero(self.sig, self.is_float)
        out.terms.update(terms)
        _prune_nc(out.terms, self.is_float)
        return out

    def flip(self):
        """Swap the two legs: a (x) b -> b (x) a."""
        return TensorPoly(
            self.sig, {(r, l): c for (l, r), c in self.terms.items()}, self.is_float
        )

    def dagger(self):
        """The involution a (x) b -> b* (x) a* (legs reversed and starred)."""
        return TensorPoly(
            self.sig,
            {(r[::-1], l[::-1]): c for (l, r), c in self.terms.items()},
            self.is_float,
        )

    def pnorm(self, radius):
        """Representation-induced upper bound on the projective norm."""
        total = 0
        for (l, r), c in self.terms.items():
            total += abs(c) * radius ** (len(l) + len(r))
        return total

    def iter_sorted(self):
        for key in sorted(self.terms, key=lambda k: (word_key(k[0]), word_key(k[1]))):
            yield key, self.terms[key]

    def equals(self, other):
        self._check_compat(other)
        return self.terms == other.terms

    def isclose(self, other, atol=1e-12):
        keys = set(self.terms) | set(other.terms)
        return all(
            abs(float(self.terms.get(k, 0)) - float(other.terms.get(k, 0))) <= atol
            for k in keys
        )

    def __eq__(self, other):
        if not isinstance(other, TensorPoly):
            return NotImplemented
        return (
            self.sig == other.sig
            and self.is_float == other.is_float
            and self.terms == other.terms
        )

    def __repr__(self):
        bits = [
            f"{c}*({'.'.join(map(str, l)) or '1'})(x)({'.'.join(map(str, r)) or '1'})"
            for (l, r), c in list(self.iter_sorted())[:4]
        ]
        more = "" if len(self.terms) <= 4 else f" + ... ({len(self.terms)} terms)"
        return "TensorPoly(" + " + ".join(bits) + more + ")" if bits else "TensorPoly(0)"


def _exact(c):
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    raise BackendMismatch(f"exact backend got {type(c).__name__}")


def _prune_tensor(terms, is_float):
    if is_float:
        dead = [k for k, c in terms.items() if abs(c) <= 1e-300]
    else:
        dead = [k for k, c in terms.items() if c == 0]
    for k in dead:
        del terms[k]


def _prune_nc(terms, is_float):
    if is_float:
        dead = [k for k, c in terms.items() if abs(c) <= 1e-300]
    else:
        dead = [k for k, c in terms.items() if c == 0]
    for k in dead:
        del terms[k]


class TensorMatrix:
    """n x n matrix of tensor-square elements (the Jacobian's home)."""

    __slots__ = ("sig", "rows", "is_float")

    def __init__(self, rows):
        rows = tuple(tuple(r) for r in rows)
        sig = rows[0][0].sig
        is_float = rows[0][0].is_float
        n = sig.n
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"expected a {n}x{n} matrix")
        for r in rows:
            for q in r:
                if q.sig != sig:
                    raise SignatureMismatch("matrix entries disagree on signature")
                if q.is_float != is_float:
                    raise BackendMismatch("matrix entries disagree on backend")
        self.sig = sig
        self.rows = rows
        self.is_float = is_float

    @property
    def n(self):
        return self.sig.n

    @classmethod
    def zero(cls, sig, float_backend=False):
        z = TensorPoly.zero(sig, float_backend)
        return cls([[z] * sig.n for _ in range(sig.n)])

    @classmethod
    def identity(cls, sig, float_backend=False):
        one = TensorPoly.one(sig, float_backend)
        z = TensorPoly.zero(sig, float_backend)
        return cls([[one if i == j else z for j in range(sig.n)] for i in range(sig.n)])

    def entry(self, i, j):
        """1-based access."""
        return self.rows[i - 1][j - 1]

    def add(self, other):
        return TensorMatrix(
            [
                [a.add(b) for a, b in zip(ra, rb)]
                for ra, rb in zip(self.rows, other.rows)
            ]
        )

    def sub(self, other):
        return TensorMatrix(
            [
                [a.sub(b) for a, b in zip(ra, rb)]
                for ra, rb in zip(self.rows, other.rows)
            ]
        )

    def scale(self, factor):
        return TensorMatrix([[q.scale(factor) for q in r] for r in self.rows])

    def matmul(self, other, loss=None):
        n = self.n
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = TensorPoly.zero(self.sig, self.is_float)
                for k in range(n):
                    acc = acc.add(self.rows[i][k].mul(other.rows[k][j], loss))
                row.append(acc)
            out.append(row)
        return TensorMatrix(out)

    def power(self, k, loss=None):
        out = TensorMatrix.identity(self.sig, self.is_float)
        for _ in range(k):
            out = out.matmul(self, loss)
        return out

    def sharp_vec(self, g, loss=None):
        """Matrix-vector contraction: (M # g)_j = sum_i M[j, i] # g_i."""
        if len(g) != self.n:
            raise ValueError("vector length mismatch")
        out = []
        for j in range(1, self.n + 1):
            acc = NCPoly.zero(self.sig, self.is_float)
            for i in range(1, self.n + 1):
                acc = acc.add(self.entry(j, i).sharp(g.entry(i), loss))
            out.append(acc)
        return PolyVec(out)

    def pnorm(self, radius):
        """max over rows of the summed entry bounds (operator-norm bound)."""
        return max(sum(q.pnorm(radius) for q in row) for row in self.rows)

    def isclose(self, other, atol=1e-12):
        return all(
            a.isclose(b, atol)
            for ra, rb in zip(self.rows, other.rows)
            for a, b in zip(ra, rb)
        )

    def equals(self, other):
        return all(
            a.equals(b)
            for ra, rb in zip(self.rows, other.rows)
            for a, b in zip(ra, rb)
        )


# ---------------------------------------------------------------------------
# derivations
# ---------------------------------------------------------------------------


def fdq(p, j):
    """Free difference quotient: split every word at each letter j."""
    if not 1 <= j <= p.sig.n:
        raise ValueError(f"letter {j} outside 1..{p.sig.n}")
    mapping = {}
    for w, c in p.terms.items():
        for pos, a in enumerate(w):
            if a == j:
                key = (w[:pos], w[pos + 1:])
                mapping[key] = mapping.get(key, 0) + c
    return TensorPoly.build(p.sig, mapping, float_backend=p.is_float)


def cyclic_derivative(p, j):
    """Cyclic derivative: split u X_j v -> v u summed over occurrences."""
    if not 1 <= j <= p.sig.n:
        raise ValueError(f"letter {j} outside 1..{p.sig.n}")
    mapping = {}
    for w, c in p.terms.items():
        for pos, a in enumerate(w):
            if a == j:
                word = w[pos + 1:] + w[:pos]
                mapping[word] = mapping.get(word, 0) + c
    return NCPoly.build(p.sig, mapping, float_backend=p.is_float)


def cyclic_gradient(p):
    """The vector of cyclic derivatives, one per letter."""
    return PolyVec([cyclic_derivative(p, j) for j in range(1, p.sig.n + 1)])


def jacobian(f):
    """Matrix with entry (i, j) = fdq(f_i, j)."""
    return TensorMatrix(
        [[fdq(fi, j) for j in range(1, f.sig.n + 1)] for fi in f.entries]
    )


# ---------------------------------------------------------------------------
# grading operators
# ---------------------------------------------------------------------------


def number_op(p):
    """Multiply each word by its length."""
    return NCPoly(
        p.sig,
        {w: c * len(w) for w, c in p.terms.items() if w},
        p.is_float,
    )


def project0(p):
    """Remove the constant term."""
    terms = {w: c for w, c in p.terms.items() if w}
    return NCPoly(p.sig, terms, p.is_float)


def sigma_inv(p):
    """Divide each word by its length (inverse of number_op after project0)."""
    terms = {}
    for w, c in p.terms.items():
        if not w:
            continue
        if p.is_float:
            terms[w] = c / len(w)
        else:
            terms[w] = c / Fraction(len(w))
    return NCPoly(p.sig, terms, p.is_float)


def cyclic_symmetrize(p):
    """Average each word over all of its cyclic rotations."""
    mapping = {}
    for w, c in p.terms.items():
        k = len(w)
        if k == 0:
            continue
        share = c / k if p.is_float else c / Fraction(k)
        for r in range(k):
            word = w[r:] + w[:r]
            mapping[word] = mapping.get(word, 0) + share
    return NCPoly.build(p.sig, mapping, float_backend=p.is_float)


# ---------------------------------------------------------------------------
# contractions and norms (module-level conveniences)
# ---------------------------------------------------------------------------


def sharp_tp(q, g, loss=None):
    return q.sharp(g, loss)


def sharp_tt(q, r, loss=None):
    return q.mul(r, loss)


def flip(q):
    return q.flip()


def pnorm(q, radius):
    return q.pnorm(radius)


def pnorm_mat(m, radius):
    return m.pnorm(radius)


def partial_trace_pair(q, cache=None):
    """(1 (x) tau + tau (x) 1) applied to a tensor element."""
    return semitrace.tau_pair(q, cache)


def trace_pair_of_matrix(m, cache=None):
    """(1 (x) tau + tau (x) 1) of the matrix trace, as one polynomial."""
    return semitrace.tau_pair(semitrace.trace_matrix(m), cache)


# ---------------------------------------------------------------------------
# the adjoint of the free difference quotient
# ---------------------------------------------------------------------------


def fdq_adjoint(q, j, cache=None):
    """Adjoint of fdq(., j) under the semicircle pairing.

    Acts on a (x) b as  a X_j b  minus the two contraction corrections
    (see the module docstring).  The middle insertion raises the degree
    by one, so every stored term must satisfy len(l) + len(r) < dmax.
    """
    sig = q.sig
    if not 1 <= j <= sig.n:
        raise ValueError(f"letter {j} outside 1..{sig.n}")
    mapping = {}

    def bump(word, value):
        mapping[word] = mapping.get(word, 0) + value

    for (l, r), c in q.terms.items():
        if len(l) + len(r) + 1 > sig.dmax:
            raise DegreeOverflow(
                f"adjoint needs degree {len(l) + len(r) + 1} > dmax={sig.dmax}"
            )
        bump(l + (j,) + r, c)
        # -(1 (x) tau)(fdq(l, j)) * r : split the left leg, trace the tail
        for pos, a in enumerate(l):
            if a == j:
                t = semitrace.tau(l[pos + 1:], cache)
                if t:
                    bump(l[:pos] + r, -c * t)
        # -l * (tau (x) 1)(fdq(r, j)) : split the right leg, trace the head
        for pos, a in enumerate(r):
            if a == j:
                t = semitrace.tau(r[:pos], cache)
                if t:
                    bump(l + r[pos + 1:], -c * t)
    return NCPoly.build(sig, mapping, float_backend=q.is_float)


def jstar(m, cache=None):
    """Adjoint Jacobian: component j is sum_i fdq_adjoint(M[j, i], i)."""
    out = []
    for j in range(1, m.n + 1):
        acc = NCPoly.zero(m.sig, m.is_float)
        for i in range(1, m.n + 1):
            acc = acc.add(fdq_adjoint(m.entry(j, i), i, cache))
        out.append(acc)
    return PolyVec(out)
