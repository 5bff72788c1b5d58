"""Sparse, degree-truncated polynomial arithmetic in n noncommuting letters.

A polynomial is a finite linear combination of words over the letters
1..n.  Words never commute: ``(1, 2)`` and ``(2, 1)`` are distinct
monomials.  Every polynomial is attached to an :class:`AlgebraSignature`
fixing the number of letters and a global truncation degree ``dmax``.
Products and substitutions drop all words longer than ``dmax``; the
weighted mass of what was dropped can be captured in a
:class:`TruncationLog` so callers can report an honest error budget.

Coefficients come in two backends that are never mixed inside one
polynomial:

* exact: :class:`fractions.Fraction` (identity tests, serialization
  round-trips are bit-exact),
* float: IEEE doubles (the fixed-point solver).

All values are immutable after construction, so they can be shared
freely across threads.
"""

from __future__ import annotations

from fractions import Fraction

#: Coefficients with absolute value at or below this floor are pruned on
#: the float backend (exact backend prunes exact zeros only).
PRUNE_FLOOR = 1e-300


class SignatureMismatch(ValueError):
    """Raised when operands belong to different algebra signatures."""


class BackendMismatch(TypeError):
    """Raised when exact and float coefficients would be mixed."""


class AlgebraSignature:
    """Number of self-adjoint generators and the global truncation degree."""

    __slots__ = ("n", "dmax")

    def __init__(self, n, dmax):
        if n < 1:
            raise ValueError("need at least one generator")
        if dmax < 1:
            raise ValueError("truncation degree must be >= 1")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "dmax", int(dmax))

    def __setattr__(self, name, value):
        raise AttributeError("AlgebraSignature is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, AlgebraSignature)
            and self.n == other.n
            and self.dmax == other.dmax
        )

    def __hash__(self):
        return hash((self.n, self.dmax))

    def __repr__(self):
        return f"AlgebraSignature(n={self.n}, dmax={self.dmax})"

    def check_word(self, word):
        word = tuple(int(a) for a in word)
        for a in word:
            if not 1 <= a <= self.n:
                raise ValueError(f"letter {a} outside 1..{self.n}")
        return word

    def words_up_to(self, degree):
        """All words of length <= degree in canonical (length, lex) order."""
        out = [()]
        layer = [()]
        for _ in range(degree):
            layer = [w + (a,) for w in layer for a in range(1, self.n + 1)]
            out.extend(layer)
        return out


def word_key(word):
    """Canonical total order on words: by length, then lexicographic."""
    return (len(word), word)


class TruncationLog:
    """Per-degree coefficient mass discarded by the degree cap.

    ``norm(A)`` turns the record into the dropped ``sum |c| A^deg`` mass,
    an upper bound on how much any A-norm (or any trace against a state
    with moment growth below A) could have moved.
    """

    __slots__ = ("mass", "dropped_terms")

    def __init__(self):
        self.mass = {}
        self.dropped_terms = 0

    def add(self, degree, amount):
        if amount:
            self.mass[degree] = self.mass.get(degree, 0.0) + float(amount)
            self.dropped_terms += 1

    def merge(self, other):
        for d, m in other.mass.items():
            self.mass[d] = self.mass.get(d, 0.0) + m
        self.dropped_terms += other.dropped_terms

    def norm(self, radius):
        return sum(m * float(radius) ** d for d, m in sorted(self.mass.items()))

    @property
    def empty(self):
        return not self.mass

    def as_dict(self):
        return {str(d): self.mass[d] for d in sorted(self.mass)}

    def __repr__(self):
        return f"TruncationLog(terms={self.dropped_terms}, mass={self.as_dict()})"


def _coerce_exact(c):
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    raise BackendMismatch(f"exact backend got {type(c).__name__}; use floats explicitly")


def _is_floatlike(c):
    return isinstance(c, float)


class NCPoly:
    """Noncommutative polynomial: a map from words to coefficients.

    Words are tuples of 1-based letters; the empty word is the constant
    monomial.  Zero coefficients are never stored, and no stored word is
    longer than ``sig.dmax``.
    """

    __slots__ = ("sig", "terms", "is_float")

    def __init__(self, sig, terms, is_float):
        # internal constructor: `terms` must already be normalized
        self.sig = sig
        self.terms = terms
        self.is_float = is_float

    # -- construction -------------------------------------------------

    @classmethod
    def build(cls, sig, mapping, float_backend=None):
        """Normalize a {word: coefficient} mapping into a polynomial.

        The backend is inferred (any float coefficient makes the whole
        polynomial float) unless forced with ``float_backend``.
        """
        items = [(sig.check_word(w), c) for w, c in mapping.items()]
        if float_backend is None:
            float_backend = any(_is_floatlike(c) for _, c in items)
        terms = {}
        for w, c in items:
            if len(w) > sig.dmax:
                raise ValueError(
                    f"word of length {len(w)} exceeds truncation degree {sig.dmax}"
                )
            if float_backend:
                c = float(c)
            else:
                c = _coerce_exact(c)
            if w in terms:
                terms[w] += c
            else:
                terms[w] = c
        _prune(terms, float_backend)
        return cls(sig, terms, float_backend)

    @classmethod
    def zero(cls, sig, float_backend=False):
        return cls(sig, {}, float_backend)

    @classmethod
    def one(cls, sig, float_backend=False):
        c = 1.0 if float_backend else Fraction(1)
        return cls(sig, {(): c}, float_backend)

    @classmethod
    def letter(cls, sig, j, float_backend=False):
        if not 1 <= j <= sig.n:
            raise ValueError(f"letter {j} outside 1..{sig.n}")
        c = 1.0 if float_backend else Fraction(1)
        return cls(sig, {(j,): c}, float_backend)

    @classmethod
    def monomial(cls, sig, word, coeff=1, float_backend=None):
        return cls.build(sig, {tuple(word): coeff}, float_backend)

    # -- basic queries ------------------------------------------------

    @property
    def is_zero(self):
        return not self.terms

    @property
    def max_degree(self):
        return max((len(w) for w in self.terms), default=0)

    @property
    def constant_term(self):
        return self.terms.get((), 0.0 if self.is_float else Fraction(0))

    def coeff(self, word):
        word = tuple(word)
        return self.terms.get(word, 0.0 if self.is_float else Fraction(0))

    def iter_sorted(self):
        for w in sorted(self.terms, key=word_key):
            yield w, self.terms[w]

    def support(self):
        return set(self.terms)

    # -- arithmetic ---------------------------------------------------

    def _check_compat(self, other):
        if self.sig != other.sig:
            raise SignatureMismatch(f"{self.sig} vs {other.sig}")
        if self.is_float != other.is_float:
            raise BackendMismatch("cannot combine exact and float polynomials")

    def add(self, other):
        self._check_compat(other)
        terms = dict(self.terms)
        for w, c in other.terms.items():
            if w in terms:
                terms[w] += c
            else:
                terms[w] = c
        _prune(terms, self.is_float)
        return NCPoly(self.sig, terms, self.is_float)

    def neg(self):
        return NCPoly(self.sig, {w: -c for w, c in self.terms.items()}, self.is_float)

    def sub(self, other):
        return self.add(other.neg())

    def scale(self, factor):
        if self.is_float:
            factor = float(factor)
        else:
            factor = _coerce_exact(factor)
        if factor == 0:
            return NCPoly.zero(self.sig, self.is_float)
        terms = {w: c * factor for w, c in self.terms.items()}
        _prune(terms, self.is_float)
        return NCPoly(self.sig, terms, self.is_float)

    def mul(self, other, loss=None):
        """Concatenation product.  Words longer than dmax are dropped and
        their |coefficient| mass recorded in `loss` keyed by degree."""
        self._check_compat(other)
        dmax = self.sig.dmax
        terms = {}
        for wa, ca in self.terms.items():
            la = len(wa)
            for wb, cb in other.terms.items():
                c = ca * cb
                if la + len(wb) > dmax:
                    if loss is not None:
                        loss.add(la + len(wb), abs(c))
                    continue
                w = wa + wb
                if w in terms:
                    terms[w] += c
                else:
                    terms[w] = c
        _prune(terms, self.is_float)
        return NCPoly(self.sig, terms, self.is_float)

    def power(self, k, loss=None):
        out = NCPoly.one(self.sig, self.is_float)
        for _ in range(k):
            out = out.mul(self, loss)
        return out

    def __add__(self, other):
        return self.add(other)

    def __sub__(self, other):
        return self.sub(other)

    def __neg__(self):
        return self.neg()

    def __mul__(self, other):
        if isinstance(other, NCPoly):
            return self.mul(other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    # -- norms and involution ------------------------------------------

    def norm_a(self, radius):
        """Weighted coefficient norm: sum |c_w| radius^len(w).

        Exact coefficients with an exact radius give an exact result.
        """
        total = 0
        for w, c in self.terms.items():
            total += abs(c) * radius ** len(w)
        return total

    def adjoint(self):
        """Reverse every word (generators are self-adjoint, coefficients real)."""
        return NCPoly(
            self.sig, {w[::-1]: c for w, c in self.terms.items()}, self.is_float
        )

    # -- substitution ---------------------------------------------------

    def substitute(self, args, loss=None):
        """Replace letter j by args[j] in every word and expand.

        ``args`` is a :class:`PolyVec` with one entry per letter.  Products
        are truncated at dmax with loss accounting.
        """
        if args.sig != self.sig:
            raise SignatureMismatch(f"{self.sig} vs {args.sig}")
        if args.is_float != self.is_float:
            raise BackendMismatch("substitution arguments on a different backend")
        out = NCPoly.zero(self.sig, self.is_float)
        cache = {(): NCPoly.one(self.sig, self.is_float)}
        for w, c in self.iter_sorted():
            prefix = w
            # walk down to the longest cached prefix, then extend
            while prefix not in cache:
                prefix = prefix[:-1]
            value = cache[prefix]
            for a in w[len(prefix):]:
                prefix = prefix + (a,)
                value = value.mul(args.entry(a), loss)
                cache[prefix] = value
            out = out.add(value.scale(c))
        return out

    # -- comparisons ----------------------------------------------------

    def equals(self, other):
        self._check_compat(other)
        return self.terms == other.terms

    def isclose(self, other, atol=1e-12):
        if self.sig != other.sig:
            raise SignatureMismatch(f"{self.sig} vs {other.sig}")
        words = set(self.terms) | set(other.terms)
        zero = 0.0
        return all(
            abs(float(self.terms.get(w, zero)) - float(other.terms.get(w, zero))) <= atol
            for w in words
        )

    def __eq__(self, other):
        if not isinstance(other, NCPoly):
            return NotImplemented
        return (
            self.sig == other.sig
            and self.is_float == other.is_float
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.sig, self.is_float, frozenset(self.terms.items())))

    # -- backend conversion ----------------------------------------------

    def as_float(self):
        if self.is_float:
            return self
        return NCPoly(self.sig, {w: float(c) for w, c in self.terms.items()}, True)

    def as_exact(self):
        """Float -> exact conversion (each double maps to its exact rational)."""
        if not self.is_float:
            return self
        return NCPoly(
            self.sig, {w: Fraction(c) for w, c in self.terms.items()}, False
        )

    # -- serialization -----------------------------------------------------

    def to_payload(self):
        """List of (word-as-int-list, coefficient-as-string) pairs.

        Exact coefficients serialize as integer-ratio strings ("-3/2"),
        floats via repr; both round-trip bit-exactly.
        """
        return {
            "n": self.sig.n,
            "dmax": self.sig.dmax,
            "backend": "float" if self.is_float else "exact",
            "terms": [
                [list(w), repr(c) if self.is_float else str(c)]
                for w, c in self.iter_sorted()
            ],
        }

    @classmethod
    def from_payload(cls, payload):
        sig = AlgebraSignature(payload["n"], payload["dmax"])
        is_float = payload["backend"] == "float"
        mapping = {}
        for word, cstr in payload["terms"]:
            c = float(cstr) if is_float else Fraction(cstr)
            mapping[tuple(word)] = c
        return cls.build(sig, mapping, float_backend=is_float)

    def __repr__(self):
        if self.is_zero:
            return "NCPoly(0)"
        bits = []
        for w, c in self.iter_sorted():
            word = "".join(f"X{a}" for a in w) if w else "1"
            bits.append(f"{c}*{word}")
        s = " + ".join(bits[:6])
        if len(bits) > 6:
            s += f" + ... ({len(bits)} terms)"
        return f"NCPoly({s})"


def _prune(terms, is_float):
    if is_float:
        dead = [w for w, c in terms.items() if abs(c) <= PRUNE_FLOOR]
    else:
        dead = [w for w, c in terms.items() if c == 0]
    for w in dead:
        del terms[w]


class PolyVec:
    """An n-vector of polynomials sharing one signature and backend."""

    __slots__ = ("sig", "entries", "is_float")

    def __init__(self, entries):
        entries = tuple(entries)
        if not entries:
            raise ValueError("empty vector")
        sig = entries[0].sig
        is_float = entries[0].is_float
        for p in entries[1:]:
            if p.sig != sig:
                raise SignatureMismatch("vector entries disagree on signature")
            if p.is_float != is_float:
                raise BackendMismatch("vector entries disagree on backend")
        if len(entries) != sig.n:
            raise ValueError(f"expected {sig.n} entries, got {len(entries)}")
        self.sig = sig
        self.entries = entries
        self.is_float = is_float

    @classmethod
    def zero(cls, sig, float_backend=False):
        return cls([NCPoly.zero(sig, float_backend)] * sig.n)

    @classmethod
    def identity(cls, sig, float_backend=False):
        """The coordinate vector (X_1, ..., X_n)."""
        return cls([NCPoly.letter(sig, j, float_backend) for j in range(1, sig.n + 1)])

    def entry(self, j):
        """1-based access matching letter numbering."""
        return self.entries[j - 1]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def add(self, other):
        return PolyVec([a.add(b) for a, b in zip(self.entries, other.entries)])

    def sub(self, other):
        return PolyVec([a.sub(b) for a, b in zip(self.entries, other.entries)])

    def scale(self, factor):
        return PolyVec([a.scale(factor) for a in self.entries])

    def __add__(self, other):
        return self.add(other)

    def __sub__(self, other):
        return self.sub(other)

    def norm_a(self, radius):
        """sup over entries of the entrywise A-norm."""
        return max(p.norm_a(radius) for p in self.entries)

    def substitute(self, args, loss=None):
        return PolyVec([p.substitute(args, loss) for p in self.entries])

    def dot(self, other, loss=None):
        """sum_j self_j * other_j (entrywise product, then sum)."""
        out = NCPoly.zero(self.sig, self.is_float)
        for a, b in zip(self.entries, other.entries):
            out = out.add(a.mul(b, loss))
        return out

    def as_float(self):
        return PolyVec([p.as_float() for p in self.entries])

    def isclose(self, other, atol=1e-12):
        return all(
            a.isclose(b, atol) for a, b in zip(self.entries, other.entries)
        )

    def __eq__(self, other):
        if not isinstance(other, PolyVec):
            return NotImplemented
        return self.entries == other.entries

    def __repr__(self):
        return "PolyVec(" + ", ".join(repr(p) for p in self.entries) + ")"
