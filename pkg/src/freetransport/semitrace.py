"""Exact evaluation of the standard semicircle trace on words.

The joint moments of a free standard semicircular family count
non-crossing pairings of letter positions in which paired positions
carry the same letter.  They are computed here by the first-letter
split recursion

    tau(w) = sum over positions p with w[p] == w[0] of
             tau(w[1:p]) * tau(w[p+1:])

which is exact integer arithmetic (Python ints widen automatically).
Odd-length words always evaluate to 0.

The cache is keyed on the word itself, not a cyclic canonical form;
cyclic invariance is cheap to test and expensive to exploit at these
lengths.  Inserts are idempotent, so unlocked concurrent use is safe.
"""

from __future__ import annotations

from fractions import Fraction

from .ncalg import NCPoly


class TraceCache:
    """Memo table for word traces with hit/miss counters."""

    __slots__ = ("memo", "hits", "misses")

    def __init__(self):
        self.memo = {(): 1}
        self.hits = 0
        self.misses = 0

    def tau(self, word):
        word = tuple(word)
        if len(word) % 2 == 1:
            return 0
        return self._tau(word)

    def _tau(self, word):
        memo = self.memo
        cached = memo.get(word)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        first = word[0]
        total = 0
        # pair position 0 with every later matching position
        for p in range(1, len(word), 2):
            if word[p] == first:
                inner = word[1:p]
                outer = word[p + 1:]
                if len(inner) % 2 == 0:
                    left = self._tau(inner) if inner else 1
                    if left:
                        right = self._tau(outer) if outer else 1
                        total += left * right
        memo[word] = total
        return total


_DEFAULT_CACHE = TraceCache()


def tau(word, cache=None):
    """Semicircle trace of a single word (an integer)."""
    return (cache or _DEFAULT_CACHE).tau(word)


def catalan(k):
    """Catalan number C_k = tau(X^(2k)) for a single letter."""
    num = 1
    for i in range(k):
        num = num * (2 * k - i) // (i + 1)
    return num // (k + 1)


def moment_bound_check(word, cache=None):
    """|tau(w)| <= 2^len(w), the moment growth the engine relies on."""
    return abs(tau(word, cache)) <= 2 ** len(word)


def tau_poly(p, cache=None):
    """Linear extension of the trace to a polynomial."""
    zero = 0.0 if p.is_float else Fraction(0)
    total = zero
    for w, c in p.terms.items():
        t = tau(w, cache)
        if t:
            total += c * t
    return total


def tau_product(p, q, cache=None):
    """tau(p * q) evaluated without forming (or truncating) the product.

    Trace pairings are evaluated on the concatenated words directly, so
    the result is exact for the given inputs even when deg p + deg q
    exceeds the signature's truncation degree.
    """
    p._check_compat(q)
    total = 0.0 if p.is_float else Fraction(0)
    for wa, ca in p.terms.items():
        for wb, cb in q.terms.items():
            if (len(wa) + len(wb)) % 2:
                continue
            t = tau(wa + wb, cache)
            if t:
                total += ca * cb * t
    return total


def tau_tensor_left(q, cache=None):
    """Apply (1 (x) tau): a (x) b  ->  tau(b) * a, keeping the left leg."""
    mapping = {}
    for (wl, wr), c in q.terms.items():
        t = tau(wr, cache)
        if t:
            mapping[wl] = mapping.get(wl, 0) + c * t
    return NCPoly.build(q.sig, mapping, float_backend=q.is_float)


def tau_tensor_right(q, cache=None):
    """Apply (tau (x) 1): a (x) b  ->  tau(a) * b, keeping the right leg."""
    mapping = {}
    for (wl, wr), c in q.terms.items():
        t = tau(wl, cache)
        if t:
            mapping[wr] = mapping.get(wr, 0) + c * t
    return NCPoly.build(q.sig, mapping, float_backend=q.is_float)


def tau_pair(q, cache=None):
    """Apply (1 (x) tau + tau (x) 1) to a tensor, yielding a polynomial."""
    return tau_tensor_left(q, cache).add(tau_tensor_right(q, cache))


def tau_tau(q, cache=None):
    """Apply (tau (x) tau), yielding a scalar."""
    total = 0.0 if q.is_float else Fraction(0)
    for (wl, wr), c in q.terms.items():
        tl = tau(wl, cache)
        if tl:
            tr = tau(wr, cache)
            if tr:
                total += c * tl * tr
    return total


def trace_matrix(m):
    """Matrix trace: the sum of the diagonal tensor entries."""
    out = m.entry(1, 1)
    for i in range(2, m.n + 1):
        out = out.add(m.entry(i, i))
    return out
