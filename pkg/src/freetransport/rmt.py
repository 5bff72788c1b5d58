"""Desk-scale random-matrix check of the transport map.

The functional-calculus transport of GUE samples should reproduce the
moments of the Gibbs matrix ensemble with density proportional to
exp(-N Tr V(A_1, ..., A_n)), V = (1/2) sum A_j^2 + W.  Two pipelines are
compared word by word:

* transport: draw independent GUE tuples, discard any draw whose
  operator norm exceeds 4 (counted; the probability is exponentially
  small at these sizes), evaluate the truncated transport series on the
  tuple, and average normalized word traces;
* sampler: a Metropolis-adjusted Langevin chain targeting the Gibbs
  ensemble directly, with drift N * (cyclic gradient of V) evaluated by
  matrix functional calculus.

Agreement is judged in pooled standard errors.  Everything is seeded:
identical (seed, config) pairs give identical streams.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .calculus import cyclic_derivative
from .ncalg import NCPoly


class SpectralRadiusError(ValueError):
    """A matrix argument lies outside the series' certified radius."""


@dataclass
class MatrixTuple:
    """n Hermitian N x N matrices (one tuple of samples)."""

    mats: tuple

    def __post_init__(self):
        self.mats = tuple(np.asarray(m) for m in self.mats)

    @property
    def n(self):
        return len(self.mats)

    @property
    def N(self):
        return self.mats[0].shape[0]

    def hermiticity_defect(self):
        return max(
            float(np.linalg.norm(m - m.conj().T) / max(1.0, np.linalg.norm(m)))
            for m in self.mats
        )

    def op_norms(self):
        return [float(np.max(np.abs(np.linalg.eigvalsh(m)))) for m in self.mats]


def _hermitize(M):
    return (M + M.conj().T) / 2.0


def sample_gue(N, n, rng):
    """Independent GUE matrices with entry variance 1/N.

    The joint density is proportional to exp(-N Tr((1/2) sum A_j^2)).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    mats = []
    for _ in range(n):
        M = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        mats.append(_hermitize(M) / np.sqrt(N))
    return MatrixTuple(tuple(mats))


def _standard_hermitian_noise(N, n, rng):
    """Hermitian Gaussians isotropic for the trace inner product."""
    out = []
    for _ in range(n):
        M = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        out.append(_hermitize(M))
    return out


class WordEvaluator:
    """Matrix products of words with shared-prefix memoization."""

    def __init__(self, T):
        self.T = T
        N = T.N
        self.cache = {(): np.eye(N, dtype=complex)}

    def value(self, word):
        cached = self.cache.get(word)
        if cached is not None:
            return cached
        prefix = word[:-1]
        out = self.value(prefix) @ self.T.mats[word[-1] - 1]
        self.cache[word] = out
        return out

    def trace(self, word):
        return float(np.trace(self.value(word)).real) / self.T.N


def eval_poly_at_matrices(p, T, evaluator=None):
    """Plain matrix evaluation of a polynomial (no symmetrization)."""
    ev = evaluator or WordEvaluator(T)
    N = T.N
    out = np.zeros((N, N), dtype=complex)
    for w, c in p.terms.items():
        out += float(c) * ev.value(w)
    return out


def eval_series_at_matrices(F, T, radius_cap=None):
    """Evaluate a truncated series tuple on matrices, Hermitized.

    With a self-adjoint series the result is Hermitian up to roundoff;
    symmetrizing enforces it exactly.  ``radius_cap`` guards the
    spectral radius of the inputs against the series radius.
    """
    if radius_cap is not None:
        norms = T.op_norms()
        if max(norms) > radius_cap:
            raise SpectralRadiusError(
                f"input spectral radius {max(norms)} exceeds {radius_cap}"
            )
    ev = WordEvaluator(T)
    mats = []
    for p in F.entries:
        mats.append(_hermitize(eval_poly_at_matrices(p, T, ev)))
    return MatrixTuple(tuple(mats))


# ---------------------------------------------------------------------------
# Metropolis-adjusted Langevin over Hermitian tuples
# ---------------------------------------------------------------------------


@dataclass
class ChainConfig:
    """Step size and bookkeeping for one chain."""

    step_size: float
    steps: int
    burn_in: int
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        if self.burn_in >= self.steps:
            raise ValueError("burn-in must leave samples")


@dataclass
class MalaRun:
    samples: list
    acceptance_rate: float
    rate_warning: bool
    energies: list = field(default_factory=list)


def _trace_sq(mats_a, mats_b):
    return sum(float(np.vdot(a, b).real) for a, b in zip(mats_a, mats_b))


def mala_sample(W, N, chain):
    """MALA chain targeting exp(-N Tr V(A)), V = (1/2) sum A_j^2 + W.

    State space is the tuple of Hermitian matrices with the trace inner
    product; the drift is N times the cyclic gradient of V.  Acceptance
    rates outside [0.2, 0.8] raise a configuration warning.
    """
    sig = W.sig
    n = sig.n
    Wf = W.as_float()
    dv = [
        NCPoly.letter(sig, j, float_backend=True).add(
            cyclic_derivative(Wf, j)
        )
        for j in range(1, n + 1)
    ]
    rng = np.random.default_rng(chain.seed)

    def energy(T):
        ev = WordEvaluator(T)
        val = 0.0
        for m in T.mats:
            val += 0.5 * float(np.trace(m @ m).real)
        for w, c in Wf.terms.items():
            val += float(c) * float(np.trace(ev.value(w)).real)
        return N * val

    def gradient(T):
        ev = WordEvaluator(T)
        return [N * _hermitize(eval_poly_at_matrices(p, T, ev)) for p in dv]

    h = chain.step_size
    state = sample_gue(N, n, rng)
    e_state = energy(state)
    g_state = gradient(state)

    accepted = 0
    samples = []
    energies = []
    for step in range(chain.steps):
        noise = _standard_hermitian_noise(N, n, rng)
        prop_mats = tuple(
            state.mats[j] - 0.5 * h * g_state[j] + np.sqrt(h) * noise[j]
            for j in range(n)
        )
        proposal = MatrixTuple(prop_mats)
        e_prop = energy(proposal)
        g_prop = gradient(proposal)

        fwd = [
            proposal.mats[j] - state.mats[j] + 0.5 * h * g_state[j]
            for j in range(n)
        ]
        bwd = [
            state.mats[j] - proposal.mats[j] + 0.5 * h * g_prop[j]
            for j in range(n)
        ]
        log_alpha = (
            e_state
            - e_prop
            + (_trace_sq(fwd, fwd) - _trace_sq(bwd, bwd)) / (2.0 * h)
        )
        if np.log(rng.uniform()) < log_alpha:
            state = proposal
            e_state = e_prop
            g_state = g_prop
            accepted += 1
        if step >= chain.burn_in and (step - chain.burn_in) % chain.thin == 0:
            samples.append(state)
            energies.append(e_state)

    rate = accepted / chain.steps
    rate_warning = not 0.2 <= rate <= 0.8
    if rate_warning:
        warnings.warn(
            f"MALA acceptance rate {rate:.3f} outside [0.2, 0.8]; "
            "adjust the step size",
            stacklevel=2,
        )
    return MalaRun(
        samples=samples,
        acceptance_rate=rate,
        rate_warning=rate_warning,
        energies=energies,
    )


def effective_sample_size(series):
    """Initial-positive-sequence autocorrelation ESS estimate."""
    x = np.asarray(series, dtype=float)
    m = x.size
    if m < 4:
        return float(m)
    x = x - x.mean()
    var = float(np.dot(x, x)) / m
    if var == 0.0:
        return float(m)
    tau_int = 1.0
    for lag in range(1, m // 2):
        rho = float(np.dot(x[:-lag], x[lag:])) / (m * var)
        if rho <= 0.0:
            break
        tau_int += 2.0 * rho
    return float(m / tau_int)


def _batch_se(values, n_batches=20):
    v = np.asarray(values, dtype=float)
    usable = (v.size // n_batches) * n_batches
    if usable < 2 * n_batches:
        return float(v.std(ddof=1) / np.sqrt(max(v.size, 2)))
    means = v[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


# ---------------------------------------------------------------------------
# the two-pipeline comparison
# ---------------------------------------------------------------------------


def default_test_words(n):
    if n == 1:
        return [(1,) * k for k in range(1, 7)]
    return [
        (1,),
        (1, 1),
        (1, 2),
        (2, 2),
        (1, 1, 1, 1),
        (1, 2, 1, 2),
        (1, 1, 2, 2),
        (1, 1, 1, 1, 1, 1),
        (1, 1, 2, 1, 1, 2),
    ]


@dataclass
class WordStats:
    word: tuple
    mean_transport: float
    se_transport: float
    mean_sampler: float
    se_sampler: float

    @property
    def diff(self):
        return abs(self.mean_transport - self.mean_sampler)

    @property
    def pooled_sigma(self):
        return float(np.hypot(self.se_transport, self.se_sampler))

    def as_dict(self):
        return {
            "word": list(self.word),
            "mean_transport": self.mean_transport,
            "se_transport": self.se_transport,
            "mean_sampler": self.mean_sampler,
            "se_sampler": self.se_sampler,
            "diff": self.diff,
            "pooled_sigma": self.pooled_sigma,
        }


@dataclass
class CompareReport:
    N: int
    words: list
    stats: list
    gue_draws: int
    gue_rejected: int
    acceptance_rate: float
    sampler_samples: int
    sampler_ess: float

    def as_dict(self):
        return {
            "N": self.N,
            "gue_draws": self.gue_draws,
            "gue_rejected": self.gue_rejected,
            "acceptance_rate": self.acceptance_rate,
            "sampler_samples": self.sampler_samples,
            "sampler_ess": self.sampler_ess,
            "stats": [s.as_dict() for s in self.stats],
        }


def transport_compare(
    W,
    cfg,
    N,
    gue_draws,
    chain,
    words=None,
    seed=0,
    override_conditions=False,
    norm_cutoff=4.0,
    transport_result=None,
):
    """Compare transported GUE moments against the MALA Gibbs ensemble.

    ``W`` is the perturbation polynomial (already scaled); the transport
    is solved at ``cfg`` (override allowed, flagged uncertified in the
    result it carries).
    """
    from .solver import solve_transport

    sig = W.sig
    if words is None:
        words = default_test_words(sig.n)
    if transport_result is None:
        transport_result = solve_transport(
            W.as_float(), cfg, override_conditions=override_conditions
        )

    rng = np.random.default_rng(seed)
    transported = {w: [] for w in words}
    rejected = 0
    kept = 0
    while kept < gue_draws:
        T = sample_gue(N, sig.n, rng)
        if max(T.op_norms()) > norm_cutoff:
            rejected += 1
            continue
        Z = eval_series_at_matrices(transport_result.Y, T, radius_cap=cfg.Aprime)
        ev = WordEvaluator(Z)
        for w in words:
            transported[w].append(ev.trace(w))
        kept += 1

    run = mala_sample(W, N, chain)
    sampled = {w: [] for w in words}
    for T in run.samples:
        ev = WordEvaluator(T)
        for w in words:
            sampled[w].append(ev.trace(w))

    quad_series = [
        np.mean([float(np.trace(m @ m).real) / N for m in T.mats])
        for T in run.samples
    ]
    ess = effective_sample_size(quad_series)

    stats = []
    for w in words:
        tvals = np.asarray(transported[w])
        svals = np.asarray(sampled[w])
        stats.append(
            WordStats(
                word=w,
                mean_transport=float(tvals.mean()),
                se_transport=float(tvals.std(ddof=1) / np.sqrt(tvals.size)),
                mean_sampler=float(svals.mean()),
                se_sampler=_batch_se(svals),
            )
        )
    return CompareReport(
        N=N,
        words=list(words),
        stats=stats,
        gue_draws=gue_draws,
        gue_rejected=rejected,
        acceptance_rate=run.acceptance_rate,
        sampler_samples=len(run.samples),
        sampler_ess=ess,
    )
