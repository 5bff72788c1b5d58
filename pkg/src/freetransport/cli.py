"""Batch front end: config parsing, command dispatch, structured reports.

One JSON configuration document drives every command.  Words are
integer arrays ([1, 2, 1] means X1 X2 X1), coefficients are decimal
strings parsed exactly (rationals like "3/2" are accepted), so configs
are language-neutral and diff-friendly.  Reports are canonical JSON
(sorted keys, no timestamps): a rerun with the same config and seed is
byte-identical.

Exit codes: 0 pass, 1 certified-check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from fractions import Fraction

import jsonschema
import numpy as np

from . import rmt
from .ncalg import AlgebraSignature, NCPoly, TruncationLog
from .onevar import oracle_comparison
from .semitrace import tau_poly
from .solver import (
    ConditionCheckError,
    ConvergenceError,
    DivergenceError,
    SolverConfig,
    check_conditions,
    solve_transport,
)
from .verify import entropy_shift, entropy_shift_qroute, lemma_suite, sd_report


class ConfigError(ValueError):
    """Invalid or unparseable run configuration."""


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["signature", "solver", "potential"],
    "properties": {
        "signature": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "dmax"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "dmax": {"type": "integer", "minimum": 1},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["A", "Aprime", "rho"],
            "properties": {
                "A": {"type": "number"},
                "Aprime": {"type": "number"},
                "rho": {"type": "number"},
                "tol_fix": {"type": "number"},
                "max_iter": {"type": "integer", "minimum": 1},
                "tol_series": {"type": "number"},
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["terms"],
            "properties": {
                "terms": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "minItems": 2,
                        "maxItems": 2,
                        "prefixItems": [
                            {
                                "type": "array",
                                "items": {"type": "integer", "minimum": 1},
                            },
                            {"type": "string"},
                        ],
                        "items": False,
                    },
                },
                "beta": {"type": "number"},
            },
        },
        "seed": {"type": "integer"},
        "compute_inverse": {"type": "boolean"},
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "degree_cap": {"type": "integer", "minimum": 0},
                "lemma_trials": {"type": "integer", "minimum": 1},
                "residual_budget": {"type": "number"},
            },
        },
        "onevar": {
            "type": "object",
            "additionalProperties": False,
            "required": ["betas", "kmax"],
            "properties": {
                "betas": {"type": "array", "items": {"type": "number"}},
                "kmax": {"type": "integer", "minimum": 1},
                "order": {"type": "integer", "minimum": 1},
                "tol": {"type": "number"},
            },
        },
        "rmt": {
            "type": "object",
            "additionalProperties": False,
            "required": ["N", "gue_draws", "chain"],
            "properties": {
                "N": {"type": "integer", "minimum": 2},
                "gue_draws": {"type": "integer", "minimum": 2},
                "words": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 1},
                    },
                },
                "chain": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["step_size", "steps", "burn_in"],
                    "properties": {
                        "step_size": {"type": "number"},
                        "steps": {"type": "integer", "minimum": 1},
                        "burn_in": {"type": "integer", "minimum": 0},
                        "thin": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
    },
}


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(raw)


def validate_config(raw):
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    return raw


def build_signature(raw):
    return AlgebraSignature(raw["signature"]["n"], raw["signature"]["dmax"])


def build_solver_config(raw):
    s = raw["solver"]
    try:
        return SolverConfig(
            A=float(s["A"]),
            Aprime=float(s["Aprime"]),
            rho=float(s["rho"]),
            dmax=raw["signature"]["dmax"],
            tol_fix=float(s.get("tol_fix", 1e-13)),
            max_iter=int(s.get("max_iter", 200)),
            tol_series=float(s.get("tol_series", 1e-12)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_potential(raw, sig, float_backend=True):
    """Assemble W from (word, coefficient-string) pairs, beta-scaled."""
    beta = raw["potential"].get("beta", 1.0)
    mapping = {}
    for word, cstr in raw["potential"]["terms"]:
        try:
            c = Fraction(cstr)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad coefficient {cstr!r}") from exc
        w = tuple(word)
        mapping[w] = mapping.get(w, Fraction(0)) + c
    try:
        W = NCPoly.build(sig, mapping, float_backend=False)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if float_backend:
        return W.as_float().scale(float(beta))
    return W


def config_digest(raw):
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------


def _poly_summary(p, max_terms=None):
    terms = [[list(w), repr(float(c))] for w, c in p.iter_sorted()]
    if max_terms is not None:
        terms = terms[:max_terms]
    return terms


def _transport_report(result, cfg):
    rep = {
        "iterations": result.iterations,
        "final_delta": result.final_delta,
        "contraction_ratio_estimate": result.contraction_ratio_estimate,
        "hessian_pnorm_Aprime": result.hessian_pnorm,
        "truncation_loss_total": result.truncation_loss_total,
        "truncation_loss_by_degree": result.loss.as_dict() if result.loss else {},
        "certificates": {
            "conditions_passed": result.certified_conditions,
            "series_certified": result.series_certified,
            "monotone_certified": result.monotone_certified,
            "uncertified": result.uncertified,
        },
        "conditions": result.conditions.as_dict(),
        "norms": {
            "g_norm_A": float(result.g.norm_a(cfg.A)),
            "ghat_norm_A": float(result.ghat.norm_a(cfg.A)),
            "f_norm_Aprime": float(result.f.norm_a(cfg.Aprime)),
        },
        "g_terms": _poly_summary(result.g),
        "f_terms": [_poly_summary(p) for p in result.f],
    }
    if result.H is not None:
        rep["inverse_residual"] = result.inverse_residual
        rep["h_terms"] = [_poly_summary(p) for p in result.H]
    return rep


def write_report(report, out_path):
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_check(raw, seed=None, override=False):
    sig = build_signature(raw)
    cfg = build_solver_config(raw)
    W = build_potential(raw, sig)
    report = check_conditions(W, cfg)
    payload = {
        "command": "check",
        "config_digest": config_digest(raw),
        "conditions": report.as_dict(),
    }
    return (0 if report.passed else 1), payload


def cmd_solve(raw, seed=None, override=False):
    sig = build_signature(raw)
    cfg = build_solver_config(raw)
    W = build_potential(raw, sig)
    try:
        result = solve_transport(
            W,
            cfg,
            override_conditions=override,
            compute_inverse=raw.get("compute_inverse", False),
        )
    except (ConditionCheckError, ConvergenceError, DivergenceError) as exc:
        payload = {
            "command": "solve",
            "config_digest": config_digest(raw),
            "error": str(exc),
        }
        if isinstance(exc, ConditionCheckError):
            payload["conditions"] = exc.report.as_dict()
        if isinstance(exc, ConvergenceError):
            payload["deltas"] = exc.deltas
        return 1, payload
    payload = {
        "command": "solve",
        "config_digest": config_digest(raw),
        "transport": _transport_report(result, cfg),
    }
    code = 0 if (result.certified_conditions or override) else 1
    return code, payload


def cmd_verify(raw, seed=None, override=False):
    sig = build_signature(raw)
    cfg = build_solver_config(raw)
    W = build_potential(raw, sig)
    vconf = raw.get("verify", {})
    seed = seed if seed is not None else raw.get("seed", 0)
    try:
        result = solve_transport(W, cfg, override_conditions=override)
    except (ConditionCheckError, ConvergenceError, DivergenceError) as exc:
        return 1, {
            "command": "verify",
            "config_digest": config_digest(raw),
            "error": str(exc),
        }
    sd = sd_report(
        result.Y, W, degree_cap=vconf.get("degree_cap", 3), loss=result.loss
    )
    shift = entropy_shift(result.g, cfg)
    shift_second = entropy_shift_qroute(result.g, cfg)
    lemmas = lemma_suite(seed=seed, trials=vconf.get("lemma_trials", 50))
    ok = lemmas.all_passed
    budget = vconf.get("residual_budget")
    residual_ok = True
    if budget is not None:
        residual_ok = sd.max_residual <= budget + result.loss.norm(cfg.A)
        ok = ok and residual_ok
    payload = {
        "command": "verify",
        "config_digest": config_digest(raw),
        "transport": {
            "iterations": result.iterations,
            "certificates": {
                "conditions_passed": result.certified_conditions,
                "series_certified": result.series_certified,
                "monotone_certified": result.monotone_certified,
            },
            "truncation_loss_total": result.truncation_loss_total,
        },
        "schwinger_dyson": sd.as_dict(),
        "residual_within_budget": residual_ok,
        "entropy_shift": {
            "series_value": shift.value,
            "first_order_term": shift.first_order,
            "tail_bound": shift.tail_bound,
            "second_route_value": shift_second,
            "route_gap": abs(shift.value - shift_second),
        },
        "lemma_suite": lemmas.as_dict(),
    }
    return (0 if ok else 1), payload


def cmd_onevar(raw, seed=None, override=False):
    if "onevar" not in raw:
        raise ConfigError("command onevar needs an 'onevar' config block")
    oconf = raw["onevar"]
    cfg = build_solver_config(raw)
    sig = build_signature(raw)
    if sig.n != 1:
        raise ConfigError("onevar needs signature n = 1")
    W = build_potential(raw, sig)
    if raw["potential"].get("beta", 1.0) != 1.0:
        raise ConfigError("onevar scales beta itself; set potential.beta = 1")
    w_unit = np.zeros(sig.dmax + 1)
    for word, c in W.terms.items():
        w_unit[len(word)] = float(c)
    rows = oracle_comparison(
        oconf["betas"], w_unit, oconf["kmax"], cfg, order=oconf.get("order", 8)
    )
    tol = oconf.get("tol")
    worst = max((r[4] for r in rows), default=0.0)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["beta", "k", "moment_transport", "moment_oracle", "abs_diff"])
    for r in rows:
        writer.writerow([repr(r[0]), r[1], repr(r[2]), repr(r[3]), repr(r[4])])
    payload = {
        "command": "onevar",
        "config_digest": config_digest(raw),
        "csv": buf.getvalue(),
        "worst_abs_diff": worst,
        "tol": tol,
    }
    code = 0 if (tol is None or worst <= tol) else 1
    return code, payload


def cmd_rmt(raw, seed=None, override=False):
    if "rmt" not in raw:
        raise ConfigError("command rmt needs an 'rmt' config block")
    rconf = raw["rmt"]
    sig = build_signature(raw)
    cfg = build_solver_config(raw)
    W = build_potential(raw, sig)
    seed = seed if seed is not None else raw.get("seed", 0)
    chain = rmt.ChainConfig(
        step_size=float(rconf["chain"]["step_size"]),
        steps=int(rconf["chain"]["steps"]),
        burn_in=int(rconf["chain"]["burn_in"]),
        thin=int(rconf["chain"].get("thin", 1)),
        seed=seed,
    )
    words = [tuple(w) for w in rconf.get("words", [])] or None
    try:
        report = rmt.transport_compare(
            W,
            cfg,
            N=int(rconf["N"]),
            gue_draws=int(rconf["gue_draws"]),
            chain=chain,
            words=words,
            seed=seed,
            override_conditions=override,
        )
    except (ConditionCheckError, ConvergenceError, DivergenceError) as exc:
        return 1, {
            "command": "rmt",
            "config_digest": config_digest(raw),
            "error": str(exc),
        }
    payload = {
        "command": "rmt",
        "config_digest": config_digest(raw),
        "compare": report.as_dict(),
        "within_3_sigma": all(s.diff <= 3 * s.pooled_sigma for s in report.stats),
    }
    return 0, payload


def cmd_selftest(raw=None, seed=None, override=False):
    seed = seed if seed is not None else 0
    lemmas = lemma_suite(seed=seed)
    trivial = _selftest_trace_checks()
    ok = lemmas.all_passed and trivial["passed"]
    payload = {
        "command": "selftest",
        "seed": seed,
        "lemma_suite": lemmas.as_dict(),
        "trace_checks": trivial,
    }
    return (0 if ok else 1), payload


def _selftest_trace_checks():
    from .semitrace import catalan, tau

    checks = []
    checks.append(("tau_x4", tau((1, 1, 1, 1)) == 2))
    checks.append(("tau_alternating", tau((1, 2, 1, 2)) == 0))
    checks.append(("tau_nested", tau((1, 2, 2, 1)) == 1))
    checks.append(
        ("catalan_diagonal", all(tau((1,) * (2 * k)) == catalan(k) for k in range(9)))
    )
    rotations_ok = True
    for length in range(2, 9):
        for code in range(2 ** length):
            w = tuple(1 + ((code >> i) & 1) for i in range(length))
            t0 = tau(w)
            if any(tau(w[r:] + w[:r]) != t0 for r in range(1, length)):
                rotations_ok = False
    checks.append(("trace_cyclic_invariance", rotations_ok))
    bound_ok = all(
        abs(tau(tuple(1 + ((code >> i) & 1) for i in range(length)))) <= 2 ** length
        for length in range(0, 13, 2)
        for code in range(2 ** length)
    )
    checks.append(("moment_growth_bound", bound_ok))
    return {
        "passed": all(ok for _, ok in checks),
        "checks": [{"name": n, "passed": ok} for n, ok in checks],
    }


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "onevar": cmd_onevar,
    "rmt": cmd_rmt,
    "selftest": cmd_selftest,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="freetransport",
        description="free monotone transport engine: solve, verify, compare",
    )
    parser.add_argument("--config", help="path to the JSON run configuration")
    parser.add_argument("--command", required=True, choices=sorted(COMMANDS))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="report path (default stdout)")
    parser.add_argument(
        "--override-conditions",
        action="store_true",
        help="run outside the certified region; results are flagged uncertified",
    )
    args = parser.parse_args(argv)

    try:
        if args.command == "selftest":
            raw = load_config(args.config) if args.config else None
        else:
            if not args.config:
                raise ConfigError(f"command {args.command} requires --config")
            raw = load_config(args.config)
        code, payload = COMMANDS[args.command](
            raw, seed=args.seed, override=args.override_conditions
        )
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    if args.override_conditions:
        payload["override_conditions"] = True
    write_report(payload, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
