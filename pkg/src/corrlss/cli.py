"""Command-line surface.

Subcommands wrap the formula evaluators and Monte Carlo experiments; every
run writes deterministic artifacts named {experiment}-{seed}-{hash(config)}
into --out and prints a one-line summary. Exit codes: 0 pass, 2 acceptance
failure, 1 error.

Config files are TOML with nested sections, e.g.

    [law]
    family = "tail"        # or "normal"
    alpha = 3.5
    l = "const"            # or "logpow"
    l_param = 1.0
    symmetric = true

    [run]
    n = 300
    p = 150
    f = "x^2"
    replicates = 2000
    seed = 42
    workers = 4

Inline overrides use dotted keys: corrlss simulate --config run.toml run.n=400
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from typing import Optional

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import reporting
from .clt_target import TestFunction, clt_target_for
from .experiments import (
    Convention,
    ExperimentConfig,
    gdm_experiment,
    local_law_experiment,
    mp_fit_calibration,
    phase_transition_sweep,
    quadratic_concentration_experiment,
    run_clt_experiment,
)
from .mp_law import AspectRatio, mp_density, mp_edges, mp_stieltjes
from .resampling import ControlParams, decompose, diag_decompose, diag_s_diagnostics, well_configured
from .tail_sampler import (
    Const,
    LogPower,
    NormalLaw,
    TailLaw,
    asymptotic_even_moment,
    moment_table,
    sample_matrix,
)

_KNOWN_SECTIONS = {
    "law": {"family", "alpha", "l", "l_param", "symmetric", "x0", "tail_split", "core"},
    "run": {"n", "p", "f", "replicates", "seed", "workers", "convention", "mc_moment_columns"},
    "sweep": {"alphas", "n_grid", "l_choices"},
    "gdm": {"t"},
    "locallaw": {"n_grid", "replicates"},
    "quadratic": {"a_kind", "z"},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# polynomial parser: real coefficients, integer powers, e.g. "2*x^3 + x - 0.5"
# ---------------------------------------------------------------------------

def parse_polynomial(text: str) -> TestFunction:
    s = text.replace(" ", "")
    if not s:
        raise ConfigError("empty polynomial")
    # split into signed terms, keeping exponent signs intact
    terms = re.findall(r"[+-]?[0-9.eE]*\*?x(?:\^[0-9]+)?|[+-]?[0-9.eE]+", s)
    if "".join(terms).replace("+", "", 1) not in (s, s.lstrip("+")):
        if "".join(terms) != s:
            raise ConfigError(f"cannot parse polynomial {text!r}")
    coeffs: dict[int, float] = {}
    for term in terms:
        if not term:
            continue
        if "x" in term:
            head, _, tail = term.partition("x")
            head = head.rstrip("*")
            if head in ("", "+"):
                c = 1.0
            elif head == "-":
                c = -1.0
            else:
                c = float(head)
            k = int(tail[1:]) if tail.startswith("^") else 1
        else:
            c = float(term)
            k = 0
        coeffs[k] = coeffs.get(k, 0.0) + c
    deg = max(coeffs)
    vec = [coeffs.get(k, 0.0) for k in range(deg + 1)]
    return TestFunction.polynomial(vec, label=text.strip())


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def _load_config(path: Optional[str], overrides: list[str]) -> dict:
    cfg: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                cfg = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        parts = key.split(".")
        node = cfg
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        try:
            node[parts[-1]] = json.loads(raw)
        except json.JSONDecodeError:
            node[parts[-1]] = raw
    for section, keys in cfg.items():
        if section not in _KNOWN_SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if isinstance(keys, dict):
            for k in keys:
                if k not in _KNOWN_SECTIONS[section]:
                    raise ConfigError(f"unknown key {section}.{k!r}")
    return cfg


def _slowly_varying(name: str, param: float):
    if name == "const":
        return Const(param)
    if name == "logpow":
        return LogPower(param)
    raise ConfigError(f"unknown slowly varying family {name!r}")


def _law_from(cfg: dict):
    law_cfg = cfg.get("law", {})
    family = law_cfg.get("family", "normal")
    if family == "normal":
        return NormalLaw()
    if family == "tail":
        return TailLaw.build(
            alpha=float(law_cfg.get("alpha", 3.5)),
            slowly_varying=_slowly_varying(law_cfg.get("l", "const"), float(law_cfg.get("l_param", 1.0))),
            symmetric=bool(law_cfg.get("symmetric", True)),
            x0=float(law_cfg.get("x0", 3.0)),
            tail_split=law_cfg.get("tail_split"),
        )
    raise ConfigError(f"unknown law family {family!r}")


def _experiment_config(cfg: dict, args) -> ExperimentConfig:
    run = cfg.get("run", {})
    n = int(run.get("n", getattr(args, "n", None) or 0))
    p = int(run.get("p", getattr(args, "p", None) or 0) or max(2, round(n / 2)))
    if n <= 0:
        raise ConfigError("run.n (or --n) is required")
    f_spec = run.get("f", getattr(args, "f", None) or "x^2")
    seed = int(run.get("seed", getattr(args, "seed", None) or 42))
    conv = {c.value: c for c in Convention}[run.get("convention", "Auto")]
    return ExperimentConfig(
        n=n,
        p=p,
        law=_law_from(cfg),
        f=parse_polynomial(f_spec),
        replicates=int(run.get("replicates", getattr(args, "replicates", None) or 200)),
        master_seed=seed,
        convention=conv,
        workers=int(run.get("workers", getattr(args, "workers", None) or 1)),
        mc_moment_columns=int(run.get("mc_moment_columns", 20_000)),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_mp(args) -> int:
    ratio = AspectRatio(phi=args.phi)
    if args.x is not None:
        dens, atom = mp_density(args.x, ratio)
        print(f"mp density phi={args.phi} x={args.x}: {dens:.6f} (atom at 0: {atom:.6f})")
        return 0
    lm, lp = mp_edges(ratio)
    if args.z is not None:
        re_z, im_z = (float(v) for v in args.z.split(","))
        sv = mp_stieltjes(complex(re_z, im_z), ratio)
        print(
            f"mp stieltjes phi={args.phi} z={sv.z}: m={sv.m:.8f} m_under={sv.m_under:.8f} "
            f"residual={sv.residual:.2e}"
        )
        return 0
    print(f"mp edges phi={args.phi}: ({lm:.6f}, {lp:.6f})")
    return 0


def _cmd_clt_target(args) -> int:
    n = args.n
    p = args.p or round(n / args.phi)
    ratio = AspectRatio.from_dims(n, p)
    f = parse_polynomial(args.f)
    target = clt_target_for(f, ratio)
    print(target.to_json())
    ok = target.sigma2_f >= 0 and abs(target.diagnostics["a_f_offset"]) < 0.05 * (1 + abs(target.a_f))
    print(f"clt-target f={f.label} phi={args.phi}: a_f={target.a_f:.6f} sigma2_f={target.sigma2_f:.6f} "
          f"{'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


def _cmd_calibrate(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    result = mp_fit_calibration(config)
    path = reporting.write_report(
        result.to_payload(), args.out, "calibrate", config.master_seed, config.resolved()
    )
    ks = result.ks_by_convention
    print(f"calibrate n={config.n} p={config.p}: winner={result.convention.value} ks={ks} -> {path}")
    return 0


def _cmd_simulate(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    report = run_clt_experiment(config)
    payload = report.to_payload()
    path = reporting.write_report(payload, args.out, "clt", config.master_seed, config.resolved())
    reporting.write_csv(
        [(i, float(s * np.sqrt(report.sigma2_f) + report.a_f), float(s)) for i, s in enumerate(report.samples)],
        ["replicate", "lss", "standardized"],
        args.out,
        "clt-samples",
        config.master_seed,
        config.resolved(),
    )
    reporting.write_csv(
        [(float(a), float(b)) for a, b in report.qq],
        ["normal_quantile", "sample_quantile"],
        args.out,
        "clt-qq",
        config.master_seed,
        config.resolved(),
    )
    ok = report.ks_normal < 0.1 and 0.5 < report.emp_var < 1.5
    print(
        f"clt f={config.f.label} n={config.n} p={config.p} reps={config.replicates}: "
        f"ks={report.ks_normal:.4f} mean={report.emp_mean:+.4f} var={report.emp_var:.4f} "
        f"runtime={report.runtime:.1f}s {'pass' if ok else 'FAIL'} -> {path}"
    )
    return 0 if ok else 2


def _cmd_sweep(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    sweep_cfg = cfg.get("sweep", {})
    alphas = sweep_cfg.get("alphas", [2.5, 3.0, 3.5])
    n_grid = sweep_cfg.get("n_grid", [config.n])
    l_specs = sweep_cfg.get("l_choices", ["const:1"])
    l_choices = []
    for spec in l_specs:
        name, _, par = str(spec).partition(":")
        l_choices.append(_slowly_varying(name, float(par or 1.0)))
    rows = phase_transition_sweep(alphas, l_choices, n_grid, config)
    reporting.write_csv(
        [r.as_tuple() for r in rows],
        ["alpha", "l", "n", "p", "emp_var", "universal", "excess", "excess_stderr", "ratio", "classification"],
        args.out,
        "sweep",
        config.master_seed,
        config.resolved(),
    )
    summary = "; ".join(f"a={r.alpha} l={r.l_label} n={r.n} ratio={r.ratio:.2f}" for r in rows)
    print(f"sweep: {summary}")
    return 0


def _cmd_gdm(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    t = float(cfg.get("gdm", {}).get("t", args.t))
    report = gdm_experiment(config, t)
    path = reporting.write_report(report.to_payload(), args.out, "gdm", config.master_seed, config.resolved())
    reporting.write_csv(
        [(float(a), float(b)) for a, b in report.density_table],
        ["E", "rho_t"],
        args.out,
        "gdm-density",
        config.master_seed,
        config.resolved(),
    )
    ok = report.ks < 0.1
    print(
        f"gdm n={config.n} t={t}: ks={report.ks:.4f} lambda+={report.lambda_plus:.4f} "
        f"lambda1={report.lambda_1:.4f} runtime={report.runtime:.1f}s {'pass' if ok else 'FAIL'} -> {path}"
    )
    return 0 if ok else 2


def _cmd_locallaw(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    ll_cfg = cfg.get("locallaw", {})
    n_grid = tuple(ll_cfg.get("n_grid", [200, 400, 800]))
    reps = int(ll_cfg.get("replicates", 50))
    result = local_law_experiment(config, n_grid=n_grid, replicates=reps)
    reporting.write_csv(
        [(r.kind, r.n, r.avg_dev, r.offdiag_max) for r in result["rows"]],
        ["kind", "n", "avg_dev", "offdiag_max"],
        args.out,
        "locallaw",
        config.master_seed,
        config.resolved(),
    )
    sl = result["slopes"]
    print(f"locallaw slopes: {json.dumps(sl, sort_keys=True)}")
    return 0


def _cmd_moments(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    law = config.law
    if isinstance(law, NormalLaw):
        raise ConfigError("moments needs a tail law")
    pred = asymptotic_even_moment(law.alpha, 2, config.n, law)
    table = moment_table(law, config.n, mc_columns=config.mc_moment_columns, seed=config.master_seed)
    b4 = table.beta["4"]
    rel = abs(b4 - pred) / pred
    print(
        f"moments alpha={law.alpha} n={config.n}: EY4_mc={b4:.4e} EY4_asym={pred:.4e} "
        f"rel_dev={rel:.3f} {'pass' if rel < 0.15 else 'FAIL'}"
    )
    return 0 if rel < 0.15 else 2


def _cmd_decompose(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    law = config.law
    if isinstance(law, NormalLaw):
        raise ConfigError("decompose needs a tail law")
    X = sample_matrix(law, config.n, config.p, config.master_seed)
    params = ControlParams.defaults(law.alpha)
    dec = decompose(X, params)
    diag = diag_decompose(X, params)
    psi_ok, pi_ok, counts = well_configured(dec, diag, params, config.n)
    dev, bound, passed = diag_s_diagnostics(X, 1, law.alpha)
    exact = bool(np.array_equal(dec.L + dec.M + dec.H, X.T))
    payload = {
        "experiment": "decompose",
        "counts": counts,
        "psi_ok": psi_ok,
        "pi_ok": pi_ok,
        "thresholds": list(dec.thresholds),
        "exact_reconstruction": exact,
        "diag_trace_dev": dev,
        "diag_bound": bound,
        "diag_pass": passed,
        "config": config.resolved(),
    }
    path = reporting.write_report(payload, args.out, "decompose", config.master_seed, config.resolved())
    ok = exact and psi_ok and passed
    print(
        f"decompose n={config.n} alpha={law.alpha}: psi_ones={counts['psi_ones']} "
        f"exact={exact} diag_pass={passed} {'pass' if ok else 'FAIL'} -> {path}"
    )
    return 0 if ok else 2


def _cmd_quadratic(args, cfg) -> int:
    config = _experiment_config(cfg, args)
    q_cfg = cfg.get("quadratic", {})
    result = quadratic_concentration_experiment(
        config, a_kind=q_cfg.get("a_kind", args.a_kind), z=float(q_cfg.get("z", 0.0))
    )
    path = reporting.write_report(
        {"experiment": "quadratic", **result, "config": config.resolved()},
        args.out,
        "quadratic",
        config.master_seed,
        config.resolved(),
    )
    print(
        f"quadratic A={result['a_kind']} n={result['n']}: E|Delta|^2={result['e_delta_sq']:.3e} "
        f"bound={result['bound']:.3e} {'pass' if result['passed'] else 'FAIL'} -> {path}"
    )
    return 0 if result["passed"] else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrlss",
        description="Linear spectral statistics of sample correlation matrices: "
        "theory evaluators and Monte Carlo experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("--out", default="out", help="output directory for artifacts")
        if needs_config:
            sp.add_argument("--config", default=None, help="TOML config file")
            sp.add_argument("overrides", nargs="*", help="inline key=value overrides (dotted keys)")
            sp.add_argument("--n", type=int, default=None)
            sp.add_argument("--p", type=int, default=None)
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--replicates", type=int, default=None)
            sp.add_argument("--workers", type=int, default=None)
            sp.add_argument("--f", default=None, help="test function, e.g. x^2")

    sp = sub.add_parser("mp", help="Marchenko-Pastur density / edges / transform")
    sp.add_argument("--phi", type=float, required=True)
    sp.add_argument("--x", type=float, default=None, help="evaluate the density at x")
    sp.add_argument("--z", default=None, help="evaluate m(z) at z given as re,im")
    sp.set_defaults(func=lambda a, c: _cmd_mp(a), needs_config=False)

    sp = sub.add_parser("clt-target", help="evaluate a_f and sigma_f^2")
    sp.add_argument("--phi", type=float, required=True)
    sp.add_argument("--f", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=int, default=None)
    sp.set_defaults(func=lambda a, c: _cmd_clt_target(a), needs_config=False)

    for name, fn, extra in (
        ("calibrate", _cmd_calibrate, None),
        ("simulate", _cmd_simulate, None),
        ("sweep", _cmd_sweep, None),
        ("gdm", _cmd_gdm, "t"),
        ("locallaw", _cmd_locallaw, None),
        ("moments", _cmd_moments, None),
        ("decompose", _cmd_decompose, None),
        ("quadratic", _cmd_quadratic, "a_kind"),
    ):
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        common(sp)
        if extra == "t":
            sp.add_argument("--t", type=float, default=0.1)
        if extra == "a_kind":
            sp.add_argument("--a-kind", dest="a_kind", default="alternating",
                            choices=["identity", "alternating", "resolvent"])
        sp.set_defaults(func=fn, needs_config=True)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(getattr(args, "config", None), getattr(args, "overrides", []) or []) \
            if getattr(args, "needs_config", False) else {}
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
