"""Command-line driver.

Every subcommand reads the shared JSON config (``--config``), derives all
randomness from one seed and writes its payloads either to stdout or into
the directory given by ``--out``. Payloads carry no timestamps, so reruns
with the same config and seed are byte-identical.

Exit codes: 0 ok, 1 property failure, 2 config error, 3 budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, dump_config, load_config, loads_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
DEMOS = ("convnls_zero", "convnls_random", "fractional")


class Failure(Exception):
    """A checked property did not hold; carries the report to emit."""

    def __init__(self, msg, payloads=None):
        super().__init__(msg)
        self.payloads = payloads or {}


# ----------------------------------------------------------------------------
# serialization


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def to_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def to_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow(["" if r.get(c) is None else (repr(float(r[c])) if isinstance(r[c], (float, np.floating))
                                                   else r[c]) for c in columns])
    return buf.getvalue()


def table_payload(name: str, rows: list[dict], fmt: str, columns=None) -> tuple[str, str]:
    if fmt == "csv":
        return f"{name}.csv", to_csv(rows, columns)
    return f"{name}.json", to_json(rows)


# ----------------------------------------------------------------------------
# commands; each returns {filename: text}


def cmd_verify(cfg: RunConfig, jobs: int = 1) -> dict:
    from .lattice import ModeTable
    from .normalform import solve_homological
    from .polyalg import bracket_identities, poisson, quadratic_polynomial, random_polynomial
    from .spectrum import check_A1, check_A3, verify_A2_bound
    from .stability import ledger_for_model
    from .weights import check_A0

    vb = cfg.verify
    model, w = cfg.build_model(), cfg.build_weight()
    rng = np.random.default_rng(cfg.seed)
    report = {}
    a0 = check_A0(w, vb.a0_d_max, vb.a0_samples, cfg.seed)
    report["A0"] = a0.as_dict()
    report["A1"] = check_A1(model, vb.j_min, vb.K_max).as_dict()
    if vb.check_A3:
        report["A3"] = check_A3(model, cfg.build_partition(), vb.K_max).as_dict()
    ledger = ledger_for_model(model, w)
    report["A2"] = verify_A2_bound(model, vb.N, vb.d_max, ledger).as_dict()

    table = ModeTable(model.dim, cfg.lattice.K_max)
    worst_jac, anti, law, mom = 0.0, True, True, True
    for _ in range(vb.bracket_samples):
        P, Q, R = (random_polynomial(table, [int(rng.integers(2, 5))], rng, density=0.3) for _ in range(3))
        res = bracket_identities(P, Q, R)
        worst_jac = max(worst_jac, res["jacobi"])
        anti &= res["antisymmetric"]
        law &= res["degree_law"]
        mom &= res["momentum"]
    report["bracket"] = {"passed": bool(anti and law and mom and worst_jac < 1e-12), "samples": vb.bracket_samples,
                         "antisymmetric": anti, "jacobi_max_rel": worst_jac, "degree_law": law,
                         "momentum": mom}

    exact = model.exact
    H0 = quadratic_polynomial(table, model.omega_table(table), exact=exact)
    worst, ok = 0.0, True
    N = min(vb.N, cfg.lattice.K_max)
    for _ in range(vb.homological_samples):
        P = random_polynomial(table, [3, 4], rng, exact=exact, density=0.5)
        G, Z = solve_homological(P, model, N)
        D = poisson(H0, G) + P - Z
        if exact:
            ok &= D.is_zero()
        else:
            worst = max(worst, D.C_P() / max(P.C_P(), 1e-300))
    report["homological"] = {"passed": bool(ok and worst < 1e-12), "samples": vb.homological_samples,
                             "exact": exact, "max_rel_residual": worst}
    passed = all(v["passed"] for v in report.values())
    report["passed"] = passed
    out = {"verify.json": to_json(report)}
    if not passed:
        bad = [k for k, v in report.items() if isinstance(v, dict) and not v["passed"]]
        raise Failure("property failure: " + ", ".join(bad), out)
    return out


def _perturbation(cfg: RunConfig, model):
    from .lattice import ModeTable
    from .polyalg import random_polynomial

    nb = cfg.normalform
    table = ModeTable(model.dim, cfg.lattice.K_max)
    rng = np.random.default_rng(cfg.seed)
    P = random_polynomial(table, nb.degrees, rng, density=nb.density, real=True)
    return P.scale(nb.C_P / P.C_P()) if P else P


def cmd_normalform(cfg: RunConfig, jobs: int = 1) -> dict:
    from .normalform import birkhoff_iterate, flow_residual
    from .polyalg import HamiltonianSpec
    from .stability import bound_chain, ledger_for_model

    nb = cfg.normalform
    model, w = cfg.build_model(), cfg.build_weight()
    P = _perturbation(cfg, model)
    H = HamiltonianSpec(model, P)
    ledger = ledger_for_model(model, w, C_P=nb.C_P, s0=w.s0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = birkhoff_iterate(H, nb.N, nb.d, nb.r, w, ledger=ledger, partition=cfg.build_partition(),
                               override_gate=nb.override_gate,
                               explicit_remainder_degree=nb.explicit_remainder_degree, budget=nb.budget)
    payload = out.as_dict(include_polynomials=True)
    payload["model"] = model.describe()
    payload["perturbation"] = P.to_json()
    residual = None
    if nb.oracle_samples:
        res = flow_residual(H, out, nb.oracle_samples, cfg.seed)
        residual = res["max"]
        payload["oracle"] = {"per_degree": {str(k): v for k, v in res["per_degree"].items()},
                             "max": res["max"], "samples": res["samples"], "tol": nb.residual_tol}
    bounds = [dict(b.__dict__) for b in bound_chain(ledger, nb.r, nb.d, nb.N)]
    payload["bounds"] = bounds
    files = {"normalform.json": to_json(payload)}
    name, text = table_payload("bounds", bounds, cfg.format)
    files[name] = text
    name, text = table_payload("trace", [t.as_dict() for t in out.trace], cfg.format)
    files[name] = text
    if residual is not None and residual >= nb.residual_tol:
        raise Failure(f"flow oracle residual {residual:.3g} >= {nb.residual_tol:g}", files)
    return files


def cmd_stability(cfg: RunConfig, jobs: int = 1) -> dict:
    from .stability import ledger_for_model, predict_time

    sb = cfg.stability
    model, w = cfg.build_model(), cfg.build_weight()
    ledger = ledger_for_model(model, w, C_P=sb.C_P, s0=w.s0)
    rows = []
    cols = ["eps", "log_eps", "d", "N", "log_N", "abs_log_r", "log_T", "log_T_s", "regime", "scaling", "a",
            "capped"]
    for le in sb.log_eps:
        try:
            rows.append(predict_time(w, model.params.p, None, ledger, log_eps=le, d_min=sb.d_min,
                                     d_max=sb.d_max, log_eps0=sb.log_eps0).row())
        except ValueError:
            rows.append({"eps": math.exp(le) if le > -745 else 0.0, "log_eps": le, "regime": "above_eps0"})
    name, text = table_payload("stability", rows, cfg.format, cols)
    return {name: text}


def cmd_measure(cfg: RunConfig, jobs: int = 1) -> dict:
    from .measure import resonant_fraction

    mb = cfg.measure
    fam = cfg.build_family()
    rows = []
    for i, g in enumerate(mb.gammas):
        rf = resonant_fraction(fam, g, mb.N, mb.d, mb.samples, cfg.seed + i, exponent=mb.exponent, jobs=jobs)
        rows.append(rf.row())
    name, text = table_payload("measure", rows, cfg.format)
    files = {name: text}
    pos = [(math.log(r["gamma"]), math.log(r["fraction"])) for r in rows if r["fraction"] > 0]
    if len(pos) >= 2:
        x, y = zip(*pos)
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = None
    files["measure_summary.json"] = to_json({"family": fam.as_dict(), "slope": slope, "rows": rows})
    return files


def _sim_config(cfg: RunConfig):
    from .simulator import SimConfig

    sb = cfg.simulate
    return SimConfig(cfg.build_model(), sb.nonlinearity, sb.K, sb.dt, sb.T_end, cfg.build_weight(),
                     seed=cfg.seed, record_stride=sb.record_stride, N_split=sb.N_split)


def cmd_simulate(cfg: RunConfig, jobs: int = 1) -> dict:
    from .simulator import Integrator, escape_experiment, initial_state, run
    from .stability import ledger_for_model

    sb = cfg.simulate
    sc = _sim_config(cfg)
    itg = Integrator(sc)
    u0 = initial_state(sc, sb.eps, support=sb.support, integrator=itg)
    try:
        tr = run(sc, u0, itg)
    except ValueError as exc:
        raise ConfigError(f"field 'simulate.dt': {exc}") from None
    files = {}
    if cfg.format == "csv":
        files["trajectory.csv"] = tr.to_csv()
    else:
        files["trajectory.json"] = to_json(tr.rows())
    summary = tr.summary()
    if sb.eps_grid:
        ledger = ledger_for_model(sc.model, sc.w, s0=sc.w.s0)
        rows = escape_experiment(sc, sb.eps_grid, ledger, threshold=sb.threshold, jobs=jobs,
                                 log_eps0=sb.log_eps0, support=sb.support)
        name, text = table_payload("escape", rows, cfg.format)
        files[name] = text
    files["simulate_summary.json"] = to_json(summary)
    return files


def load_demo(name: str) -> RunConfig:
    if name not in DEMOS:
        raise ConfigError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")
    text = resources.files("nekhoroshev").joinpath("demos", f"{name}.json").read_text()
    return loads_config(text)


def cmd_demo(cfg: RunConfig, jobs: int = 1) -> dict:
    """Normal form, stability table, measure sweep and a short run on one config."""
    files = {}
    for prefix, fn in (("normalform", cmd_normalform), ("stability", cmd_stability),
                       ("measure", cmd_measure), ("simulate", cmd_simulate)):
        for name, text in fn(cfg, jobs).items():
            files[name if name.startswith(prefix) else f"{prefix}_{name}"] = text
    return files


COMMANDS = {"verify": cmd_verify, "normalform": cmd_normalform, "stability": cmd_stability,
            "measure": cmd_measure, "simulate": cmd_simulate, "demo": cmd_demo}


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nekhoroshev", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", metavar="PATH", help="output directory (stdout when omitted)")
    common.add_argument("--format", choices=("csv", "json"), help="table format (overrides config)")
    common.add_argument("--jobs", type=int, default=1, help="worker cap for parallel sections")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "demo":
            p.add_argument("name", nargs="?", default=DEMOS[0], help=f"shipped demo: {', '.join(DEMOS)}")
        if name == "verify":
            p.add_argument("--dump-config", action="store_true", help="print the canonical config and exit")
    return ap


def _emit(files: dict, out: str | None) -> None:
    if out is None:
        for name in sorted(files):
            sys.stdout.write(f"== {name}\n{files[name]}")
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (d / name).write_text(text)


def main(argv=None) -> int:
    from .spectrum import BudgetExceeded

    args = build_parser().parse_args(argv)
    try:
        if args.command == "demo" and args.config is None:
            cfg = load_demo(args.name)
        else:
            cfg = load_config(args.config)
        update = {}
        if args.seed is not None:
            update["seed"] = args.seed
        if args.format is not None:
            update["format"] = args.format
        if update:
            cfg = cfg.model_copy(update=update)
        if getattr(args, "dump_config", False):
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.jobs < 1:
            raise ConfigError("flag '--jobs' must be >= 1")
        files = COMMANDS[args.command](cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}; lower the degree, cutoff or K_max, or raise the budget",
              file=sys.stderr)
        return EXIT_BUDGET
    except Failure as exc:
        _emit(exc.payloads, args.out)
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # gate, small-divisor and simulation errors are property failures
        from .normalform import GateError, SmallDivisorError
        from .simulator import SimulationError

        if isinstance(exc, (GateError, SmallDivisorError, SimulationError)):
            hint = "; set normalform.override_gate or reduce r" if isinstance(exc, GateError) else ""
            print(f"failed: {exc}{hint}", file=sys.stderr)
            return EXIT_FAIL
        if isinstance(exc, ValueError):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    _emit(files, args.out)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
