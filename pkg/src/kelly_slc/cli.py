"""kelly-slc: validate, analyze, simulate and sweep betting scenarios from JSON files.

Exit codes: 0 ok, 2 invalid scenario, 3 parse error, 4 undetermined verdict, 5 ruin.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from .core import Box, Channel, Issue, Scenario, StrategyMatrix, ValidationError, validate_scenario
from .decomposition import NoDecomposition, SolveFailure, decompose
from .infotheory import channel_capacity, mutual_information, output_marginal
from .optimality import TrivialRateZero, Undetermined, classify_scenario
from .simulate import RuinEncountered, SimConfig, run_races, write_trajectory_csv
from .strategy import growth_report, optimize_strategy

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_UNDETERMINED, EXIT_RUIN = 0, 2, 3, 4, 5
SCHEMA = 1
SWEEP_COLUMNS = ["parameter", "verdict", "c", "lambda", "lambda_pi", "lambda_nsi", "delta", "gamma", "mutual_information"]

_TOP = {"prior", "channel", "reward", "cost", "constraints", "simulation"}
_SUB = {"cost": {"c1", "rho1"}, "constraints": {"lo", "hi"}, "simulation": {"n_races", "seed"}}


class ParseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scenario files


def _number(x, where: str, issues: list) -> float:
    if isinstance(x, bool):
        issues.append(Issue("BadValue", "boolean where a number is expected", (where,)))
        return math.nan
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    issues.append(Issue("BadValue", f"{x!r} is not a number", (where,)))
    return math.nan


def _array(x, depth: int, where: str, issues: list):
    if depth == 0:
        return _number(x, where, issues)
    if not isinstance(x, list):
        issues.append(Issue("BadValue", "expected an array", (where,)))
        return None
    out = [_array(v, depth - 1, f"{where}[{i}]", issues) for i, v in enumerate(x)]
    return None if any(v is None for v in out) else out


def parse_scenario(doc) -> tuple[Scenario, dict]:
    """Build a scenario from a decoded document; returns it with the optional simulation block."""
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    issues: list[Issue] = []
    for key in sorted(set(doc) - _TOP):
        issues.append(Issue("UnknownField", key))
    for key in ("prior", "channel", "reward", "cost"):
        if key not in doc:
            issues.append(Issue("MissingField", key))
    for key, allowed in _SUB.items():
        if key in doc:
            if not isinstance(doc[key], dict):
                issues.append(Issue("BadValue", "expected an object", (key,)))
                continue
            for sub in sorted(set(doc[key]) - allowed):
                issues.append(Issue("UnknownField", f"{key}.{sub}"))
    if issues:
        raise ValidationError(issues, "scenario file")

    prior = _array(doc["prior"], 1, "prior", issues)
    channel = _array(doc["channel"], 2, "channel", issues)
    reward = _array(doc["reward"], 2, "reward", issues)
    cost = doc["cost"]
    for sub in ("c1", "rho1"):
        if sub not in cost:
            issues.append(Issue("MissingField", f"cost.{sub}"))
    c1 = _number(cost.get("c1", 1), "cost.c1", issues)
    rho1 = _number(cost.get("rho1", 0), "cost.rho1", issues)
    box = None
    if "constraints" in doc:
        cons = doc["constraints"]
        box = Box(_number(cons.get("lo", 0), "constraints.lo", issues), _number(cons.get("hi", 1), "constraints.hi", issues))
    sim = {}
    if "simulation" in doc:
        for sub, v in doc["simulation"].items():
            if isinstance(v, bool) or not isinstance(v, int) or v < (1 if sub == "n_races" else 0):
                issues.append(Issue("BadValue", f"{v!r} must be a nonnegative integer", (f"simulation.{sub}",)))
            else:
                sim[sub] = v
    if issues:
        raise ValidationError(issues, "scenario file")
    scenario = validate_scenario(prior, channel, reward, c1, rho1, box)
    p_y = output_marginal(scenario.prior, scenario.channel)
    dead = [Issue("UnreachableOutput", f"p(y={y + 1}) = 0 under the prior", ("channel",)) for y in np.nonzero(p_y <= 0)[0]]
    if dead:
        raise ValidationError(dead, "scenario")
    return scenario, sim


def load_scenario(path) -> tuple[Scenario, dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return parse_scenario(doc)


# ---------------------------------------------------------------------------
# formatting


def _fmt(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _fmt_mat(a) -> str:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim == 1:
        return "[" + ", ".join(_fmt(v) for v in a) + "]"
    return "[" + ", ".join(_fmt_mat(r) for r in a) + "]"


def _jsonable(x):
    """Full-precision floats so emitted strategies round-trip exactly; infinities as strings."""
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _dump(obj) -> str:
    return json.dumps(_jsonable(dict(schema=SCHEMA, **obj)), indent=2)


def _issues_report(exc: ValidationError) -> str:
    return "\n".join([f"invalid {exc.what}:"] + [f"  - {i}" for i in exc.issues])


# ---------------------------------------------------------------------------
# analysis


def _decomposition_summary(scenario: Scenario) -> dict:
    try:
        d = decompose(scenario.reward)
    except NoDecomposition as exc:
        return {"exists": False, "q": exc.q, "near_degenerate": exc.near_degenerate}
    except SolveFailure as exc:
        return {"exists": False, "error": str(exc)}
    return {"exists": True, "q": d.q, "B": d.B, "D": np.diag(d.D)}


def analyze(scenario: Scenario) -> tuple[dict, object]:
    verdict = classify_scenario(scenario)
    strategy = verdict.strategy
    if strategy is None:
        strategy = optimize_strategy(scenario).strategy
    rep = growth_report(scenario, strategy)
    mi = mutual_information(scenario.prior, scenario.channel)
    cap = verdict.capacity if verdict.capacity is not None else channel_capacity(scenario.channel)[0]
    out = {
        "verdict": verdict.name,
        "strategy": strategy.s,
        "c": verdict.c,
        "d0": verdict.d0,
        "lambda": rep.lam,
        "lambda_pi": rep.lambda_pi,
        "lambda_nsi": rep.lambda_nsi,
        "delta": rep.delta,
        "gamma": rep.gamma,
        "mutual_information": mi,
        "capacity": cap,
        "decomposition": _decomposition_summary(scenario),
    }
    if isinstance(verdict, TrivialRateZero) and verdict.wager is not None:
        out["wager"] = verdict.wager.horse
    if isinstance(verdict, Undetermined):
        out["reason"] = verdict.reason
    diag = getattr(verdict, "diagnostic", None)
    if diag is not None:
        out["diagnostic"] = str(diag)
    if verdict.nonunique:
        out["nonunique"] = True
    if verdict.notes:
        out["notes"] = list(verdict.notes)
    return out, verdict


def _text_report(rep: dict) -> str:
    lines = []
    for key, val in rep.items():
        if key == "decomposition":
            if val.get("exists"):
                lines.append(f"decomposition: q={_fmt_mat(val['q'])} B={_fmt_mat(val['B'])} D=diag{_fmt_mat(val['D'])}")
            elif "q" in val:
                lines.append(f"decomposition: none (q={_fmt_mat(val['q'])})")
            else:
                lines.append(f"decomposition: none ({val.get('error', '')})")
        elif key == "notes":
            lines.extend(f"note: {n}" for n in val)
        elif isinstance(val, str):
            lines.append(f"{key}: {val}")
        elif val is None or np.ndim(val) == 0:
            lines.append(f"{key}: {_fmt(val)}")
        else:
            lines.append(f"{key}: {_fmt_mat(val)}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    try:
        scenario, _ = load_scenario(args.file)
    except ValidationError as exc:
        print(_issues_report(exc))
        return EXIT_INVALID
    print(f"valid scenario: K={scenario.k}, c1={_fmt(scenario.c1)}, rho1={_fmt(scenario.rho1)}"
          + (f", box=[{_fmt(scenario.box.lo)}, {_fmt(scenario.box.hi)}]" if scenario.box is not None else ""))
    return EXIT_OK


def cmd_analyze(args) -> int:
    scenario, _ = load_scenario(args.file)
    rep, verdict = analyze(scenario)
    print(_dump(rep) if args.json else _text_report(rep))
    return EXIT_UNDETERMINED if isinstance(verdict, Undetermined) else EXIT_OK


def _load_strategy(path, k: int) -> StrategyMatrix:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    if isinstance(doc, dict):
        if "strategy" not in doc:
            raise ValidationError([Issue("MissingField", "strategy")], "strategy file")
        doc = doc["strategy"]
    issues: list[Issue] = []
    mat = _array(doc, 2, "strategy", issues)
    if issues:
        raise ValidationError(issues, "strategy file")
    s = StrategyMatrix(mat)
    if s.k != k:
        raise ValidationError([Issue("DimensionMismatch", f"strategy K={s.k}, scenario K={k}")], "strategy file")
    return s


def cmd_simulate(args) -> int:
    scenario, sim = load_scenario(args.file)
    if args.strategy:
        strategy = _load_strategy(args.strategy, scenario.k)
    else:
        verdict = classify_scenario(scenario)
        strategy = verdict.strategy if verdict.strategy is not None else optimize_strategy(scenario).strategy
    n = args.races if args.races is not None else sim.get("n_races", 100_000)
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    try:
        cfg = SimConfig(n, seed, record_trajectory=args.trajectory is not None)
    except ValueError as exc:
        raise ValidationError([Issue("BadValue", str(exc), ("simulation",))], "simulation settings") from None
    rep = growth_report(scenario, strategy)
    analytic = {"lambda": rep.lam, "delta": rep.delta, "gamma": rep.gamma}
    try:
        res = run_races(scenario, strategy, cfg, workers=args.workers)
    except RuinEncountered as exc:
        msg = {"ruin": True, "race_index": exc.race_index + 1, "n_races": n, "seed": seed, "analytic": analytic}
        print(_dump(msg) if args.json else f"ruin: wealth hit zero at race {exc.race_index + 1} of {n}")
        return EXIT_RUIN
    if args.trajectory:
        write_trajectory_csv(args.trajectory, res.trajectory)
    out = {
        "n_races": n,
        "seed": seed,
        "strategy": strategy.s,
        "empirical": {"lambda": res.empirical_lambda, "delta": res.empirical_delta, "gamma": res.empirical_gamma},
        "standard_error": {"lambda": res.standard_error, "delta": res.se_delta, "gamma": res.se_gamma},
        "analytic": analytic,
        "final_log_wealth": res.final_log_wealth,
    }
    if args.json:
        print(_dump(out))
    else:
        print(f"races: {n}  seed: {seed}")
        print(f"strategy: {_fmt_mat(strategy.s)}")
        print(f"{'':8}{'empirical':>20}{'std error':>20}{'analytic':>20}")
        for key, name in (("lambda", "Lambda"), ("delta", "Delta"), ("gamma", "Gamma")):
            print(f"{name:8}{_fmt(out['empirical'][key]):>20}{_fmt(out['standard_error'][key]):>20}{_fmt(analytic[key]):>20}")
        print(f"final log2 wealth: {_fmt(res.final_log_wealth)}")
    return EXIT_OK


def _family(name: str, q: float) -> Channel:
    if name == "bsc":
        if not 0 <= q <= 1:
            raise ValueError(f"bsc crossover {q} outside [0, 1]")
        return Channel.bsc(q)
    if not 0 <= q < 1:
        raise ValueError(f"z crossover {q} outside [0, 1)")
    return Channel.z(q)


def sweep_values(start: float, stop: float, step: float) -> np.ndarray:
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise ValueError("sweep bounds must be finite")
    if step <= 0:
        raise ValueError("step must be positive")
    if start > stop:
        raise ValueError("start must not exceed stop")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _sweep_row(scenario: Scenario, family: str, q: float) -> list:
    sc = scenario.with_channel(_family(family, q))
    rep, verdict = analyze(sc)
    vals = [q, rep["verdict"], rep["c"], rep["lambda"], rep["lambda_pi"], rep["lambda_nsi"], rep["delta"], rep["gamma"], rep["mutual_information"]]
    return [v if isinstance(v, str) else ("" if v is None else _fmt(v)) for v in vals]


def cmd_sweep(args) -> int:
    scenario, _ = load_scenario(args.file)
    if scenario.k != 2:
        raise ValidationError([Issue("BadValue", "channel families are two-input", ("sweep",))], "sweep")
    try:
        qs = sweep_values(args.start, args.stop, args.step)
        channels = [_family(args.family, float(q)) for q in qs]
        bad = [Issue("UnreachableOutput", f"at {_fmt(q)}", ("sweep",)) for q, ch in zip(qs, channels)
               if np.any(output_marginal(scenario.prior, ch) <= 0)]
    except (ValueError, ValidationError) as exc:
        raise ValidationError([Issue("BadValue", str(exc), ("sweep",))], "sweep") from None
    if bad:
        raise ValidationError(bad, "sweep")
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(pool.map(lambda q: _sweep_row(scenario, args.family, float(q)), qs))
    fh = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(SWEEP_COLUMNS)
        wr.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kelly-slc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="classify the scenario and report growth quantities")
    p.add_argument("file")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo check of the analytic rates")
    p.add_argument("file")
    p.add_argument("--races", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trajectory", metavar="PATH", help="write log-wealth trajectory CSV")
    p.add_argument("--strategy", metavar="FILE", help="JSON strategy (bare matrix or analyze --json output)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="classify along a channel family")
    p.add_argument("file")
    p.add_argument("--family", choices=("bsc", "z"), required=True)
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--output", metavar="PATH")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(_issues_report(exc), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
