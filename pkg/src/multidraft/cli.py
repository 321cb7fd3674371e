"""Command-line front end: ``multidraft {toy,rates,otm,simulate,gen-trace}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import (
    MAX_COUPLING_V,
    build_flow,
    coupling_marginal_errors,
    flow_to_plan,
    max_flow,
    membership_cost,
    reconstruct_full_coupling,
)
from .draftjoint import hub_joint, independent_joint, wor_joint
from .errors import (
    ConsistencyError,
    DegenerateInput,
    InvalidArgument,
    ResourceLimit,
    TraceExhausted,
    TraceParseError,
)
from .simplex import as_distribution
from .synthlab import LOGIT_LAWS, TOY_METHODS, ToyConfig, toy_experiment
from .treesim import (
    SIM_METHODS,
    SyntheticProcess,
    TraceProcess,
    TreeTopology,
    load_tree,
    make_full_tree,
    run_sim,
)
from .verify import (
    MAX_EXACT_V,
    analytic_rates_rrs,
    analytic_rates_spechub,
    exact_rates,
    is_degenerate,
    mc_rates,
)

log = logging.getLogger("multidraft")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_RESOURCE = 4
EXIT_CONSISTENCY = 5
EXIT_TRACE_END = 6
EXIT_IO = 7

TRACE_SUM_TOL = 1e-6
RENORM_TOL = 1e-12
MAX_DENSE_V = 2048


# ------------------------------------------------------------------ parsing


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidArgument(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _methods(text: str, allowed) -> list[str]:
    out = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in out if m not in allowed]
    if bad or not out:
        raise InvalidArgument(f"unknown methods {bad}; choose from {','.join(allowed)}")
    return out


def read_distribution_file(path: str) -> np.ndarray:
    """Numbers separated by commas or whitespace, or a JSON array."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        try:
            return np.array(json.loads(text), dtype=np.float64)
        except (json.JSONDecodeError, TypeError, ValueError) as e:
            raise TraceParseError(f"{path}: invalid JSON array ({e})") from None
    vals = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0]
        for fno, tok in enumerate(line.replace(",", " ").split(), 1):
            try:
                vals.append(float(tok))
            except ValueError:
                raise TraceParseError(f"{path}: not a number: {tok!r}", line=lineno, field=str(fno)) from None
    return np.array(vals, dtype=np.float64)


def _distribution(inline: str | None, path: str | None, name: str) -> np.ndarray:
    if (inline is None) == (path is None):
        raise InvalidArgument(f"give exactly one of --{name} or --{name}-file")
    raw = _float_list(inline, f"--{name}") if inline is not None else read_distribution_file(path)
    return as_distribution(raw)


def parse_tree(spec: str) -> TreeTopology:
    kind, _, rest = spec.partition(":")
    if kind == "full":
        parts = rest.split(":")
        if len(parts) != 2:
            raise InvalidArgument(f"tree spec must be full:BRANCHING:DEPTH, got {spec!r}")
        try:
            b, d = int(parts[0]), int(parts[1])
        except ValueError:
            raise InvalidArgument(f"tree spec must be full:BRANCHING:DEPTH, got {spec!r}") from None
        return make_full_tree(b, d)
    if kind == "file":
        text = Path(rest).read_text(encoding="utf-8")
        try:
            parents = json.loads(text) if text.lstrip().startswith("[") else [int(t) for t in text.split()]
        except (json.JSONDecodeError, ValueError) as e:
            raise TraceParseError(f"{rest}: invalid parent vector ({e})") from None
        return load_tree(parents)
    raise InvalidArgument(f"tree spec must start with full: or file:, got {spec!r}")


def _check_record_array(values, lineno: int, name: str) -> np.ndarray:
    if not isinstance(values, list) or not values:
        raise TraceParseError("expected a non-empty array", line=lineno, field=name)
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise TraceParseError("array entries must be numbers", line=lineno, field=name) from None
    if arr.ndim != 1 or not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise TraceParseError("entries must be finite and non-negative", line=lineno, field=name)
    total = math.fsum(arr)
    if abs(total - 1.0) > TRACE_SUM_TOL:
        raise TraceParseError(f"sums to {total!r}, outside 1 +/- {TRACE_SUM_TOL}", line=lineno, field=name)
    if abs(total - 1.0) > RENORM_TOL:
        log.warning("line %d field %s: renormalized (sum deviated by %.3e)", lineno, name, total - 1.0)
        arr = arr / total
    return arr


def read_trace(path: str) -> dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]:
    records: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceParseError(f"invalid JSON ({e.msg})", line=lineno) from None
            if not isinstance(rec, dict):
                raise TraceParseError("record must be a JSON object", line=lineno)
            if rec.get("kind") == "header":
                continue
            key = []
            for name in ("step", "depth"):
                v = rec.get(name)
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise TraceParseError("expected a non-negative integer", line=lineno, field=name)
                key.append(v)
            p = _check_record_array(rec.get("p"), lineno, "p")
            q = _check_record_array(rec.get("q"), lineno, "q")
            if p.size != q.size:
                raise TraceParseError(f"p has {p.size} entries, q has {q.size}", line=lineno, field="q")
            if tuple(key) in records:
                raise TraceParseError(f"duplicate record for step {key[0]}, depth {key[1]}", line=lineno)
            records[tuple(key)] = (p, q)
    return records


def trace_line(step: int, depth: int, p, q) -> str:
    # json writes floats with repr, so values round-trip exactly
    return json.dumps({"step": step, "depth": depth, "p": [float(x) for x in p], "q": [float(x) for x in q]})


def parse_process(spec: str, seed: int):
    kind, _, rest = spec.partition(":")
    if kind == "synthetic":
        parts = rest.split(":")
        if len(parts) not in (3, 4):
            raise InvalidArgument(f"process spec must be synthetic:T:LAMBDA:V[:LAW], got {spec!r}")
        try:
            T, lam, V = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise InvalidArgument(f"bad number in process spec {spec!r}") from None
        law = parts[3] if len(parts) == 4 else "normal"
        return SyntheticProcess(T, lam, V, seed, law)
    if kind == "trace":
        return TraceProcess(read_trace(rest), label=f"trace:{rest}")
    raise InvalidArgument(f"process spec must start with synthetic: or trace:, got {spec!r}")


# ------------------------------------------------------------------ output


def _config(args: argparse.Namespace) -> dict:
    skip = {"func", "out", "format", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _header_lines(args) -> list[str]:
    return [
        f"# multidraft {__version__}",
        f"# command: {args.command}",
        f"# config: {json.dumps(_config(args), sort_keys=True)}",
        f"# seed: {args.seed}",
    ]


def _header_obj(args) -> dict:
    return {"tool": "multidraft", "version": __version__, "command": args.command,
            "config": _config(args), "seed": args.seed}


def _num(x) -> str:
    return repr(float(x))


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_table(args, columns: list[str], rows: list[list]) -> None:
    if args.format == "json":
        body = {"header": _header_obj(args), "columns": columns, "rows": [dict(zip(columns, r)) for r in rows]}
        _emit(args, json.dumps(body, indent=2) + "\n")
        return
    buf = io.StringIO()
    buf.write("\n".join(_header_lines(args)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, float) else v for v in r])
    _emit(args, buf.getvalue())


def _emit_report(args, body: dict) -> None:
    body = {"header": _header_obj(args), **body}
    _emit(args, json.dumps(body, indent=2) + "\n")


# ----------------------------------------------------------------- commands


def cmd_toy(args) -> int:
    Ts = _float_list(args.T, "--T")
    lams = _float_list(args.lam, "--lam")
    if not Ts or not lams:
        raise InvalidArgument("toy grid needs at least one temperature and one lambda")
    methods = _methods(args.methods, TOY_METHODS)
    columns = ["T", "lambda", "method", "mean", "stderr", "n_pairs", "mc_trials"]
    rows = []
    for T in Ts:
        for lam in lams:
            cfg = ToyConfig(T, lam, args.vocab, args.pairs, args.trials, args.seed, args.logits)
            for r in toy_experiment(cfg, methods):
                rows.append([T, lam, r.method, r.mean, r.stderr, r.n_pairs, r.mc_trials])
    _emit_table(args, columns, rows)
    return EXIT_OK


def _rate_dict(rv) -> dict:
    d = {"per_position": [float(x) for x in rv.per_position], "total": rv.total}
    if rv.stderr is not None:
        d["stderr"] = [float(x) for x in rv.stderr]
        d["total_stderr"] = rv.total_stderr
    if rv.fallback:
        d["fallback"] = True
    return d


def cmd_rates(args) -> int:
    p = _distribution(args.p, args.p_file, "p")
    q = _distribution(args.q, args.q_file, "q")
    if p.size != q.size:
        raise InvalidArgument(f"p has {p.size} entries, q has {q.size}")
    methods = _methods(args.methods, ("single", "rrs", "rrsw", "spechub", "otm", "otmw"))
    out = {}
    for i, m in enumerate(methods):
        entry: dict = {}
        if m in ("otm", "otmw"):
            joint = independent_joint(q) if m == "otm" else wor_joint(q)
            entry["optimal_total"] = max_flow(build_flow(joint, p)).value
            out[m] = entry
            continue
        if m in ("single", "rrs"):
            entry["analytic"] = _rate_dict(analytic_rates_rrs(p, q, 1 if m == "single" else args.k))
        if m == "spechub" and not is_degenerate(q):
            entry["analytic"] = _rate_dict(analytic_rates_spechub(p, q))
        if p.size <= MAX_EXACT_V and (m not in ("rrs", "rrsw") or args.k <= 3):
            entry["exact"] = _rate_dict(exact_rates(m, p, q, args.k))
        rng = np.random.default_rng([args.seed, 3, i])
        entry["monte_carlo"] = _rate_dict(mc_rates(m, p, q, args.k, args.trials, rng))
        out[m] = entry
    _emit_report(args, {"vocab": int(p.size), "k": args.k, "methods": out})
    return EXIT_OK


def cmd_otm(args) -> int:
    p = _distribution(args.p, args.p_file, "p")
    q = _distribution(args.q, args.q_file, "q")
    if p.size != q.size:
        raise InvalidArgument(f"p has {p.size} entries, q has {q.size}")
    if args.joint != "hub" and p.size > args.max_vocab:
        raise ResourceLimit(f"dense joint with V={p.size} exceeds the cap of {args.max_vocab}")
    joint = {"independent": independent_joint, "wor": wor_joint, "hub": hub_joint}[args.joint](q)
    net = build_flow(joint, p)
    flow = max_flow(net)
    body: dict = {"joint": args.joint, "vocab": int(p.size), "flow_value": flow.value, "cost": 1.0 - flow.value}
    plan = None
    if args.dump_plan or p.size <= MAX_COUPLING_V:
        plan = flow_to_plan(net, flow, joint, p)
        issues = plan.violations()
        if issues:
            raise ConsistencyError("; ".join(issues))
    if args.dump_plan:
        a1, a2 = plan.dense()
        V = int(p.size)
        body["plan"] = {
            "shape": [V, V],
            "accept_first": [float(x) for x in a1.ravel()],
            "accept_second": [float(x) for x in a2.ravel()],
        }
    if p.size <= MAX_COUPLING_V:
        pi = reconstruct_full_coupling(plan)
        draft_err, target_err = coupling_marginal_errors(pi, joint, p)
        mcost = membership_cost(pi)
        body["reconstruction"] = {
            "draft_marginal_error": draft_err,
            "target_marginal_error": target_err,
            "membership_cost": mcost,
            "cost_gap": abs(mcost - body["cost"]),
        }
    _emit_report(args, body)
    return EXIT_OK


def _require_trace_coverage(proc: TraceProcess, tree: TreeTopology, steps: int) -> None:
    need = steps * tree.levels
    missing = [(s, d) for s in range(steps) for d in range(tree.levels) if not proc.covers(s, d)]
    if missing:
        s, d = missing[0]
        raise TraceExhausted(
            f"trace supplies {need - len(missing)} of the {need} records needed "
            f"({steps} steps x {tree.levels} levels); short by {len(missing)}, "
            f"first missing step {s}, depth {d}"
        )


def cmd_simulate(args) -> int:
    tree = parse_tree(args.tree)
    proc = parse_process(args.process, args.seed)
    methods = _methods(args.methods, SIM_METHODS)
    if args.steps < 1:
        raise InvalidArgument("--steps must be at least 1")
    if isinstance(proc, TraceProcess):
        _require_trace_coverage(proc, tree, args.steps)
    slots = max(len(tree.children[tree.root]), 1)
    columns = ["method", "steps", "mean_tokens_per_step", "stderr"] + [f"root_rate_{i + 1}" for i in range(slots)]
    rows = []
    for m in methods:
        rng = np.random.default_rng([args.seed, 1, SIM_METHODS.index(m)])
        rep = run_sim(tree, proc, m, args.steps, rng)
        rows.append([m, rep.steps, rep.mean_tokens_per_step, rep.std_error]
                    + [float(x) for x in rep.per_position_rates.per_position])
    _emit_table(args, columns, rows)
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    if args.steps < 1 or args.depth < 1:
        raise InvalidArgument("--steps and --depth must be at least 1")
    proc = SyntheticProcess(args.T, args.lam, args.vocab, args.seed, args.logits)
    header = {"kind": "header", **_header_obj(args)}
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in range(args.steps):
            for d in range(args.depth):
                p, q = proc.get(s, d)
                fh.write(trace_line(s, d, p, q) + "\n")
    return EXIT_OK


# -------------------------------------------------------------------- main


def _add_common(sp: argparse.ArgumentParser, fmt_default: str) -> None:
    sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    sp.add_argument("--out", help="output path (default stdout)")
    sp.add_argument("--format", choices=("csv", "json"), default=fmt_default)


def _add_pq(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--p", help="target distribution, comma-separated")
    sp.add_argument("--q", help="draft distribution, comma-separated")
    sp.add_argument("--p-file", help="file with the target distribution")
    sp.add_argument("--q-file", help="file with the draft distribution")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multidraft", description="Multi-draft speculative sampling toolkit.")
    ap.add_argument("--version", action="version", version=f"multidraft {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings such as trace renormalization")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("toy", help="toy acceptance-rate table")
    _add_common(sp, "csv")
    sp.add_argument("--T", default="0.1,0.25,0.5", help="temperatures (comma-separated)")
    sp.add_argument("--lam", default="0.5,0.7", help="similarity weights (comma-separated)")
    sp.add_argument("--vocab", type=int, default=50)
    sp.add_argument("--pairs", type=int, default=100)
    sp.add_argument("--trials", type=int, default=1000, help="Monte-Carlo repetitions for rrsw")
    sp.add_argument("--logits", choices=LOGIT_LAWS, default="normal")
    sp.add_argument("--methods", default=",".join(TOY_METHODS))
    sp.set_defaults(func=cmd_toy)

    sp = sub.add_parser("rates", help="per-slot acceptance rates for one (p, q)")
    _add_common(sp, "json")
    _add_pq(sp)
    sp.add_argument("--k", type=int, default=2, help="number of drafts for rrs/rrsw")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--methods", default="rrs,rrsw,spechub")
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("otm", help="optimal two-draft acceptance by max flow")
    _add_common(sp, "json")
    _add_pq(sp)
    sp.add_argument("--joint", choices=("independent", "wor", "hub"), default="independent")
    sp.add_argument("--dump-plan", action="store_true")
    sp.add_argument("--max-vocab", type=int, default=MAX_DENSE_V, help="cap on V for dense joints")
    sp.set_defaults(func=cmd_otm)

    sp = sub.add_parser("simulate", help="token-tree tokens-per-step simulation")
    _add_common(sp, "csv")
    sp.add_argument("--tree", default="full:2:4", help="full:BRANCHING:LEVELS or file:PATH")
    sp.add_argument("--process", default="synthetic:1.0:0.7:50",
                    help="synthetic:T:LAMBDA:V[:LAW] or trace:PATH")
    sp.add_argument("--methods", default=",".join(SIM_METHODS))
    sp.add_argument("--steps", type=int, default=10000)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("gen-trace", help="write a synthetic trace file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--lam", type=float, default=0.7)
    sp.add_argument("--vocab", type=int, default=50)
    sp.add_argument("--logits", choices=LOGIT_LAWS, default="normal")
    sp.add_argument("--steps", type=int, default=1)
    sp.add_argument("--depth", type=int, default=1, help="records per step (tree levels)")
    sp.set_defaults(func=cmd_gen_trace)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except TraceParseError as e:
        code, msg = EXIT_PARSE, f"parse error: {e}"
    except (InvalidArgument, DegenerateInput) as e:
        code, msg = EXIT_USAGE, f"invalid argument: {e}"
    except ResourceLimit as e:
        code, msg = EXIT_RESOURCE, f"resource limit: {e}"
    except ConsistencyError as e:
        code, msg = EXIT_CONSISTENCY, f"internal consistency error: {e}"
    except TraceExhausted as e:
        code, msg = EXIT_TRACE_END, f"end of trace: {e}"
    except OSError as e:
        code, msg = EXIT_IO, f"I/O error: {e}"
    print(f"multidraft: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
