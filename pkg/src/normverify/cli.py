"""Command-line entry point: ``normverify <subcommand>``.

Exit codes: 0 success, 1 data or runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import norms, probe, sdt, space, triplets
from .config import PipelineConfig, resolve
from .errors import ConfigError, NormVerifyError

log = logging.getLogger("normverify")

SPACES = ("human", "machine", "combined")


def _write(path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _emit(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        _write(path, text)


def _config(args, *, require=(), **flags) -> PipelineConfig | None:
    cfg = resolve(flags, getattr(args, "config", None)).validate()
    if getattr(args, "print_config", False):
        sys.stdout.write(cfg.dump())
        return None
    return cfg.validate(require)


def _spaces(names, ds, cfg, args) -> dict[str, norms.BinaryFeatureMatrix]:
    human = norms.binarize_human(ds, args.tau)
    machine = None
    if {"machine", "combined"} & set(names):
        if not cfg.machine:
            raise ConfigError("--machine is required for the machine and combined spaces")
        machine = norms.load_matrix(cfg.machine)
        machine.require_layout(ds)
    out = {}
    for name in names:
        if name == "human":
            out[name] = human
        elif name == "machine":
            out[name] = machine
        elif name == "combined":
            out[name] = space.combine(ds, human, machine, args.combine_mode)
        else:
            raise ConfigError(f"unknown space {name!r}; choose from {', '.join(SPACES)}")
    return out


# -------------------------------------------------------------- subcommands

def cmd_ingest(args) -> int:
    cfg = _config(args, require=("concepts", "cells"), concepts=args.concepts, cells=args.cells)
    if cfg is None:
        return 0
    ds = norms.load_norms(cfg.concepts, cfg.cells, within_default_verified=not args.listed_only)
    norms.dump_dataset(ds, args.out)
    summary = ds.summary()
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    for name in ds.name_collisions():
        log.info("feature name generated in both domains: %s", name)
    return 0


def _parse_mock(items) -> dict:
    params = {"p_miss": 0.0, "p_fa": 0.0}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or key not in params:
            raise ConfigError(f"--mock expects p_miss=<float> and/or p_fa=<float>, got {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise ConfigError(f"--mock {key} must be a number, got {value!r}") from None
    return params


def cmd_verify(args) -> int:
    cfg = _config(args, require=("dataset",), dataset=args.dataset, template=args.template,
                  cache=args.cache, oracle_url=args.oracle_url, unparseable=args.unparseable,
                  concurrency=args.concurrency, seed=args.seed, max_new_tokens=args.max_new_tokens,
                  retries=args.retries)
    if cfg is None:
        return 0
    ds = norms.load_dataset(cfg.dataset)
    template = probe.PromptTemplate.from_file(cfg.template) if cfg.template else probe.PromptTemplate.default()
    if args.mock is not None:
        params = _parse_mock(args.mock)
        oracle = probe.MockOracle(norms.binarize_human(ds, args.mock_tau), seed=cfg.seed, **params)
    else:
        oracle = probe.HttpOracle(cfg.oracle_url, cfg.oracle_token, max_new_tokens=cfg.max_new_tokens,
                                  timeout=cfg.timeout, retries=cfg.retries)
    plan = probe.build_probe_plan(ds, args.scope)
    log.info("probe plan: %d probes (scope=%s)", len(plan), args.scope)
    cache_path = cfg.cache or f"{args.out}.cache.jsonl"
    with probe.AnswerCache(cache_path) as cache:
        run = probe.run_verification(plan, oracle, cache, dataset=ds, template=template,
                                     policy=cfg.unparseable, max_workers=cfg.concurrency)
    norms.save_matrix(run.machine, args.out)
    record = {"scope": args.scope, "template_hash": template.content_hash, **run.log_record()}
    _write(args.log or f"{args.out}.log.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(" ".join(f"{k}={v}" for k, v in record.items() if k != "template_hash"))
    return 0


def cmd_score(args) -> int:
    cfg = _config(args, require=("dataset", "machine"), dataset=args.dataset, machine=args.machine,
                  scopes=args.scope, thresholds=args.thresholds, correction=args.correction)
    if cfg is None:
        return 0
    ds = norms.load_dataset(cfg.dataset)
    machine = norms.load_matrix(cfg.machine)
    machine.require_layout(ds)
    scopes = cfg.scopes
    if args.sweep and args.scope is None:
        scopes = [sdt.Scope.ANIMALS.value, sdt.Scope.ARTIFACTS.value]
    taus = cfg.thresholds if args.sweep else (args.tau or [1.0])
    scores = [sdt.score_scope(ds, machine, tau, scope, cfg.correction) for scope in scopes for tau in taus]
    _emit(args.out, sdt.scores_to_csv(scores))
    if args.markdown:
        blocks = [sdt.sweep_markdown([s for s in scores if s.scope.value == scope], f"{scope}")
                  for scope in scopes]
        _write(args.markdown, "\n".join(blocks))
    if args.disagreements:
        text = disagreement_tables(ds, machine, args.disagreements, args.disagreement_tau, args.scope)
        _emit(args.disagreements_out, text)
    return 0


def _frac(x: float) -> str:
    return "n/a" if x != x else f"{x:.3f}"  # undefined when every prediction ties


def disagreement_tables(ds, machine, k, tau, scopes=None) -> str:
    human = norms.binarize_human(ds, tau)
    scopes = scopes or [sdt.Scope.ANIMALS.value, sdt.Scope.ARTIFACTS.value]
    blocks = []
    for scope in scopes:
        left = sdt.top_disagreements(human, machine, k, sdt.HUMAN_YES_MACHINE_NO, scope)
        right = sdt.top_disagreements(human, machine, k, sdt.MACHINE_YES_HUMAN_NO, scope)
        blocks.append(sdt.disagreements_markdown(left, right, f"Top {k} disagreeing features ({scope})"))
    return "\n".join(blocks)


def cmd_triplets_generate(args) -> int:
    cfg = _config(args, require=("dataset",), dataset=args.dataset, seed=args.seed)
    if cfg is None:
        return 0
    ds = norms.load_dataset(cfg.dataset)
    conds = [triplets.Condition(c.strip().upper()) for c in args.conditions.split(",")] \
        if args.conditions else list(triplets.Condition)
    trips = triplets.generate_triplets(ds, args.n, cfg.seed, conds)
    triplets.write_triplets(trips, args.out)
    print(f"triplets={len(trips)} per_condition={args.n} conditions={','.join(c.value for c in conds)}")
    return 0


def _load_triplets(args, cfg, ds, need_votes=True):
    if not args.triplets or not Path(args.triplets).exists():
        raise FileNotFoundError(f"triplets file not found: {args.triplets}")
    trips = triplets.read_triplets(args.triplets, ds)
    if need_votes:
        if not args.votes or not Path(args.votes).exists():
            raise FileNotFoundError(f"votes file not found: {args.votes}")
        trips = triplets.attach_votes(trips, triplets.read_votes(args.votes))
    return trips


def evaluate_spaces(ds, trips, matrices) -> dict[str, triplets.AgreementReport]:
    return {name: triplets.score_agreement(trips, space.cosine_distance_matrix(m))
            for name, m in matrices.items()}


def cmd_triplets_evaluate(args) -> int:
    cfg = _config(args, require=("dataset",), dataset=args.dataset, machine=args.machine)
    if cfg is None:
        return 0
    ds = norms.load_dataset(cfg.dataset)
    trips = _load_triplets(args, cfg, ds)
    names = [s.strip() for s in args.spaces.split(",") if s.strip()]
    reports = evaluate_spaces(ds, trips, _spaces(names, ds, cfg, args))
    out = Path(args.out_dir)
    for name, report in reports.items():
        _write(out / f"agreement_{name}.csv", triplets.report_to_csv(report))
        print(f"{name}: overall agreement={report.agreement:.4f} scored={report.n_scored}/{report.n_total}")
    _write(out / "figure_long.csv", triplets.figure_table(reports))
    return 0


def cmd_triplets_votes(args) -> int:
    cfg = _config(args, require=("dataset",), dataset=args.dataset, machine=args.machine)
    if cfg is None:
        return 0
    ds = norms.load_dataset(cfg.dataset)
    trips = _load_triplets(args, cfg, ds, need_votes=False)
    matrix = _spaces([args.space], ds, cfg, args)[args.space]
    voted = triplets.synthesize_votes(trips, space.cosine_distance_matrix(matrix), n_raters=args.raters)
    triplets.write_votes(voted, args.out)
    return 0


def cmd_report(args) -> int:
    cfg = _config(args, require=("dataset", "machine"), dataset=args.dataset, machine=args.machine,
                  thresholds=args.thresholds, correction=args.correction)
    if cfg is None:
        return 0
    ds = norms.load_dataset(cfg.dataset)
    machine = norms.load_matrix(cfg.machine)
    machine.require_layout(ds)
    out = Path(args.out_dir)
    main_scores = [sdt.score_scope(ds, machine, args.tau, s, cfg.correction) for s in sdt.Scope]
    sweeps = {s: sdt.sensitivity_sweep(ds, machine, cfg.thresholds, s, cfg.correction)
              for s in (sdt.Scope.ANIMALS, sdt.Scope.ARTIFACTS)}
    _write(out / "scores.csv", sdt.scores_to_csv(main_scores + [x for v in sweeps.values() for x in v]))
    _write(out / "sweep.md", "\n".join(sdt.sweep_markdown(v, s.value) for s, v in sweeps.items()))
    _write(out / "disagreements.md", disagreement_tables(ds, machine, args.disagreements, args.tau))
    lines = ["# Verification report", "", "| scope | hr | far | d' |", "|---|---|---|---|"]
    lines += [f"| {s.scope.value} | {s.hit_rate:.2f} | {s.false_alarm_rate:.2f} | {s.d_prime:.2f} |"
              for s in main_scores]
    if args.triplets:
        trips = _load_triplets(args, cfg, ds)
        reports = evaluate_spaces(ds, trips, _spaces(list(SPACES), ds, cfg, args))
        _write(out / "figure_long.csv", triplets.figure_table(reports))
        lines += ["", "| space | condition | n | agreement | human consistency |", "|---|---|---|---|---|"]
        for name, rep in reports.items():
            lines += [f"| {name} | {r.condition.value} | {r.n_scored} | {_frac(r.agreement)} | "
                      f"{r.human_consistency:.3f} |" for r in rep.rows]
    _write(out / "summary.md", "\n".join(lines) + "\n")
    print(f"report written to {out}")
    return 0


# ------------------------------------------------------------------ parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")


def _float_list(text: str) -> str:
    try:
        [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="normverify", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load concept/cell CSVs and write the canonical dataset dump")
    _common(p)
    p.add_argument("--concepts")
    p.add_argument("--cells")
    p.add_argument("--out", required=True)
    p.add_argument("--listed-only", action="store_true",
                   help="treat only cells listed in the cells file as human-verified")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("verify", help="probe an oracle and write the machine matrix")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scope", choices=probe.PLAN_SCOPES, default="all")
    p.add_argument("--template")
    p.add_argument("--cache")
    p.add_argument("--oracle-url")
    p.add_argument("--mock", nargs="*", metavar="KEY=VALUE",
                   help="use the seeded mock oracle, e.g. --mock p_miss=0.3 p_fa=0.1")
    p.add_argument("--mock-tau", type=float, default=1.0, help="agreement threshold of the mock's truth")
    p.add_argument("--unparseable", choices=("zero", "fail"))
    p.add_argument("--concurrency", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-new-tokens", type=int)
    p.add_argument("--retries", type=int)
    p.add_argument("--log", help="run log path (default: <out>.log.json)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("score", help="hit/false-alarm rates and d' of a machine matrix")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--machine")
    p.add_argument("--scope", type=lambda s: [x.strip() for x in s.split(",")],
                   help="comma list of whole, animals, artifacts")
    p.add_argument("--tau", type=float, action="append")
    p.add_argument("--sweep", action="store_true", help="score every threshold in --thresholds")
    p.add_argument("--thresholds", type=_float_list)
    p.add_argument("--correction", choices=sdt.CORRECTIONS)
    p.add_argument("--out", help="scores CSV (default: stdout)")
    p.add_argument("--markdown", help="also write markdown tables here")
    p.add_argument("--disagreements", type=int, metavar="K")
    p.add_argument("--disagreement-tau", type=float, default=1.0)
    p.add_argument("--disagreements-out", help="markdown path (default: stdout)")
    p.set_defaults(func=cmd_score)

    tp = sub.add_parser("triplets", help="triplet judgment task")
    tsub = tp.add_subparsers(dest="triplets_command", required=True)

    p = tsub.add_parser("generate")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--n", type=int, required=True, help="triplets per condition")
    p.add_argument("--seed", type=int)
    p.add_argument("--conditions", help="comma list (default: all six)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_triplets_generate)

    def space_args(p):
        p.add_argument("--dataset")
        p.add_argument("--triplets")
        p.add_argument("--machine")
        p.add_argument("--tau", type=float, default=1.0, help="agreement threshold of the human space")
        p.add_argument("--combine-mode", choices=space.COMBINE_MODES, default="patch")

    p = tsub.add_parser("evaluate")
    _common(p)
    space_args(p)
    p.add_argument("--votes")
    p.add_argument("--spaces", default="human,machine,combined")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_triplets_evaluate)

    p = tsub.add_parser("synth-votes", help="deterministic votes derived from one space")
    _common(p)
    space_args(p)
    p.add_argument("--space", choices=SPACES, default="human")
    p.add_argument("--raters", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_triplets_votes)

    p = sub.add_parser("report", help="scores, sweeps, disagreements and the triplet figure table")
    _common(p)
    space_args(p)
    p.add_argument("--votes")
    p.add_argument("--thresholds", type=_float_list)
    p.add_argument("--correction", choices=sdt.CORRECTIONS)
    p.add_argument("--disagreements", type=int, default=20)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"normverify: error: {exc}", file=sys.stderr)
        return 2
    except (NormVerifyError, OSError) as exc:
        print(f"normverify: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
