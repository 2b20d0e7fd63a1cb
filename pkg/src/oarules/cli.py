"""Command-line interface: mine, train, predict, evaluate, cv, convert, vcdim.

Exit codes: 0 success, 1 usage error, 2 data error, 3 guard exceeded or
timeout without an incumbent.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import (FiniteDomain, forest_bound, forest_to_oa, max_efficient_set,
                       parse_forest, tree_to_oa, vc_dim_bruteforce)
from .dataset import MISSING_TOKENS, Dataset, load_csv, read_csv_text, read_schema
from .errors import DataError, GuardError, OARulesError, ParseError
from .mining import DEFAULT_MAX_LEN, DEFAULT_MIN_SUPPORT, POSITIVES
from .patterns import NumericLiteral, OAModel, load_model, serialize, to_json
from .pipeline import (DEFAULT_C, DEFAULT_GRID, DEFAULT_TUNE_NODES, TrainConfig, accuracy,
                       confusion, cross_validate, default_grid, fit, mine_candidates)
from .screening import DEFAULT_GAMMA, DEFAULT_TOP_K, prune, select_top
from .selector import DEFAULT_CAP

log = logging.getLogger("oarules")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GUARD = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    inputs: list = field(default_factory=list)
    min_support: float = DEFAULT_MIN_SUPPORT
    max_len: int = DEFAULT_MAX_LEN
    gamma: float = DEFAULT_GAMMA
    top_k: int = DEFAULT_TOP_K
    c1: float = DEFAULT_C
    c2: float = DEFAULT_C
    pattern_cap: int = DEFAULT_CAP
    bins: int = 4
    folds: int = 5
    seed: int = 0
    time_limit: float = 60.0
    mode: str = "ooax"
    scope: str = POSITIVES
    schema: Optional[str] = None
    label: Optional[str] = None
    positive: Optional[str] = None
    out: Optional[str] = None

    def __post_init__(self):
        if self.folds < 2:
            raise UsageError("--folds must be >= 2")
        try:
            self.train_config()
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        names = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in vars(args).items() if k in names})

    def train_config(self, **over) -> TrainConfig:
        kw = dict(min_support=self.min_support, max_len=self.max_len, gamma=self.gamma,
                  top_k=self.top_k, c1=self.c1, c2=self.c2, cap=self.pattern_cap,
                  bins=self.bins, scope=self.scope, time_limit=self.time_limit, mode=self.mode)
        kw.update(over)
        return TrainConfig(**kw)


# ---------------------------------------------------------------------------
# helpers


def _load_dataset(cfg: RunConfig, path: str) -> Dataset:
    schema = read_schema(cfg.schema) if cfg.schema else None
    return load_csv(path, schema, label_column=cfg.label, positive_label=cfg.positive)


def _read_model(path: str) -> OAModel:
    return load_model(Path(path).read_text(encoding="utf-8"))


def _emit(text: str, out: Optional[str]):
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _model_text(m: OAModel, out: Optional[str]) -> str:
    return to_json(m) if out and out.endswith(".json") else serialize(m)


def _model_kinds(m: OAModel) -> dict:
    kinds = {}
    for z in m.patterns:
        for lit in z.literals:
            kinds[lit.attr] = "numeric" if isinstance(lit, NumericLiteral) else "categorical"
    return kinds


def check_compatible(m: OAModel, d: Dataset):
    for name, kind in sorted(_model_kinds(m).items()):
        if name not in d.schema.names:
            raise DataError(f"model attribute {name!r} is not in the data")
        if d.schema.attribute(name).kind != kind:
            raise DataError(f"model attribute {name!r} is {kind} but the data column is not")


def _warn_unregularized(cfg: RunConfig):
    if cfg.c1 == 0 and cfg.c2 == 0:
        print("oarules: warning: C1 = C2 = 0: support-bound pruning and the automatic "
              "pattern cap are inactive", file=sys.stderr)


def _report(m: OAModel, d: Dataset, sol) -> str:
    c = confusion(m, d)
    lines = [f"accuracy={accuracy(m, d):.4f}",
             f"patterns={m.n_patterns}",
             f"average_length={m.average_length:.2f}",
             f"literals={m.n_literals}",
             "tp={tp} fp={fp} tn={tn} fn={fn}".format(**c)]
    if sol is not None:
        lines += [f"objective={sol.objective!r}", f"gap={sol.gap!r}", f"nodes={sol.nodes}",
                  f"optimal={str(sol.proven_optimal).lower()}"]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands


def cmd_mine(cfg: RunConfig) -> int:
    d = _load_dataset(cfg, cfg.inputs[0])
    _warn_unregularized(cfg)
    tc = cfg.train_config()
    scored = mine_candidates(d, tc)
    kept, report = prune(scored, d, tc.c1, tc.c2)
    top = select_top(kept, tc.top_k)
    lines = ["score\tgain\tlen\tsupp_pos\tsupp_neg\tpattern"] + [s.text() for s in top]
    _emit("\n".join(lines), cfg.out)
    print(f"mined={len(scored)} " + " ".join(f"{k}={v}" for k, v in sorted(report.items()))
          + f" candidates={len(top)}", file=sys.stderr)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    d = _load_dataset(cfg, cfg.inputs[0])
    _warn_unregularized(cfg)
    model, sol = fit(d, cfg.train_config())
    text = _model_text(model, cfg.out)
    if cfg.out:
        _emit(text, cfg.out)
    else:
        print(text)
    print(_report(model, d, sol))
    return EXIT_OK


def _row_values(header, row, kinds, lineno):
    x = {}
    for name, kind in kinds.items():
        raw = row[header.index(name)].strip()
        if raw in MISSING_TOKENS:
            x[name] = None
        elif kind == "numeric":
            try:
                x[name] = float(raw)
            except ValueError:
                raise DataError(f"line {lineno}: attribute {name!r}: {raw!r} is not a number") from None
        else:
            x[name] = raw
    return x


def cmd_predict(cfg: RunConfig) -> int:
    model = _read_model(cfg.inputs[0])
    header, body = read_csv_text(Path(cfg.inputs[1]).read_text(encoding="utf-8"))
    kinds = _model_kinds(model)
    for name in sorted(kinds):
        if name not in header:
            raise DataError(f"model attribute {name!r} is not in the data")
    preds = [model.predict(_row_values(header, row, kinds, n)) for n, row in body]
    _emit("\n".join(["prediction"] + [str(p) for p in preds]), cfg.out)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    model = _read_model(cfg.inputs[0])
    d = _load_dataset(cfg, cfg.inputs[1])
    check_compatible(model, d)
    _emit(_report(model, d, None), cfg.out)
    return EXIT_OK


def cmd_cv(cfg: RunConfig, grid: Sequence[float], tune_nodes: int) -> int:
    d = _load_dataset(cfg, cfg.inputs[0])
    _warn_unregularized(cfg)
    cells = default_grid(grid) if grid else None
    report = cross_validate(d, cfg.train_config(tune_node_limit=tune_nodes or None),
                            cfg.folds, cfg.seed, cells)
    _emit(report.text(), cfg.out)
    return EXIT_OK


def cmd_convert(cfg: RunConfig) -> int:
    forest = parse_forest(Path(cfg.inputs[0]).read_text(encoding="utf-8"))
    if len(forest.trees) == 1:
        model = tree_to_oa(forest.trees[0])
        summary = f"trees 1, patterns {model.n_patterns}"
    else:
        bound = forest_bound(forest)
        model = forest_to_oa(forest)
        summary = (f"trees {len(forest.trees)}, patterns {model.n_patterns}, "
                   f"bound {bound}, achieved {model.n_patterns}")
    text = _model_text(model, cfg.out)
    if cfg.out:
        _emit(text, cfg.out)
    else:
        print(text)
    print(summary, file=sys.stderr if not cfg.out else sys.stdout)
    return EXIT_OK


def cmd_vcdim(cfg: RunConfig, j: int) -> int:
    model = _read_model(cfg.inputs[0])
    dom = FiniteDomain(j)
    pats = list(model.patterns)
    best = max_efficient_set(pats, dom)
    lines = [f"patterns={len(pats)}", f"J={j}", f"max_efficient_set={len(best)}",
             "members=" + ",".join(str(i) for i in best)]
    try:
        lines.append(f"vc_dim={vc_dim_bruteforce(pats, dom)}")
    except GuardError as exc:
        lines.append(f"vc_dim=skipped ({exc})")
    _emit("\n".join(lines), cfg.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_data_flags(p):
    p.add_argument("--schema", help="schema file; inferred from the CSV when omitted")
    p.add_argument("--label", help="label column (default: last column)")
    p.add_argument("--positive", help="positive label value (default: 1)")


def _add_train_flags(p):
    p.add_argument("--min-support", type=float, default=DEFAULT_MIN_SUPPORT)
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA,
                   help="weight of pattern length in the screening score")
    p.add_argument("--topk", dest="top_k", type=int, default=DEFAULT_TOP_K,
                   help="number of screened candidates passed to the selector")
    p.add_argument("--c1", type=float, default=DEFAULT_C, help="cost per literal")
    p.add_argument("--c2", type=float, default=DEFAULT_C, help="cost per pattern")
    p.add_argument("--max-patterns", dest="pattern_cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--bins", type=int, default=4, help="bins per numeric attribute")
    p.add_argument("--time-limit", type=float, default=60.0, help="solver seconds")
    p.add_argument("--mode", choices=("ooax", "ooa"), default="ooax")
    p.add_argument("--scope", choices=("positives", "all"), default=POSITIVES,
                   help="rows mined for frequent patterns")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="oarules", description="Learn and analyze OR-of-AND rule classifiers")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mine", help="mine and screen candidate patterns")
    p.add_argument("data")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("train", help="fit a model on a labeled CSV")
    p.add_argument("data")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", help="model file (JSON when the name ends in .json)")

    p = sub.add_parser("predict", help="predict every row of a CSV")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--out")

    p = sub.add_parser("evaluate", help="accuracy and confusion counts on a labeled CSV")
    p.add_argument("model")
    p.add_argument("data")
    _add_data_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("cv", help="nested cross-validation")
    p.add_argument("data")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=float, nargs="*", default=list(DEFAULT_GRID),
                   help="values tried for both C1 and C2; empty disables tuning")
    p.add_argument("--tune-nodes", type=int, default=DEFAULT_TUNE_NODES,
                   help="search-node budget for inner tuning solves (0: unlimited)")
    p.add_argument("--out")

    p = sub.add_parser("convert", help="convert a decision tree or forest to a model")
    p.add_argument("trees")
    p.add_argument("--out")

    p = sub.add_parser("vcdim", help="maximum efficient set and VC dimension of a pattern file")
    p.add_argument("patterns")
    p.add_argument("--j", type=int, required=True, help="number of binary attributes")
    p.add_argument("--out")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    inputs = [getattr(args, k) for k in ("model", "data", "trees", "patterns") if hasattr(args, k)]
    try:
        cfg = RunConfig.from_args(argparse.Namespace(**vars(args), inputs=inputs))
        if args.command == "mine":
            return cmd_mine(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "predict":
            return cmd_predict(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "cv":
            return cmd_cv(cfg, args.grid, args.tune_nodes)
        if args.command == "convert":
            return cmd_convert(cfg)
        return cmd_vcdim(cfg, args.j)
    except UsageError as exc:
        print(f"oarules: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GuardError as exc:
        print(f"oarules: guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (DataError, ParseError, OSError) as exc:
        print(f"oarules: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OARulesError, ValueError) as exc:
        print(f"oarules: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
