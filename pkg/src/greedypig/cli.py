"""Command-line entry point: ``greedypig <subcommand> [flags]``.

Exit status is 0 on success, 1 when a numerical check fails its tolerance and
2 on bad input (missing or unparseable files, dimension mismatches, invalid
parameters). Settings resolve as built-in defaults < ``--config`` JSON < flags.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import zlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import plotting
from .attribution import build_minibatch_schedule, greedy_pig, integrated_gradients, sequential_gradient
from .core import AlgoConfig, DimensionError
from .evaluation import QualityCurve, brute_force_best_subset, curve_and_auc, default_k_grid, write_auc_summary
from .graph import (
    UntrainedModelError,
    baseline_edge_selector,
    compression_curve,
    gnn_edge_objective,
    read_graph,
    write_graph,
)
from .models import (
    DEFAULT_HIDDEN,
    LinRegProblem,
    SoftmaxNet,
    TabularDataset,
    TinyGCN,
    cross_entropy,
    grad_check,
    linreg_objective,
    linreg_solve,
    load_model,
    mlp_forward,
    random_interior_points,
    save_model,
    train_model,
)
from .objectives import (
    SetFunctionView,
    eval_set,
    kl_objective,
    minibatch_posthoc_objective,
    modular_objective,
    posthoc_objective,
    topclass_objective,
)
from .synthetic import (
    PlantedTabularSpec,
    ReplicationSpec,
    exact_redundancy_view,
    make_correlated_linreg,
    make_planted_tabular,
    make_sbm_graph,
    replicate_features,
)

logger = logging.getLogger("greedypig")

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT = 0, 1, 2
ALGORITHMS = ("ig", "greedy-pig", "sg")
OBJECTIVES = ("topclass", "kl", "posthoc", "linreg", "gcn")
GEN_KINDS = ("linreg-demo", "linreg", "mlp", "tabular", "sbm")
NORMALIZE_MAX_N = 16
# (epochs, learning rate) used when the flags are not given
TRAIN_DEFAULTS = {"mlp": (400, 0.5), "gcn": (300, 0.2)}


class InputError(ValueError):
    """Bad user input; reported with exit status 2."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    subcommand: str = ""
    objective: Optional[str] = None
    algorithm: str = "greedy-pig"
    rounds: Optional[int] = None
    per_round: int = 1
    steps: int = 32
    ranking: Optional[str] = None
    baseline: str = "zero"
    seed: int = 0
    threads: int = 1
    model: Optional[str] = None
    data: Optional[str] = None
    graph: Optional[str] = None
    out: Optional[str] = None
    figures: bool = True
    points: int = 20
    tolerance: float = 1e-4
    row: int = 0
    k: list = field(default_factory=lambda: [5])
    epochs: Optional[int] = None
    lr: Optional[float] = None
    val_fraction: float = 0.2
    ratios: list = field(default_factory=lambda: [0.0, 0.1, 0.25, 0.5, 0.75, 1.0])
    repeats: int = 5
    target: str = "all"
    counts: list = field(default_factory=lambda: [3, 1])
    weights: list = field(default_factory=lambda: [5.0, 1.0])
    beta: float = 32.0
    kind: Optional[str] = None
    n: Optional[int] = None
    rho: float = 0.95
    classes: int = 3

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InputError(f"unknown config keys: {unknown}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def substream(seed: int, name: str) -> int:
    """Independent 32-bit seed for the component ``name`` derived from the run seed."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON run config; explicit flags override it")
    common.add_argument("--model", help="model JSON file (MLP, GCN or linear-regression problem)")
    common.add_argument("--data", help="dataset CSV with a 'label' column")
    common.add_argument("--graph", help="graph directory (edges.tsv, features.csv, labels.csv, split.json)")
    common.add_argument("--algorithm", choices=ALGORITHMS)
    common.add_argument("--steps", "-T", type=int, help="path-integral steps per round")
    common.add_argument("--rounds", "-R", type=int)
    common.add_argument("--per-round", "-z", dest="per_round", type=int)
    common.add_argument("--objective", choices=OBJECTIVES)
    common.add_argument("--baseline", help="'zero', 'mean' or comma-separated values")
    common.add_argument("--ranking", choices=("signed", "absolute"))
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--figures", action=argparse.BooleanOptionalAction,
                        help="render PNG figures next to the CSV output (default on)")

    parser = argparse.ArgumentParser(prog="greedypig", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every applicable objective")
    p.add_argument("--points", type=int, default=argparse.SUPPRESS)
    p.add_argument("--tolerance", type=float, default=argparse.SUPPRESS)
    p.add_argument("--row", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("attribute", parents=[common], help="attribute one input and write result, curve and AUC")
    p.add_argument("--row", type=int, default=argparse.SUPPRESS, help="dataset row to explain")
    p.add_argument("--target", default=argparse.SUPPRESS, help="GCN target: all, train or a node id")

    p = sub.add_parser("select", parents=[common], help="post-hoc feature selection with pruned retraining")
    p.add_argument("--k", type=_int_list, default=argparse.SUPPRESS, help="comma-separated feature counts")
    p.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--lr", type=float, default=argparse.SUPPRESS)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=argparse.SUPPRESS)

    p = sub.add_parser("graph-compress", parents=[common], help="accuracy versus kept-edge ratio for four selectors")
    p.add_argument("--ratios", type=_float_list, default=argparse.SUPPRESS)
    p.add_argument("--repeats", type=int, default=argparse.SUPPRESS, help="seeds for the random selectors")
    p.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--lr", type=float, default=argparse.SUPPRESS)

    p = sub.add_parser("replicate-demo", parents=[common], help="one-shot IG versus Greedy PIG on replicated features")
    p.add_argument("--counts", type=_int_list, default=argparse.SUPPRESS)
    p.add_argument("--weights", type=_float_list, default=argparse.SUPPRESS)
    p.add_argument("--beta", type=float, default=argparse.SUPPRESS)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic model, dataset or graph")
    p.add_argument("kind", choices=GEN_KINDS)
    p.add_argument("--n", type=int, default=argparse.SUPPRESS, help="feature count")
    p.add_argument("--rho", type=float, default=argparse.SUPPRESS)
    p.add_argument("--classes", type=int, default=argparse.SUPPRESS)
    p.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--lr", type=float, default=argparse.SUPPRESS)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    merged = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                merged.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
    merged.update(flags)
    return RunConfig.from_dict(merged)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _resolve_path(path: Optional[str], what: str, suffix: str) -> str:
    if not path:
        raise InputError(f"--{what} is required")
    if path.startswith("example:"):
        name = path.split(":", 1)[1]
        ref = resources.files("greedypig") / "data" / f"example_{name}{suffix}"
        if not ref.is_file():
            raise InputError(f"no shipped example named {name!r}")
        return str(ref)
    return path


def _load_model(cfg: RunConfig):
    path = _resolve_path(cfg.model, "model", ".json")
    try:
        return load_model(path)
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot parse model {path}: {exc}") from None


def _load_data(cfg: RunConfig) -> TabularDataset:
    path = _resolve_path(cfg.data, "data", ".csv")
    try:
        return TabularDataset.from_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from None


def _load_graph(cfg: RunConfig):
    if not cfg.graph:
        raise InputError("--graph is required")
    try:
        return read_graph(cfg.graph)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    except (OSError, ValueError, KeyError, IndexError) as exc:
        raise InputError(f"cannot read graph {cfg.graph}: {exc}") from None


def _baseline(cfg: RunConfig, n: int, data: Optional[TabularDataset] = None):
    spec = str(cfg.baseline).strip()
    if spec == "zero":
        return np.zeros(n)
    if spec == "mean":
        if data is None:
            raise InputError("--baseline mean needs --data")
        return data.rows.mean(axis=0)
    try:
        vals = np.array(_float_list(spec))
    except ValueError:
        raise InputError(f"baseline must be 'zero', 'mean' or numbers, got {spec!r}") from None
    if vals.shape[0] != n:
        raise DimensionError("baseline", n, vals.shape[0])
    return vals


def _out_dir(cfg: RunConfig) -> Optional[str]:
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _algo_ranking(cfg: RunConfig) -> str:
    if cfg.ranking:
        return cfg.ranking
    return "absolute" if cfg.algorithm == "ig" else "signed"


def run_algorithm(objective, cfg: RunConfig, rounds: Optional[int] = None, per_round: Optional[int] = None):
    """Run the configured algorithm; greedy variants default to enough rounds for a full order."""
    z = per_round or cfg.per_round
    if cfg.algorithm == "ig":
        return integrated_gradients(objective, cfg.steps, _algo_ranking(cfg), cfg.threads)
    R = rounds or cfg.rounds or math.ceil(objective.n / z)
    if cfg.algorithm == "sg":
        return sequential_gradient(objective, R, z, _algo_ranking(cfg), cfg.threads)
    return greedy_pig(objective, AlgoConfig(rounds=R, per_round=z, steps=cfg.steps,
                                            rng_seed=cfg.seed, ranking_mode=_algo_ranking(cfg)), cfg.threads)


def _input_row(cfg: RunConfig, model: SoftmaxNet, data: Optional[TabularDataset]):
    if data is None:
        rng = np.random.default_rng(substream(cfg.seed, "input"))
        return rng.standard_normal(model.n_inputs)
    if data.n_features != model.n_inputs:
        raise DimensionError("dataset columns vs model inputs", model.n_inputs, data.n_features)
    if not 0 <= cfg.row < len(data):
        raise InputError(f"--row {cfg.row} outside [0, {len(data)})")
    return data.rows[cfg.row]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _gradcheck_objectives(cfg: RunConfig, model):
    if isinstance(model, LinRegProblem):
        return [("linreg", linreg_objective(model))]
    if isinstance(model, TinyGCN):
        graph = _load_graph(cfg)
        if not model.trained:
            raise InputError("GCN model file is not marked as trained")
        return [("gcn-edges(train)", gnn_edge_objective(model, graph, "train")),
                ("gcn-edges(all)", gnn_edge_objective(model, graph, "all"))]
    data = _load_data(cfg) if cfg.data else None
    x = _input_row(cfg, model, data)
    x0 = _baseline(cfg, model.n_inputs, data)
    objs = [("topclass", topclass_objective(model, x, x0)), ("kl", kl_objective(model, x, x0))]
    if data is not None:
        objs.append(("posthoc", posthoc_objective(model, data, x0)))
    return objs


def cmd_gradcheck(cfg: RunConfig) -> int:
    model = _load_model(cfg)
    objectives = _gradcheck_objectives(cfg, model)
    if cfg.points < 0:
        raise InputError("--points must be nonnegative")
    if cfg.points == 0:
        logger.warning("no points requested; the gradient check passes vacuously")
    report, failed = {}, False
    for name, obj in objectives:
        pts = random_interior_points(obj.n, cfg.points, substream(cfg.seed, f"gradcheck/{name}"))
        errs, gated = [], 0
        for p in pts:
            r = grad_check(obj, p, detail=True)
            errs.append(r.max_rel_error)
            gated += len(r.gated)
        worst = max(errs) if errs else 0.0
        ok = worst <= cfg.tolerance
        failed |= not ok
        report[name] = {"max_rel_error": worst, "points": int(cfg.points), "dimension": obj.n,
                        "kink_coordinates": gated, "passed": ok}
        print(f"{name:<18s} {'PASS' if ok else 'FAIL'}  max rel err {worst:.3e}  "
              f"(n={obj.n}, points={cfg.points}, kink-straddling coordinates={gated})")
    status = "FAIL" if failed else "PASS"
    overall = max((v["max_rel_error"] for v in report.values()), default=0.0)
    print(f"{status}, max rel err {overall:.3e} (tolerance {cfg.tolerance:g})")
    out = _out_dir(cfg)
    if out:
        _write_json(os.path.join(out, "gradcheck.json"),
                    {"tolerance": cfg.tolerance, "passed": not failed, "objectives": report})
    return EXIT_TOLERANCE if failed else EXIT_OK


def _attribution_objective(cfg: RunConfig, model):
    if isinstance(model, LinRegProblem):
        if cfg.objective not in (None, "linreg"):
            raise InputError(f"objective {cfg.objective!r} does not apply to a linear-regression problem")
        return linreg_objective(model), "raw"
    if isinstance(model, TinyGCN):
        if cfg.objective not in (None, "gcn"):
            raise InputError(f"objective {cfg.objective!r} does not apply to a GCN")
        graph = _load_graph(cfg)
        target = cfg.target if cfg.target in ("all", "train") else int(cfg.target)
        try:
            return gnn_edge_objective(model, graph, target), "raw"
        except UntrainedModelError as exc:
            raise InputError(str(exc)) from None
    kind = cfg.objective or "topclass"
    data = _load_data(cfg) if cfg.data else None
    if data is not None and data.n_features != model.n_inputs:
        raise DimensionError("dataset columns vs model inputs", model.n_inputs, data.n_features)
    x0 = _baseline(cfg, model.n_inputs, data)
    if kind == "posthoc":
        if data is None:
            raise InputError("the posthoc objective needs --data")
        return posthoc_objective(model, data, x0), "raw"
    x = _input_row(cfg, model, data)
    if kind == "topclass":
        return topclass_objective(model, x, x0), "raw"
    if kind == "kl":
        return kl_objective(model, x, x0), "kl"
    raise InputError(f"objective {kind!r} does not apply to an MLP")


def cmd_attribute(cfg: RunConfig) -> int:
    model = _load_model(cfg)
    obj, metric = _attribution_objective(cfg, model)
    result = run_algorithm(obj, cfg)
    evals = result.diagnostics["gradient_evaluations"]
    logger.info("gradient evaluations: %d", evals)
    view = SetFunctionView(obj)
    ks = [k for k in _k_grid(obj.n) if k <= len(result.order)]
    curve, auc = curve_and_auc(view, result.order, metric, k_grid=ks,
                               normalize=obj.n <= NORMALIZE_MAX_N and metric == "raw")
    print(f"{cfg.algorithm}: n={obj.n} gradient evaluations={evals} auc={auc:.6f}")
    print("order:", " ".join(str(i) for i in result.order[:20]) + (" ..." if len(result.order) > 20 else ""))
    out = _out_dir(cfg)
    if out:
        with open(os.path.join(out, "result.json"), "w") as fh:
            fh.write(result.to_json() + "\n")
        curve.to_csv(os.path.join(out, "curve.csv"))
        write_auc_summary(curve, os.path.join(out, "auc.json"))
        _write_json(os.path.join(out, "config.json"), cfg.to_dict())
        if cfg.figures:
            plotting.plot_scores(result.scores, os.path.join(out, "scores.png"), f"{cfg.algorithm} scores")
            plotting.plot_quality_curves({cfg.algorithm: curve}, os.path.join(out, "curve.png"))
    return EXIT_OK


def _k_grid(n):
    return default_k_grid(n).tolist()


def _schedule(cfg: RunConfig, family: str):
    epochs, lr = TRAIN_DEFAULTS[family]
    return (epochs if cfg.epochs is None else cfg.epochs), (lr if cfg.lr is None else cfg.lr)


def _train_mlp(cfg: RunConfig, data: TabularDataset, stream: str):
    n_classes = int(np.max(data.labels)) + 1
    dims = [data.n_features, *DEFAULT_HIDDEN, max(2, n_classes)]
    return train_model(dims, data, *_schedule(cfg, "mlp"), substream(cfg.seed, stream))


def selection_pipeline(cfg: RunConfig, data: TabularDataset, model: Optional[SoftmaxNet] = None) -> dict:
    """Global post-hoc attribution on a train split, then pruned retraining per k.

    Returns a JSON-ready report. Greedy variants run z=1 for max(k) rounds
    (unless ``cfg.rounds`` is set); one-shot IG uses ``cfg.steps`` steps.
    """
    ks = sorted(set(int(k) for k in cfg.k))
    if not ks or ks[0] < 1:
        raise InputError("every k must be at least 1")
    if ks[-1] > data.n_features:
        raise InputError(f"k={ks[-1]} exceeds the {data.n_features} available features")
    train, val = data.split(1.0 - cfg.val_fraction, substream(cfg.seed, "split"))
    if model is None:
        model, _ = _train_mlp(cfg, train, "train")
    elif model.n_inputs != data.n_features:
        raise DimensionError("dataset columns vs model inputs", model.n_inputs, data.n_features)
    if cfg.algorithm == "ig":
        rounds, g_evals = 1, cfg.steps
    else:
        rounds = cfg.rounds or math.ceil(ks[-1] / cfg.per_round)
        g_evals = rounds * (1 if cfg.algorithm == "sg" else cfg.steps)
    groups = min(g_evals, train.n_batches)
    if groups < g_evals:
        logger.info("%d gradient evaluations over %d batches: batch groups are reused cyclically",
                    g_evals, train.n_batches)
    schedule = build_minibatch_schedule(train.n_batches, groups, substream(cfg.seed, "schedule"))
    obj = minibatch_posthoc_objective(model, train, schedule, _baseline(cfg, data.n_features, train))
    result = run_algorithm(obj, cfg, rounds=rounds)
    if len(result.order) < ks[-1]:
        raise InputError(f"the run ordered only {len(result.order)} features; raise --rounds or --per-round")
    logger.info("gradient evaluations: %d", result.diagnostics["gradient_evaluations"])

    def pruned_loss(cols):
        net, _ = _train_mlp(cfg, train.subset(columns=cols), "retrain")
        return cross_entropy(net, val.subset(columns=cols))

    reports = []
    for k in ks:
        cols = sorted(result.order[:k])
        reports.append({"k": k, "features": cols, "val_loss": pruned_loss(cols)})
    return {
        "algorithm": cfg.algorithm,
        "steps": cfg.steps,
        "rounds": rounds,
        "gradient_evaluations": int(result.diagnostics["gradient_evaluations"]),
        "order": result.order,
        "scores": [float(v) for v in result.scores],
        "reports": reports,
        "full_val_loss": pruned_loss(list(range(data.n_features))),
    }


def cmd_select(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    model = _load_model(cfg) if cfg.model else None
    if model is not None and not isinstance(model, SoftmaxNet):
        raise InputError("select needs an MLP model file")
    report = selection_pipeline(cfg, data, model)
    print(f"{cfg.algorithm}: gradient evaluations={report['gradient_evaluations']}")
    print(f"{'k':>4s}  {'val_loss':>10s}  features")
    for r in report["reports"]:
        print(f"{r['k']:>4d}  {r['val_loss']:>10.6f}  {' '.join(map(str, r['features']))}")
    print(f" all  {report['full_val_loss']:>10.6f}")
    out = _out_dir(cfg)
    if out:
        _write_json(os.path.join(out, "selection.json"), report)
        with open(os.path.join(out, "selection.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "val_loss", "features"])
            for r in report["reports"]:
                w.writerow([r["k"], repr(r["val_loss"]), " ".join(map(str, r["features"]))])
        if cfg.figures:
            plotting.plot_selection_losses([(r["k"], r["val_loss"]) for r in report["reports"]],
                                           os.path.join(out, "selection.png"))
    return EXIT_OK


def compression_rows(cfg: RunConfig, gcn: TinyGCN, graph) -> tuple:
    """Rows ``(ratio, accuracy, selector, seed)`` for all four selectors and the all-edge accuracy."""
    R = cfg.rounds or 10
    ig = integrated_gradients(gnn_edge_objective(gcn, graph, "all"), cfg.steps, "absolute", cfg.threads)
    gp = greedy_pig(gnn_edge_objective(gcn, graph, "all"),
                    AlgoConfig(rounds=R, per_round=math.ceil(graph.num_edges / R), steps=cfg.steps,
                               rng_seed=cfg.seed), cfg.threads)
    rows = []
    reference = None
    for i in range(cfg.repeats):
        seed = cfg.seed + i
        for name, kind in (("random", "uniform"), ("degree-weighted", "degree_weighted")):
            s = substream(seed, f"selector/{kind}")
            c = compression_curve(gcn, graph, lambda r, k=kind, s=s: baseline_edge_selector(graph, k, r, s),
                                  cfg.ratios)
            rows += [(r, a, name, seed) for r, a in c.points]
            reference = c.reference
    for name, res in (("pig", ig), ("greedy-pig", gp)):
        c = compression_curve(gcn, graph, res.order, cfg.ratios)
        rows += [(r, a, name, cfg.seed) for r, a in c.points]
        reference = c.reference
    return rows, reference


def cmd_graph_compress(cfg: RunConfig) -> int:
    graph = _load_graph(cfg)
    ratios = [float(r) for r in cfg.ratios]
    if ratios != sorted(ratios) or any(r < 0 or r > 1 for r in ratios):
        raise InputError("--ratios must be sorted values in [0, 1]")
    if cfg.repeats < 1:
        raise InputError("--repeats must be at least 1")
    if cfg.model:
        gcn = _load_model(cfg)
        if not isinstance(gcn, TinyGCN):
            raise InputError("graph-compress needs a GCN model file")
        if not gcn.trained:
            raise InputError("GCN model file is not marked as trained")
        if gcn.layer_dims[0] != graph.node_features.shape[1]:
            raise DimensionError("node feature columns vs GCN input", gcn.layer_dims[0],
                                 graph.node_features.shape[1])
    else:
        gcn = _train_gcn(cfg, graph)
    rows, reference = compression_rows(cfg, gcn, graph)
    print(f"all-edge accuracy {reference:.4f} on {graph.test.shape[0]} test nodes, {graph.num_edges} edges")
    for sel in ("random", "degree-weighted", "pig", "greedy-pig"):
        med = []
        for r in ratios:
            med.append(float(np.median([a for rr, a, s, _ in rows if s == sel and rr == r])))
        print(f"{sel:>16s}  " + "  ".join(f"{r:.2f}:{m:.3f}" for r, m in zip(ratios, med)))
    out = _out_dir(cfg)
    if out:
        with open(os.path.join(out, "compression.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ratio", "accuracy", "selector", "seed"])
            for r, a, s, seed in rows:
                w.writerow([repr(float(r)), repr(float(a)), s, seed])
        if cfg.figures:
            plotting.plot_compression(rows, os.path.join(out, "compression.png"), reference)
    return EXIT_OK


def _train_gcn(cfg: RunConfig, graph):
    dims = [graph.node_features.shape[1], 16, 16, graph.n_classes]
    gcn, _ = train_model(TinyGCN.init(dims, substream(cfg.seed, "train")), graph, *_schedule(cfg, "gcn"))
    return gcn


def replicate_table(cfg: RunConfig):
    counts = [int(c) for c in cfg.counts]
    weights = [float(w) for w in cfg.weights]
    if len(counts) != len(weights):
        raise InputError(f"{len(counts)} counts but {len(weights)} weights")
    if not cfg.beta > 0:
        raise InputError(f"--beta must be positive, got {cfg.beta}")
    if any(c < 1 for c in counts):
        raise InputError("counts must be positive")
    spec = ReplicationSpec(modular_objective(weights), tuple(counts), "smooth_max", cfg.beta)
    obj = replicate_features(spec)
    view = exact_redundancy_view(spec)
    ig = integrated_gradients(obj, cfg.steps, "absolute", cfg.threads)
    gp = greedy_pig(obj, AlgoConfig(rounds=obj.n, per_round=1, steps=cfg.steps), cfg.threads)
    rows = []
    for k in range(obj.n + 1):
        rows.append({
            "k": k,
            "ig_top": ig.order[:k],
            "ig_value": eval_set(view, ig.order[:k]),
            "greedy_pig_top": gp.order[:k],
            "greedy_pig_value": eval_set(view, gp.order[:k]),
            "optimum": brute_force_best_subset(view, k)[1],
        })
    return spec, ig, gp, rows


def cmd_replicate_demo(cfg: RunConfig) -> int:
    spec, ig, gp, rows = replicate_table(cfg)
    blocks = spec.blocks
    print("blocks: " + "  ".join(f"{j}:{b}" for j, b in enumerate(blocks)))
    print(f"one-shot IG scores: {np.round(ig.scores, 6).tolist()}")
    print(f"{'k':>3s}  {'IG top-k':<16s} {'G':>8s}   {'Greedy PIG top-k':<16s} {'G':>8s}   {'best':>8s}")
    for r in rows:
        print(f"{r['k']:>3d}  {str(r['ig_top']):<16s} {r['ig_value']:>8.4f}   "
              f"{str(r['greedy_pig_top']):<16s} {r['greedy_pig_value']:>8.4f}   {r['optimum']:>8.4f}")
    out = _out_dir(cfg)
    if out:
        with open(os.path.join(out, "replicate.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "ig_value", "greedy_pig_value", "optimum"])
            for r in rows:
                w.writerow([r["k"], repr(r["ig_value"]), repr(r["greedy_pig_value"]), repr(r["optimum"])])
        if cfg.figures:
            ks = np.array([r["k"] for r in rows])
            n = int(ks[-1])
            curves = {
                "IG": QualityCurve(ks, np.array([r["ig_value"] for r in rows]), n),
                "Greedy PIG": QualityCurve(ks, np.array([r["greedy_pig_value"] for r in rows]), n),
            }
            plotting.plot_quality_curves(curves, os.path.join(out, "replicate.png"), "replicated features")
    return EXIT_OK


def cmd_gen(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    if not out:
        raise InputError("gen needs --out")
    kind = cfg.kind
    if kind == "linreg-demo":
        save_model(linreg_solve(np.eye(2), [1.0, 2.0]), os.path.join(out, "linreg.json"))
    elif kind == "linreg":
        n = cfg.n or 8
        pairs = [(i, i + 1) for i in range(0, n - 1, 2)]
        try:
            problem = make_correlated_linreg(n, pairs, cfg.rho, substream(cfg.seed, "linreg"))
        except ValueError as exc:
            raise InputError(str(exc)) from None
        save_model(problem, os.path.join(out, "linreg.json"))
    elif kind == "mlp":
        n = cfg.n or 10
        net = SoftmaxNet.init([n, *DEFAULT_HIDDEN, cfg.classes], substream(cfg.seed, "mlp"))
        rows = np.random.default_rng(substream(cfg.seed, "inputs")).standard_normal((8, n))
        labels = np.argmax(mlp_forward(net, rows), axis=1)
        save_model(net, os.path.join(out, "model.json"))
        TabularDataset(rows, labels).to_csv(os.path.join(out, "data.csv"))
    elif kind == "tabular":
        spec = PlantedTabularSpec(n_features=cfg.n or 30, seed=cfg.seed)
        data, informative = make_planted_tabular(spec)
        data.to_csv(os.path.join(out, "data.csv"))
        _write_json(os.path.join(out, "planted.json"), {"informative": informative, **dataclasses.asdict(spec)})
    elif kind == "sbm":
        graph = make_sbm_graph(seed=substream(cfg.seed, "sbm"))
        write_graph(graph, os.path.join(out, "graph"))
        save_model(_train_gcn(cfg, graph), os.path.join(out, "gcn.json"))
    else:
        raise InputError(f"unknown generator {kind!r}")
    print(f"wrote {kind} to {out}")
    return EXIT_OK


COMMANDS = {
    "gradcheck": cmd_gradcheck,
    "attribute": cmd_attribute,
    "select": cmd_select,
    "graph-compress": cmd_graph_compress,
    "replicate-demo": cmd_replicate_demo,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if cfg.threads < 1:
            raise InputError("--threads must be at least 1")
        return COMMANDS[cfg.subcommand](cfg)
    except (InputError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
