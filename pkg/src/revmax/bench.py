"""Experiment configuration, synthetic graphs and result persistence."""

from __future__ import annotations

import json
import logging
import os
import resource
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from ._rng import make_rng
from .allocators import ALGORITHMS, PageRankBaseline, CAGreedy, CSGreedy, TICARM, TICSRM
from .economics import INCENTIVE_KINDS, SPREAD_SOURCES, IncentiveModel, Instance
from .exceptions import RevMaxError, ValidationError
from .graph import AdCampaign, Graph, load_graph, weighted_cascade_probabilities, write_graph
from .oracle import mc_spread

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SYNTH_KINDS = ("star", "chain", "random-directed", "two-community")
DEFAULT_EPSILON = {"quality": 0.1, "scalability": 0.3}


class ConfigError(ValidationError):
    """Aggregated configuration problems; ``errors`` holds one message each."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# --------------------------------------------------------------------------
# Synthetic graphs


def synth_graph(kind: str, params: dict | None = None, rng=None, path=None, wc: bool = False) -> Graph:
    """Build a small synthetic graph and optionally write it as an edge list.

    Kinds and their parameters:
        star: ``leaves``; arcs go from the centre (node 0) to each leaf.
        chain: ``n``; arcs i -> i+1.
        random-directed: ``n``, ``m``; exactly m distinct arcs, no self-loops.
        two-community: ``n1``, ``n2``, ``p_in``, ``p_out``; each ordered pair
            is an arc independently with the in- or cross-community probability.

    Every kind accepts ``p`` (constant arc probability, default 0.1) and
    ``topics`` (default 1). ``wc=True`` replaces probabilities with 1/in-degree.
    """
    params = dict(params or {})
    rng = make_rng(rng)
    p = float(params.pop("p", 0.1))
    topics = int(params.pop("topics", 1))
    if not 0 <= p <= 1:
        raise ValidationError("p must lie in [0, 1]")
    if kind == "star":
        k = int(params.get("leaves", 5))
        if k < 0:
            raise ValidationError("leaves must be >= 0")
        n, src, dst = k + 1, np.zeros(k, np.int64), np.arange(1, k + 1)
    elif kind == "chain":
        n = int(params.get("n", 5))
        if n < 1:
            raise ValidationError("n must be >= 1")
        src, dst = np.arange(n - 1), np.arange(1, n)
    elif kind == "random-directed":
        n, m = int(params.get("n", 100)), int(params.get("m", 400))
        if n < 1 or m < 0 or m > n * (n - 1):
            raise ValidationError(f"cannot place {m} distinct arcs on {n} nodes")
        codes = np.zeros(0, np.int64)
        while codes.size < m:
            draw = rng.integers(0, n * n, size=2 * (m - codes.size) + 16)
            draw = draw[draw // n != draw % n]
            # keep first occurrences in draw order for reproducibility
            merged = np.concatenate([codes, draw])
            _, first = np.unique(merged, return_index=True)
            codes = merged[np.sort(first)][:m]
        codes = np.sort(codes)
        src, dst = codes // n, codes % n
    elif kind == "two-community":
        n1, n2 = int(params.get("n1", 50)), int(params.get("n2", 50))
        p_in, p_out = float(params.get("p_in", 0.1)), float(params.get("p_out", 0.01))
        if n1 < 1 or n2 < 1 or not (0 <= p_in <= 1 and 0 <= p_out <= 1):
            raise ValidationError("two-community needs n1, n2 >= 1 and probabilities in [0, 1]")
        n = n1 + n2
        comm = np.arange(n) >= n1
        same = comm[:, None] == comm[None, :]
        live = rng.random((n, n)) < np.where(same, p_in, p_out)
        np.fill_diagonal(live, False)
        src, dst = np.nonzero(live)
    else:
        raise ValidationError(f"unknown graph kind {kind!r}; choose from {SYNTH_KINDS}")
    g = Graph(n, src, dst, np.full((len(src), topics), p))
    if wc:
        g = weighted_cascade_probabilities(g)
    if path is not None:
        write_graph(g, path)
    return g


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    campaigns: tuple
    graph_path: str | None = None
    graph_format: str = "edgelist"
    synth: dict | None = None
    incentive_model: str = "linear"
    alphas: tuple = (0.2,)
    spread_source: str = "monte-carlo"
    spread_runs: int = 1000
    algorithms: tuple = ("ti-carm", "ti-csrm")
    windows: tuple = (None,)
    mode: str = "quality"
    epsilon: float = 0.1
    ell: float = 1.0
    seed: int = 0
    oracle: str = "auto"
    oracle_runs: int = 10_000
    evaluate_runs: int = 1000
    output: str = "results"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["campaigns"] = [{"gamma": list(c.gamma), "cpe": c.cpe, "budget": c.budget} for c in self.campaigns]
        d["alphas"] = list(self.alphas)
        d["algorithms"] = list(self.algorithms)
        d["windows"] = list(self.windows)
        return d


def _line_index(node, path=(), out=None):
    """Map key paths of a composed YAML document to 1-based line numbers."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


def parse_config(data: dict, lines: dict | None = None, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Check a raw mapping and fill defaults; raises ConfigError listing every problem."""
    lines = lines or {}
    errors = []

    def err(path, msg):
        line = lines.get(tuple(path)) or lines.get(tuple(path[:-1]))
        errors.append(f"line {line}: {msg}" if line else msg)

    if not isinstance(data, dict):
        raise ConfigError(["config must be a mapping"])
    known = {"graph", "campaigns", "incentives", "algorithms", "windows", "mode", "epsilon", "ell", "seed",
             "oracle", "evaluate_runs", "output"}
    for k in data:
        if k not in known:
            err([k], f"unknown key {k!r}")

    graph_path, fmt, synth = None, "edgelist", None
    g = data.get("graph")
    if not isinstance(g, dict):
        err(["graph"], "graph section missing (needs 'path' or 'synth')")
    elif "synth" in g:
        synth = dict(g["synth"] or {})
        if synth.get("kind") not in SYNTH_KINDS:
            err(["graph", "synth"], f"synth kind must be one of {SYNTH_KINDS}")
    elif "path" in g:
        graph_path = str(Path(base_dir, g["path"]))
        fmt = g.get("format", "edgelist")
        if not Path(graph_path).is_file():
            err(["graph", "path"], f"graph file {graph_path} does not exist")
    else:
        err(["graph"], "graph needs 'path' or 'synth'")

    camps = []
    raw = data.get("campaigns")
    if not raw:
        err(["campaigns"], "at least one campaign is required")
    else:
        for i, c in enumerate(raw):
            where = ["campaigns", i]
            missing = [k for k in ("gamma", "cpe", "budget") if k not in (c or {})]
            if missing:
                err(where, f"campaign {i}: missing {', '.join(missing)}")
                continue
            try:
                camps.append(AdCampaign(i, tuple(c["gamma"]), float(c["cpe"]), float(c["budget"])))
            except (ValidationError, TypeError) as exc:
                err(where, f"campaign {i}: {exc}")

    inc = data.get("incentives") or {}
    model = inc.get("model", "linear")
    if model not in INCENTIVE_KINDS:
        err(["incentives", "model"], f"incentive model must be one of {INCENTIVE_KINDS}")
    alphas = inc.get("alpha", 0.2)
    alphas = tuple(float(a) for a in (alphas if isinstance(alphas, list) else [alphas]))
    if not alphas or any(a <= 0 for a in alphas):
        err(["incentives", "alpha"], "alpha values must be > 0")
    source = inc.get("spread_source", "monte-carlo")
    if source not in SPREAD_SOURCES:
        err(["incentives", "spread_source"], f"spread_source must be one of {SPREAD_SOURCES}")

    algos = tuple(data.get("algorithms", ("ti-carm", "ti-csrm")))
    for a in algos:
        if a not in ALGORITHMS:
            err(["algorithms"], f"unknown algorithm {a!r}")
    windows = data.get("windows", [None])
    windows = tuple(windows if isinstance(windows, list) else [windows])
    if any(w is not None and (not isinstance(w, int) or w < 1) for w in windows):
        err(["windows"], "windows must be positive integers or null")

    mode = data.get("mode", "quality")
    if mode not in DEFAULT_EPSILON:
        err(["mode"], "mode must be 'quality' or 'scalability'")
        mode = "quality"
    eps = float(data.get("epsilon", DEFAULT_EPSILON[mode]))
    if not 0 < eps < 1:
        err(["epsilon"], "epsilon must lie in (0, 1)")
    oracle = data.get("oracle") or {}
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        campaigns=tuple(camps), graph_path=graph_path, graph_format=fmt, synth=synth,
        incentive_model=model, alphas=alphas, spread_source=source, spread_runs=int(inc.get("runs", 1000)),
        algorithms=algos, windows=windows, mode=mode, epsilon=eps, ell=float(data.get("ell", 1.0)),
        seed=int(data.get("seed", 0)), oracle=oracle.get("kind", "auto"), oracle_runs=int(oracle.get("runs", 10_000)),
        evaluate_runs=int(data.get("evaluate_runs", 1000)), output=str(data.get("output", "results")),
    )


def validate_config(path) -> ExperimentConfig:
    """Load, check and normalise a YAML config file."""
    text = Path(path).read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([str(exc)]) from exc
    lines = _line_index(node) if node is not None else {}
    return parse_config(data or {}, lines, Path(path).parent)


def _config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    d["campaigns"] = tuple(AdCampaign(i, tuple(c["gamma"]), c["cpe"], c["budget"]) for i, c in enumerate(d["campaigns"]))
    for k in ("alphas", "algorithms", "windows"):
        d[k] = tuple(d[k])
    return ExperimentConfig(**d)


# --------------------------------------------------------------------------
# Running


def load_experiment_graph(config: ExperimentConfig) -> Graph:
    if config.synth is not None:
        params = {k: v for k, v in config.synth.items() if k not in ("kind", "wc", "seed")}
        return synth_graph(config.synth["kind"], params, make_rng(config.synth.get("seed", config.seed), 99),
                           wc=bool(config.synth.get("wc", False)))
    return load_graph(config.graph_path, config.graph_format)


def _estimator(algorithm: str, window, config: ExperimentConfig):
    if algorithm == "ca-greedy":
        return CAGreedy(config.oracle, config.oracle_runs, config.seed)
    if algorithm == "cs-greedy":
        return CSGreedy(config.oracle, config.oracle_runs, config.seed)
    if algorithm == "ti-carm":
        return TICARM(config.epsilon, config.ell, config.seed)
    if algorithm == "ti-csrm":
        return TICSRM(config.epsilon, config.ell, window, config.seed)
    return PageRankBaseline(algorithm.split("-")[1], config.epsilon, config.ell, config.seed)


def _cells(config: ExperimentConfig):
    for alpha in config.alphas:
        for algo in config.algorithms:
            for w in (config.windows if algo == "ti-csrm" else (None,)):
                label = algo if w is None else f"{algo}[w={w}]"
                yield alpha, algo, w, label


def _run_cell(graph, config, alpha, algo, w, label):
    model = IncentiveModel(config.incentive_model, alpha, config.spread_source, config.spread_runs, config.seed)
    inst = Instance(graph, config.campaigns, model.fit_transform(graph, config.campaigns))
    est = _estimator(algo, w, config).fit(inst)
    a = est.allocation_
    rec = {
        "algorithm": algo, "label": label, "alpha": alpha, "window": w,
        "revenue": a.total_revenue, "seed_cost": a.total_incentive,
        "seed_counts": list(a.seed_counts), "seeds": [list(s) for s in a.seeds],
        "payments": list(a.payments), "thetas": getattr(est, "thetas_", None),
        "disjoint": a.is_disjoint(), "within_budgets": a.within_budgets(),
        "wall_time": est.trace_.wall_time,
    }
    if config.evaluate_runs > 0:
        rec["revenue_mc"] = float(sum(
            c.cpe * mc_spread(graph, c, s, config.evaluate_runs, make_rng(config.seed, 7, i)).value
            for i, (c, s) in enumerate(zip(config.campaigns, a.seeds))
        ))
    return rec, est.trace_


def _max_rss_kb():
    try:
        return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    except (AttributeError, OSError):  # pragma: no cover - platform specific
        return None


def _slug(label: str, alpha: float) -> str:
    return f"{label.replace('[', '_').replace(']', '').replace('=', '')}_a{alpha:g}"


TIMING_KEYS = ("wall_time", "max_rss_kb", "memory_supported")


def _safe_cell(graph, config, alpha, algo, w, label):
    t0 = time.perf_counter()
    try:
        rec, trace = _run_cell(graph, config, alpha, algo, w, label)
        rec["status"] = "ok"
        trace_json = trace.to_json()
    except (RevMaxError, ValueError, MemoryError) as exc:
        log.exception("cell %s alpha=%g failed", label, alpha)
        rec = {"algorithm": algo, "label": label, "alpha": alpha, "window": w, "status": "failed",
               "error": str(exc), "wall_time": time.perf_counter() - t0}
        trace_json = None
    rss = _max_rss_kb()
    rec["max_rss_kb"] = rss
    rec["memory_supported"] = rss is not None
    return rec, trace_json


def run_experiment(config: ExperimentConfig, output: str | os.PathLike | None = None,
                   jobs: int = 1) -> tuple[Path, bool]:
    """Run every (algorithm, alpha) cell; returns the output directory and
    whether every cell succeeded. A failing cell is recorded and skipped.

    ``jobs > 1`` runs cells in worker processes. Each cell derives its own
    random streams from the config seed, so results do not depend on it.
    """
    out = Path(output or config.output)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    graph = load_experiment_graph(config)
    cells = list(_cells(config))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            futures = [pool.submit(_safe_cell, graph, config, *c) for c in cells]
            results = [f.result() for f in futures]
    else:
        results = [_safe_cell(graph, config, *c) for c in cells]
    records, ok = [], True
    for (alpha, _, _, label), (rec, trace_json) in zip(cells, results):
        if trace_json is None:
            ok = False
        else:
            name = f"cells/{_slug(label, alpha)}.trace.json"
            (out / name).write_text(trace_json + "\n")
            rec["trace"] = name
        records.append(rec)
        log.info("%s alpha=%g: %s", label, alpha, rec.get("revenue", rec["status"]))
    doc = {
        "schema_version": SCHEMA_VERSION, "library_version": __version__, "seed": config.seed,
        "graph": {"n": graph.n, "m": graph.m, "topics": graph.topics},
        "config": config.to_dict(), "cells": records,
    }
    (out / "results.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_tables(out, records)
    return out, ok


def _write_tables(out: Path, records):
    good = [r for r in records if r["status"] == "ok"]
    labels = sorted({r["label"] for r in good})
    alphas = sorted({r["alpha"] for r in good})
    for name, key in (("revenue_vs_alpha.tsv", "revenue"), ("cost_vs_alpha.tsv", "seed_cost")):
        rows = ["alpha\t" + "\t".join(labels)]
        for a in alphas:
            vals = {r["label"]: r[key] for r in good if r["alpha"] == a}
            rows.append(f"{a:g}\t" + "\t".join(f"{vals[lab]:.6f}" if lab in vals else "" for lab in labels))
        (out / name).write_text("\n".join(rows) + "\n")
    rows = ["label\talpha\twindow\twall_time\trevenue"]
    for r in good:
        rows.append(f"{r['label']}\t{r['alpha']:g}\t{r['window']}\t{r['wall_time']:.6f}\t{r['revenue']:.6f}")
    (out / "time_vs_revenue.tsv").write_text("\n".join(rows) + "\n")


def load_results(path) -> dict:
    """Read a results document and check it against its embedded config."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema version {doc.get('schema_version')}")
    config = _config_from_dict(doc["config"])
    expected = {(lab, a) for a, _, _, lab in _cells(config)}
    got = {(c["label"], c["alpha"]) for c in doc["cells"]}
    if expected != got:
        raise ValidationError("result cells do not match the embedded config")
    for c in doc["cells"]:
        if c["status"] == "ok" and (c["revenue"] < 0 or c["seed_cost"] < 0 or not c["disjoint"]):
            raise ValidationError(f"cell {c['label']} violates result invariants")
    return doc


def strip_timing(doc: dict) -> dict:
    """Copy of a results document without the wall-time and memory fields."""
    doc = json.loads(json.dumps(doc))
    for c in doc["cells"]:
        for k in TIMING_KEYS:
            c.pop(k, None)
    return doc


def instance_from_config(config: ExperimentConfig, alpha: float | None = None) -> Instance:
    graph = load_experiment_graph(config)
    alpha = config.alphas[0] if alpha is None else alpha
    model = IncentiveModel(config.incentive_model, alpha, config.spread_source, config.spread_runs, config.seed)
    return Instance(graph, config.campaigns, model.fit_transform(graph, config.campaigns))
