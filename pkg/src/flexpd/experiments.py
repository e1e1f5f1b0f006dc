"""Experiment configuration, orchestration, sweeps and CSV traces.

Configurations are JSON documents (see README for the grammar). One run is a
(variant, T, seed) triple on the problem instance drawn from that seed.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import (TRACE_COLUMNS, ConfigurationError, RunTrace, StopRule, Stepsizes,
                   reference_solution, solve)
from .graph import GraphError, Topology, build_topology, make_network, spectral_gap
from .objective import (LibsvmError, QuadraticObjective, diabetes_like_dataset, load_libsvm,
                        logistic_from_dataset, random_quadratic)
from .stepsize import CertificateError, SearchConfig, certify, tuned_stepsize

ALL_VARIANTS = ("F", "G", "C", "EXTRA", "MM")
STEPSIZE_MODES = ("certificate", "tuned", "fixed")
CERTIFIED_FAILURES = ("diverged", "invariant_violation")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "quadratic"
    n: int = 10
    coef_range: tuple = (1, 1000)
    offset_range: tuple = (1, 100)
    dataset_path: str | None = None
    kappa: float = 0.01

    def validate(self):
        if self.kind not in ("quadratic", "logistic"):
            raise ConfigError(f"problem.kind must be quadratic or logistic, got {self.kind!r}")
        if self.n < 2:
            raise ConfigError("problem.n must be at least 2")
        if self.kind == "quadratic" and (self.coef_range[0] < 1 or self.coef_range[0] > self.coef_range[1]):
            raise ConfigError("problem.coef_range must be [lo, hi] with 1 <= lo <= hi")
        if self.kind == "logistic" and not self.kappa > 0:
            raise ConfigError("problem.kappa must be positive")


@dataclass(frozen=True)
class VariantSpec:
    """One algorithm with its inner-step counts and stepsize rule.

    ``beta`` may be a number or the string ``"T"`` (dual stepsize equal to
    the inner-step count). ``alpha_range``/``beta_range`` bound the random
    search of ``mode="tuned"``.
    """

    name: str
    T: tuple = (1,)
    mode: str = "certificate"
    alpha: float | None = None
    beta: float | str | None = None
    alpha_frac: float = 0.9
    beta_frac: float = 0.9
    eta: dict = field(default_factory=dict)
    budget: int = 30
    search_seed: int = 0
    alpha_range: tuple = (1e-4, 1.0)
    beta_range: tuple = (1e-3, 10.0)
    tune_max_iters: int | None = None

    def validate(self):
        if self.name not in ALL_VARIANTS:
            raise ConfigError(f"unknown variant {self.name!r}; expected one of {ALL_VARIANTS}")
        if self.mode not in STEPSIZE_MODES:
            raise ConfigError(f"unknown stepsize mode {self.mode!r}")
        if not self.T or any(int(t) != t or t < 1 for t in self.T):
            raise ConfigError("T must be a list of positive integers")
        if self.mode == "certificate" and self.name not in ("F", "G", "C"):
            raise ConfigError(f"{self.name} has no certificate; use mode tuned or fixed")
        if self.mode == "fixed" and self.alpha is None:
            raise ConfigError(f"variant {self.name}: fixed mode needs alpha")
        if not (0 < self.alpha_frac < 1 and 0 < self.beta_frac < 1):
            raise ConfigError("alpha_frac and beta_frac must lie in (0, 1)")
        if isinstance(self.beta, str) and self.beta != "T":
            raise ConfigError("beta must be a number or \"T\"")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")

    def beta_for(self, T: int):
        if self.beta == "T":
            return float(T)
        return None if self.beta is None else float(self.beta)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec = ProblemSpec()
    topology: str = "k_regular:4@0"
    variants: tuple = ()
    epsilon: float = 0.01
    max_iters: int = 100_000
    seeds: tuple = (0,)
    threads: int = 1
    record: bool = True

    def validate(self):
        self.problem.validate()
        try:
            Topology.parse(self.topology)
        except GraphError as exc:
            raise ConfigError(str(exc)) from None
        if not self.variants:
            raise ConfigError("at least one variant is required")
        for v in self.variants:
            v.validate()
        if not 0 < self.epsilon < 1:
            raise ConfigError("stop.epsilon must lie in (0, 1)")
        if self.max_iters < 0:
            raise ConfigError("stop.max_iters must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        return {
            "problem": d["problem"], "topology": self.topology, "variants": d["variants"],
            "stop": {"epsilon": self.epsilon, "max_iters": self.max_iters},
            "seeds": list(self.seeds), "threads": self.threads, "record": self.record,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {"problem", "topology", "variants", "stop", "seeds", "threads", "record"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        try:
            prob = dict(d.get("problem", {}))
            for key in ("coef_range", "offset_range"):
                if key in prob:
                    prob[key] = tuple(prob[key])
            problem = ProblemSpec(**prob)
            variants = []
            for v in d.get("variants", []):
                v = dict(v)
                T = v.get("T", [1])
                v["T"] = tuple(T) if isinstance(T, list) else (T,)
                for key in ("alpha_range", "beta_range"):
                    if key in v:
                        v[key] = tuple(v[key])
                variants.append(VariantSpec(**v))
            stop = d.get("stop", {})
            seeds = d.get("seeds", [0])
            if isinstance(seeds, str):
                seeds = parse_seed_range(seeds)
            cfg = cls(problem=problem, topology=d.get("topology", cls.topology),
                      variants=tuple(variants), epsilon=float(stop.get("epsilon", 0.01)),
                      max_iters=int(stop.get("max_iters", cls.max_iters)),
                      seeds=tuple(int(s) for s in seeds), threads=int(d.get("threads", 1)),
                      record=bool(d.get("record", True)))
        except TypeError as exc:
            raise ConfigError(f"bad configuration field: {exc}") from None
        return cfg.validate()


def load_config(path) -> ExperimentConfig:
    """Read a JSON configuration file (I/O errors propagate as ``OSError``)."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)


def parse_seed_range(text: str) -> tuple:
    """``"a..b"`` (inclusive), ``"a,b,c"`` or a single integer."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ConfigError(f"empty seed range {text!r}")
            return tuple(range(lo, hi + 1))
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"bad seed specification {text!r}") from None


# ---------------------------------------------------------------------------
# problem instances


@dataclass
class Instance:
    net: object
    obj: object
    ref: tuple
    provenance: dict


def build_instance(problem: ProblemSpec, topology: str, seed: int, data_cache=None) -> Instance:
    """Network, objective and reference solution for one seed.

    The graph comes from ``topology`` (its own ``@seed``, so every problem
    seed shares one graph); coefficients or the data partition come from
    ``seed``.
    """
    g = build_topology(topology, problem.n)
    net = make_network(g)
    prov = {"topology": g.topology.label(), "seed": seed}
    if problem.kind == "quadratic":
        obj = random_quadratic(problem.n, np.random.default_rng(seed),
                               problem.coef_range, problem.offset_range)
        ref = reference_solution(net, obj)
        prov["x_star"] = "closed form sum(c_i b_i)/sum(c_i)"
    else:
        ds = _dataset(problem, data_cache)
        obj = logistic_from_dataset(ds, problem.n, problem.kappa, seed)
        ref = reference_solution(net, obj, method="gd")
        prov["x_star"] = "centralized gradient descent to |grad| <= 1e-12"
        prov["dataset"] = problem.dataset_path or "diabetes-like stand-in (768 x 8, seed 0)"
    return Instance(net, obj, ref, prov)


def _dataset(problem: ProblemSpec, cache):
    key = problem.dataset_path
    if cache is not None and key in cache:
        return cache[key]
    ds = load_libsvm(problem.dataset_path) if problem.dataset_path else diabetes_like_dataset(0)
    if cache is not None:
        cache[key] = ds
    return ds


# ---------------------------------------------------------------------------
# runs


def _run_one(cfg: ExperimentConfig, spec: VariantSpec, T: int, inst: Instance) -> RunTrace:
    meta = {"variant": spec.name, "T": T, "mode": spec.mode, **inst.provenance}
    stop = StopRule(cfg.epsilon, cfg.max_iters)
    net, steps, certified = inst.net, None, False
    try:
        if spec.mode == "certificate":
            kw = {f"eta{k}" if not str(k).startswith("eta") else k: v for k, v in spec.eta.items()}
            cert = certify(spec.name, inst.net, inst.obj, T, beta=spec.beta_for(T),
                           alpha_frac=spec.alpha_frac, beta_frac=spec.beta_frac, **kw)
            meta["certificate"] = cert.to_text()
            net, steps, certified = cert.network(inst.net), cert, cert.admissible
            meta["certified"] = certified
        elif spec.mode == "tuned":
            search = SearchConfig(spec.alpha_range, spec.beta_range, spec.search_seed,
                                  tol=cfg.epsilon, max_iters=spec.tune_max_iters or cfg.max_iters)
            res = tuned_stepsize(spec.name, inst.net, inst.obj, T, search, spec.budget, ref=inst.ref)
            meta["tuning"] = f"budget={spec.budget} seed={spec.search_seed} best_iterations={res.iterations}"
            steps = _explicit_steps(spec.name, T, res.alpha, res.beta)
        else:
            steps = _explicit_steps(spec.name, T, spec.alpha, spec.beta_for(T) or 1.0)
        if spec.mode != "certificate" and spec.name not in ("EXTRA",):
            net = inst.net.scaled(steps.beta)
        return solve(spec.name, net, inst.obj, steps, stop=stop, ref=inst.ref,
                     certified=certified, record=cfg.record, metadata=meta)
    except (ConfigurationError, CertificateError) as exc:
        return RunTrace(meta, [], status="rejected", message=str(exc))


def _explicit_steps(name, T, alpha, beta):
    if name == "EXTRA":
        return Stepsizes(alpha, 1.0, 1, name)
    return Stepsizes(alpha, beta, T, name)


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> list[RunTrace]:
    """One trace per (variant, T, seed), sorted by that key.

    Rejected configurations (e.g. FlexPD-G with rho(B) >= m, or an empty
    certificate set) yield a trace with status ``rejected`` and no rows.
    """
    cfg.validate()
    cache = {}
    instances = {s: build_instance(cfg.problem, cfg.topology, s, cache) for s in cfg.seeds}
    jobs = [(vi, spec, T, seed) for vi, spec in enumerate(cfg.variants)
            for T in (spec.T if spec.name not in ("EXTRA", "MM") else spec.T[:1])
            for seed in cfg.seeds]
    work = lambda job: (job[0], job[2], job[3], _run_one(cfg, job[1], job[2], instances[job[3]]))
    n_threads = threads or cfg.threads
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    results.sort(key=lambda r: r[:3])
    return [r[3] for r in results]


def certificate_failures(traces) -> list[RunTrace]:
    """Certified runs that diverged or broke the Lyapunov monotonicity."""
    return [t for t in traces if t.metadata.get("certified") and t.status in CERTIFIED_FAILURES]


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    label: str
    n: int
    spectral_gap: float
    variant: str
    T: int
    runs: int
    converged: int
    mean_iterations: float
    mean_comm_rounds: float
    mean_grad_evals: float

    HEADER = ("label", "n", "spectral_gap", "variant", "T", "runs", "converged",
              "mean_iterations", "mean_comm_rounds", "mean_grad_evals")

    def values(self):
        return tuple(getattr(self, k) for k in self.HEADER)


def _summarize(label, n, gap, traces) -> list[SweepRow]:
    rows = []
    keys = sorted({(t.metadata["variant"], t.metadata["T"]) for t in traces})
    for variant, T in keys:
        group = [t for t in traces if (t.metadata["variant"], t.metadata["T"]) == (variant, T)]
        done = [t for t in group if t.status == "converged"]
        mean = lambda j: float(np.mean([t.final[j] for t in done])) if done else math.nan
        rows.append(SweepRow(label, n, gap, variant, T, len(group), len(done),
                             mean(0), mean(4), mean(3)))
    return rows


def topology_sweep(cfg: ExperimentConfig, topologies, threads: int | None = None) -> list[SweepRow]:
    """Spectral gap and mean cost to ``epsilon`` for each topology and T."""
    out = []
    for tag in topologies:
        sub = replace(cfg, topology=tag, record=False)
        traces = run_experiment(sub, threads)
        g = build_topology(tag, cfg.problem.n)
        out += _summarize(g.topology.label(), cfg.problem.n, spectral_gap(g), traces)
    return out


def size_sweep(cfg: ExperimentConfig, sizes, threads: int | None = None) -> list[SweepRow]:
    """Mean cost to ``epsilon`` for each network size and T."""
    out = []
    for n in sizes:
        sub = replace(cfg, problem=replace(cfg.problem, n=int(n)), record=False)
        traces = run_experiment(sub, threads)
        g = build_topology(cfg.topology, int(n))
        out += _summarize(g.topology.label(), int(n), spectral_gap(g), traces)
    return out


def growth_ratios(rows: list[SweepRow], variant: str, T: int) -> dict:
    """Cost growth between the smallest and largest size, relative to the
    size ratio (values below 1 mean sublinear growth)."""
    sel = sorted((r for r in rows if r.variant == variant and r.T == T), key=lambda r: r.n)
    if len(sel) < 2:
        raise ValueError("need at least two sizes")
    lo, hi = sel[0], sel[-1]
    size = hi.n / lo.n
    return {
        "size_ratio": size,
        "iterations_ratio": hi.mean_iterations / lo.mean_iterations,
        "comm_ratio": hi.mean_comm_rounds / lo.mean_comm_rounds,
        "iterations_vs_linear": hi.mean_iterations / lo.mean_iterations / size,
        "comm_vs_linear": hi.mean_comm_rounds / lo.mean_comm_rounds / size,
    }


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def trace_filename(trace: RunTrace) -> str:
    m = trace.metadata
    return f"{m.get('variant', 'run')}_T{m.get('T', 1)}_seed{m.get('seed', 0)}.csv"


def write_trace_csv(trace: RunTrace, path) -> None:
    """Metadata as ``# key: value`` lines, then the header and data rows."""
    lines = []
    meta = dict(trace.metadata)
    meta["status"] = trace.status
    if trace.message:
        meta["message"] = trace.message
    for key in sorted(meta):
        for i, part in enumerate(str(meta[key]).splitlines() or [""]):
            lines.append(f"# {key}: {part}" if i == 0 else f"#   {part}")
    lines.append(",".join(TRACE_COLUMNS))
    lines += [",".join(_fmt(v) for v in row) for row in trace.rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_csv(traces, out_dir) -> list[str]:
    """Write one CSV per trace into ``out_dir``; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for tr in traces:
        path = os.path.join(out_dir, trace_filename(tr))
        write_trace_csv(tr, path)
        paths.append(path)
    return paths


def read_trace_csv(path) -> tuple[dict, list]:
    """Inverse of :func:`write_trace_csv` (metadata values as strings)."""
    meta, rows, last = {}, [], None
    with open(path, encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#   ") and last is not None:
                meta[last] += "\n" + line[4:]
            elif line.startswith("# "):
                key, _, val = line[2:].partition(": ")
                meta[key], last = val, key
            elif header is None:
                header = tuple(line.split(","))
                if header != TRACE_COLUMNS:
                    raise ValueError(f"{path}: unexpected header {line!r}")
            elif line:
                vals = line.split(",")
                rows.append(tuple(int(v) if j in (0, 3, 4) else float(v) for j, v in enumerate(vals)))
    return meta, rows


def write_summary_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SweepRow.HEADER) + "\n")
        for r in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in r.values()) + "\n")


__all__ = [
    "ConfigError", "ExperimentConfig", "ProblemSpec", "VariantSpec", "load_config",
    "parse_seed_range", "build_instance", "run_experiment", "topology_sweep", "size_sweep",
    "growth_ratios", "emit_csv", "write_trace_csv", "read_trace_csv", "write_summary_csv",
    "certificate_failures", "SweepRow", "LibsvmError", "QuadraticObjective",
]
