"""Experiment machinery: synthetic networks, evidence sampling, and the
protocol runner that produces report rows.

Synthetic CPT rows are drawn independently from the uniform simplex
(symmetric Dirichlet).  Every sampled quantity is driven by a seeded
generator, so a spec plus a seed fully determines the output.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import divergence, engine, parametrize
from .deletion import (
    DeletionPlan,
    approximate_network,
    apply_params,
    augmented_evidence,
)
from .engine import WIDTH_CAP_DEFAULT, min_fill_order
from .model import (
    ENUM_CAP_DEFAULT,
    CapacityError,
    Cpt,
    Evidence,
    ModelError,
    Network,
    Variable,
)
from .netio import FormatError, ReportRow

EVIDENCE_MODES = ("leaves-from-joint", "random")


def _random_cpt(child: Variable, parents: tuple[Variable, ...], rng) -> Cpt:
    rows = 1
    for p in parents:
        rows *= p.card
    table = rng.dirichlet(np.ones(child.card), size=rows).reshape(-1)
    return Cpt(child, parents, table)


def chain_network(n: int, states: int = 2, rng=None) -> Network:
    """X1 -> X2 -> ... -> Xn with random CPT rows."""
    if n < 1:
        raise ModelError("chain needs at least one variable")
    rng = np.random.default_rng(0) if rng is None else rng
    labels = tuple(f"s{i}" for i in range(states))
    variables = [Variable(f"X{i + 1}", labels) for i in range(n)]
    cpts = []
    for i, v in enumerate(variables):
        parents = (variables[i - 1],) if i > 0 else ()
        cpts.append(_random_cpt(v, parents, rng))
    return Network(variables, cpts)


def grid_network(rows: int, cols: int, states: int = 2, rng=None) -> Network:
    """Grid DAG: node (i, j) has parents (i-1, j) and (i, j-1)."""
    if rows < 1 or cols < 1:
        raise ModelError("grid needs positive dimensions")
    rng = np.random.default_rng(0) if rng is None else rng
    labels = tuple(f"s{i}" for i in range(states))
    grid = [[Variable(f"N{i}_{j}", labels) for j in range(cols)] for i in range(rows)]
    variables = [grid[i][j] for i in range(rows) for j in range(cols)]
    cpts = []
    for i in range(rows):
        for j in range(cols):
            parents = []
            if i > 0:
                parents.append(grid[i - 1][j])
            if j > 0:
                parents.append(grid[i][j - 1])
            cpts.append(_random_cpt(grid[i][j], tuple(parents), rng))
    return Network(variables, cpts)


def parse_synthetic(token: str):
    """Recognize 'chain(N)' and 'grid(RxC)' network tokens; None otherwise."""
    token = token.strip().lower()
    if token.startswith("chain(") and token.endswith(")"):
        inner = token[6:-1]
        try:
            return ("chain", int(inner))
        except ValueError:
            raise FormatError(f"bad chain size {inner!r}") from None
    if token.startswith("grid(") and token.endswith(")"):
        inner = token[5:-1]
        parts = inner.split("x")
        if len(parts) != 2:
            raise FormatError(f"bad grid shape {inner!r}")
        try:
            return ("grid", int(parts[0]), int(parts[1]))
        except ValueError:
            raise FormatError(f"bad grid shape {inner!r}") from None
    return None


def make_synthetic(token: str, states: int, rng) -> Network:
    parsed = parse_synthetic(token)
    if parsed is None:
        raise FormatError(f"unknown synthetic network {token!r}")
    if parsed[0] == "chain":
        return chain_network(parsed[1], states, rng)
    return grid_network(parsed[1], parsed[2], states, rng)


def forward_sample(net: Network, rng) -> dict[str, str]:
    """One ancestral sample through the DAG; returns a full assignment."""
    sample: dict[str, int] = {}
    for name in net.topo_order():
        cpt = net.cpt(name)
        idx = tuple(sample[p.name] for p in cpt.parents)
        row = cpt.shaped[idx]
        total = row.sum()
        if not (total > 0):
            raise ModelError(f"cpt row for {name!r} sums to zero; cannot sample")
        sample[name] = int(rng.choice(len(row), p=row / total))
    return {name: net.var(name).states[i] for name, i in sample.items()}


def sample_evidence(net: Network, mode: str, rng) -> Evidence:
    """Evidence over all leaf variables, drawn per ``mode``.

    "leaves-from-joint" keeps the leaf assignments of one forward sample;
    "random" draws a uniform independent state per leaf.
    """
    if mode not in EVIDENCE_MODES:
        raise ModelError(f"unknown evidence mode {mode!r}")
    leaves = net.leaves()
    if mode == "leaves-from-joint":
        full = forward_sample(net, rng)
        return Evidence({name: full[name] for name in leaves})
    assignments = {}
    for name in leaves:
        var = net.var(name)
        assignments[name] = var.states[int(rng.integers(var.card))]
    return Evidence(assignments)


@dataclass(frozen=True)
class ExperimentSpec:
    network: str
    instances: int = 50
    evidence: str = "leaves-from-joint"
    ks: tuple[int, ...] = (0, 1, 2)
    methods: tuple[str, ...] = ("ed-kl",)
    selections: tuple[str, ...] = ("guided",)
    seed: int = 0
    states: int = 2
    max_iterations: int = 200
    tolerance: float = 1e-8
    damping: float = 0.0
    real_timings: bool = False

    def __post_init__(self):
        if self.instances < 1:
            raise ModelError("instances must be >= 1")
        if self.evidence not in EVIDENCE_MODES:
            raise ModelError(f"unknown evidence mode {self.evidence!r}")
        for m in self.methods:
            if m not in parametrize.METHODS:
                raise ModelError(f"unknown method {m!r}")
        for s in self.selections:
            if s not in ("rand", "guided", "mi"):
                raise ModelError(f"unknown selection {s!r}")


def parse_experiment_spec(text: str) -> ExperimentSpec:
    """Key = value lines mirroring the ExperimentSpec fields."""
    values: dict[str, str] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise FormatError("spec line needs 'key = value'", i)
        key, _, val = content.partition("=")
        key = key.strip().lower().replace("-", "_")
        values[key] = val.strip()
    if "network" not in values:
        raise FormatError("experiment spec needs a network")
    kwargs: dict = {"network": values.pop("network")}
    try:
        if "instances" in values:
            kwargs["instances"] = int(values.pop("instances"))
        if "evidence" in values:
            kwargs["evidence"] = values.pop("evidence")
        if "k" in values:
            kwargs["ks"] = tuple(int(t) for t in values.pop("k").split(",") if t.strip())
        if "methods" in values:
            kwargs["methods"] = tuple(
                t.strip() for t in values.pop("methods").split(",") if t.strip()
            )
        if "selections" in values:
            kwargs["selections"] = tuple(
                t.strip() for t in values.pop("selections").split(",") if t.strip()
            )
        if "seed" in values:
            kwargs["seed"] = int(values.pop("seed"))
        if "states" in values:
            kwargs["states"] = int(values.pop("states"))
        if "max_iters" in values:
            kwargs["max_iterations"] = int(values.pop("max_iters"))
        if "tol" in values:
            kwargs["tolerance"] = float(values.pop("tol"))
        if "damping" in values:
            kwargs["damping"] = float(values.pop("damping"))
        if "timings" in values:
            kwargs["real_timings"] = values.pop("timings") == "real"
    except ValueError as exc:
        raise FormatError(f"bad spec value: {exc}") from None
    if values:
        raise FormatError(f"unknown spec keys: {sorted(values)}")
    return ExperimentSpec(**kwargs)


@dataclass
class InstanceOutcome:
    """Everything one deletion run produced, beyond the report row."""

    row: ReportRow
    plan: DeletionPlan | None = None
    marginals: dict[str, np.ndarray] = field(default_factory=dict)
    trace: list = field(default_factory=list)


def run_deletion_instance(
    net: Network,
    ev: Evidence,
    edges,
    method: str,
    *,
    network_id: str = "net",
    instance_id: int = 0,
    selection_tag: str = "guided",
    warm_params=None,
    max_iterations: int = 200,
    tolerance: float = 1e-8,
    damping: float = 0.0,
    schedule: str = "sequential",
    width_cap: int = WIDTH_CAP_DEFAULT,
    enum_cap: int = ENUM_CAP_DEFAULT,
    compute_exact_kl: bool = True,
    compute_marginals: bool = False,
    real_timings: bool = False,
) -> InstanceOutcome:
    """Delete ``edges`` from ``net``, parametrize with ``method``, measure.

    ``warm_params`` (one EdgeParams per edge) switches initialization from
    uniform to the given values.
    """
    start = time.perf_counter()
    aug, nprime, plan = approximate_network(net, edges, warm_params)
    evp = augmented_evidence(nprime, ev)
    cfg = parametrize.IterationConfig(
        method=method,
        max_iterations=max_iterations,
        tolerance=tolerance,
        damping=damping,
        schedule=schedule,
        initialization="plan" if warm_params is not None else "uniform",
    )
    plan, report, trace = parametrize.run(
        nprime, plan, evp, cfg, reference=(aug, ev), width_cap=width_cap
    )
    breakdown = divergence.kl_bound(aug, nprime, plan, ev, evp, width_cap=width_cap)
    kl_total = breakdown.total
    if -1e-9 <= kl_total < 0.0:
        kl_total = 0.0
    exact = None
    if compute_exact_kl:
        try:
            exact = divergence.exact_kl(aug, nprime, plan, ev, evp, cap=enum_cap)
            if -1e-9 <= exact < 0.0:
                exact = 0.0
        except CapacityError:
            exact = None
    current = apply_params(nprime, plan)
    width = min_fill_order(current).width
    elapsed_ms = int(round((time.perf_counter() - start) * 1000)) if real_timings else 0
    row = ReportRow(
        network=network_id,
        instance=instance_id,
        method=method,
        selection=selection_tag,
        edges_deleted=len(edges),
        iterations=report.iterations,
        converged=report.converged,
        kl_bound=kl_total,
        exact_kl=exact,
        map_ratio=None,
        constrained_treewidth=width,
        wall_time_ms=elapsed_ms,
    )
    outcome = InstanceOutcome(row=row, plan=plan, trace=trace)
    if compute_marginals:
        from .deletion import recover_marginals

        st = engine.compile(current, evp, width_cap)
        outcome.marginals = recover_marginals(current, plan, st)
    return outcome


def rank_edges(net: Network, ev: Evidence, selection: str, rng,
               width_cap: int = WIDTH_CAP_DEFAULT):
    """Ordered edge list (and per-edge warm-start params for 'guided')."""
    if selection == "rand":
        edges = net.edges()
        perm = rng.permutation(len(edges))
        return [edges[i] for i in perm], None
    if selection == "guided":
        scores = divergence.score_edges(net, ev, width_cap=width_cap)
        return [(s.parent, s.child) for s in scores], [s.params for s in scores]
    if selection == "mi":
        ranked = mutual_information_rank(net, ev, width_cap)
        return ranked, None
    raise ModelError(f"unknown selection {selection!r}")


def mutual_information_rank(net: Network, ev: Evidence, width_cap=WIDTH_CAP_DEFAULT):
    return [(u, x) for u, x, _ in divergence.mutual_information_scores(net, ev, width_cap=width_cap)]


def run_experiment(spec: ExperimentSpec, load_network=None) -> list[ReportRow]:
    """Execute the spec's (instance, method, selection, k) matrix.

    Synthetic networks are redrawn per instance (an instance is one sampled
    problem); file networks are loaded once and only the evidence varies.
    Failures of individual runs are recorded in-row and the run continues.
    Rows are ordered by (instance, method, selection, k).
    """
    synthetic = parse_synthetic(spec.network) is not None
    base_net = None
    if not synthetic:
        if load_network is None:
            raise ModelError("file networks need a loader")
        base_net = load_network(spec.network)
    rows: list[ReportRow] = []
    for instance in range(spec.instances):
        rng = np.random.default_rng([spec.seed, instance])
        net = (
            make_synthetic(spec.network, spec.states, rng) if synthetic else base_net
        )
        ev = sample_evidence(net, spec.evidence, rng)
        rankings = {}
        for sel in spec.selections:
            rankings[sel] = rank_edges(net, ev, sel, rng)
        for method in spec.methods:
            for sel in spec.selections:
                ranked, guided_params = rankings[sel]
                for k in spec.ks:
                    if k > len(ranked):
                        continue
                    warm = None
                    if method == "ed-kl" and guided_params is not None:
                        warm = guided_params[:k]
                    try:
                        outcome = run_deletion_instance(
                            net,
                            ev,
                            ranked[:k],
                            method,
                            network_id=spec.network,
                            instance_id=instance,
                            selection_tag=sel,
                            warm_params=warm if warm else None,
                            max_iterations=spec.max_iterations,
                            tolerance=spec.tolerance,
                            damping=spec.damping,
                            real_timings=spec.real_timings,
                        )
                        rows.append(outcome.row)
                    except ModelError:
                        rows.append(
                            ReportRow(
                                network=spec.network,
                                instance=instance,
                                method=method,
                                selection=sel,
                                edges_deleted=k,
                                iterations=0,
                                converged=False,
                                kl_bound=math.inf,
                                exact_kl=None,
                                map_ratio=None,
                                constrained_treewidth=-1,
                                wall_time_ms=0,
                            )
                        )
    return rows
