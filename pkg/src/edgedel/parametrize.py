"""Fixed-point search for edge parameters.

Two update rules are provided.  The belief-propagation rule ("ed-bp") sets
each clone prior from the derivative of the approximate evidence probability
with respect to the soft-evidence row, and vice versa; its fixed points make
the parent and clone posteriors agree.  The divergence rule ("ed-kl") scales
the true parent posterior by the approximate evidence probability over the
matching derivative; its fixed points make both posteriors agree with the
true one, which is exactly stationarity of the true-weighted KL divergence
between the source network and its approximation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import engine
from .deletion import DeletionPlan, EdgeParams, apply_params, deleted_records
from .engine import WIDTH_CAP_DEFAULT
from .model import Evidence, InconsistentEvidenceError, ModelError, Network

METHODS = ("ed-bp", "ed-kl")
SCHEDULES = ("sequential", "simultaneous")
INITS = ("uniform", "plan")

DENOM_FLOOR = 1e-12


class DegenerateUpdateError(ModelError):
    """An update produced an all-zero parameter vector."""


@dataclass(frozen=True)
class IterationConfig:
    method: str = "ed-kl"
    max_iterations: int = 200
    tolerance: float = 1e-8
    damping: float = 0.0
    schedule: str = "sequential"
    initialization: str = "uniform"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ModelError(f"unknown method {self.method!r}")
        if self.schedule not in SCHEDULES:
            raise ModelError(f"unknown schedule {self.schedule!r}")
        if self.initialization not in INITS:
            raise ModelError(f"unknown initialization {self.initialization!r}")
        if self.max_iterations < 0:
            raise ModelError("max_iterations must be >= 0")
        if not (self.tolerance > 0):
            raise ModelError("tolerance must be positive")
        if not (0.0 <= self.damping < 1.0):
            raise ModelError("damping must lie in [0, 1)")


@dataclass(frozen=True)
class SweepRecord:
    sweep: int
    residual: float
    kl_bound: float | None


@dataclass
class FixedPointReport:
    """Residuals and condition gaps for a plan.

    ``run`` fills residuals/iterations/converged; ``check_conditions`` fills
    the per-edge gaps (parent/clone posterior agreement, and agreement with
    the true posterior) and leaves residuals None.
    """

    residuals: tuple[float, ...] | None
    eq_match_gaps: tuple[float, ...] | None
    eq_exact_gaps: tuple[float, ...] | None
    iterations: int
    converged: bool


def _normalize(vec: np.ndarray, what: str) -> np.ndarray:
    s = vec.sum()
    if not (s > 0) or not np.all(np.isfinite(vec)):
        raise DegenerateUpdateError(f"update for {what} is degenerate (sum {s!r})")
    return vec / s


def _damp(new: np.ndarray, old: np.ndarray, damping: float, what: str) -> np.ndarray:
    if damping == 0.0:
        return new
    mixed = new ** (1.0 - damping) * old**damping
    return _normalize(mixed, what)


def _edge_derivatives(st, rec):
    """(d pm, d se) for one deleted edge: derivative of Pr'(e') with respect
    to the clone prior entries and to the observed soft-evidence row."""
    clone_cpt = st.net.cpt(rec.clone)
    sevid_cpt = st.net.cpt(rec.sevid)
    d_pm = engine.cpt_derivatives(st, clone_cpt)
    d_se = engine.cpt_derivatives(st, sevid_cpt)[:, 0]
    return np.asarray(d_pm, dtype=float).reshape(-1), np.asarray(d_se, dtype=float)


def _edkl_vector(true_marg, pr_ep, deriv, label) -> np.ndarray:
    out = np.zeros_like(deriv)
    for i, (t, d) in enumerate(zip(true_marg, deriv)):
        if d <= 0.0:
            if t <= 0.0:
                out[i] = 0.0
            else:
                warnings.warn(
                    f"zero derivative against positive true mass for {label}; "
                    f"clamping denominator",
                    RuntimeWarning,
                )
                out[i] = t * pr_ep / DENOM_FLOOR
        else:
            out[i] = t * pr_ep / d
    return out


def _sweep(
    nprime, plan, evp, method, true_marginals, damping, sequential, width_cap
):
    """One full pass over the plan's edges; returns (plan, per-edge residuals).

    Sequential mode updates one parameter set at a time: the clone prior is
    updated, the engine state is recomputed, then the soft-evidence row is
    updated, edge by edge.  Simultaneous mode computes every update from the
    single engine state compiled at the start of the sweep.
    """
    records = deleted_records(nprime, plan)
    residuals = []
    if not records:
        return plan, residuals
    start_params = plan.params
    shared = None
    if not sequential:
        shared = engine.compile(apply_params(nprime, plan), evp, width_cap)
    for i, rec in enumerate(records):
        label = f"edge {rec.parent} -> {rec.child}"
        true_marg = true_marginals[i] if true_marginals is not None else None
        old = start_params[i]
        if sequential:
            st = engine.compile(apply_params(nprime, plan), evp, width_cap)
            pm = _damp(
                _update_vector(st, rec, method, true_marg, "pm", label),
                plan.params[i].pm, damping, label,
            )
            plan = plan.with_params(i, EdgeParams(pm, plan.params[i].se))
            st = engine.compile(apply_params(nprime, plan), evp, width_cap)
            se = _damp(
                _update_vector(st, rec, method, true_marg, "se", label),
                plan.params[i].se, damping, label,
            )
            plan = plan.with_params(i, EdgeParams(pm, se))
        else:
            pm = _damp(
                _update_vector(shared, rec, method, true_marg, "pm", label),
                old.pm, damping, label,
            )
            se = _damp(
                _update_vector(shared, rec, method, true_marg, "se", label),
                old.se, damping, label,
            )
            plan = plan.with_params(i, EdgeParams(pm, se))
        residuals.append(
            max(
                float(np.max(np.abs(pm - old.pm))),
                float(np.max(np.abs(se - old.se))),
            )
        )
    return plan, residuals


def _update_vector(st, rec, method, true_marg, which, label) -> np.ndarray:
    """One new parameter vector ("pm" or "se") from the given engine state."""
    d_pm, d_se = _edge_derivatives(st, rec)
    if method == "ed-bp":
        # cross-pairing: the prior comes from the soft-evidence derivative
        # and the soft evidence from the prior derivative
        source = d_se if which == "pm" else d_pm
        if not np.any(source > 0):
            raise DegenerateUpdateError(
                f"all-zero derivative vector for {label} ({which} update)"
            )
        return _normalize(source, label)
    if st.pr_e <= 0.0:
        raise InconsistentEvidenceError(
            "approximate network assigns zero probability to the augmented evidence"
        )
    deriv = d_pm if which == "pm" else d_se
    return _normalize(_edkl_vector(true_marg, st.pr_e, deriv, label), label)


def edbp_step(nprime, plan, evp, *, damping=0.0, schedule="simultaneous",
              width_cap=WIDTH_CAP_DEFAULT):
    """One belief-propagation-style sweep; returns the updated plan."""
    plan, _ = _sweep(
        nprime, plan, evp, "ed-bp", None, damping, schedule == "sequential", width_cap
    )
    return plan


def edkl_step(nprime, plan, evp, true_marginals, *, damping=0.0,
              schedule="sequential", width_cap=WIDTH_CAP_DEFAULT):
    """One divergence-stationarity sweep; returns the updated plan.

    ``true_marginals`` holds, per plan edge, the exact posterior of the
    parent in the source network (computed once by the caller).
    """
    plan, _ = _sweep(
        nprime, plan, evp, "ed-kl", true_marginals, damping,
        schedule == "sequential", width_cap
    )
    return plan


def true_edge_marginals(aug: Network, ev: Evidence, plan: DeletionPlan,
                        width_cap=WIDTH_CAP_DEFAULT):
    """Exact parent posteriors per plan edge, plus Pr(e), from the source network."""
    st = engine.compile(aug, ev, width_cap)
    marginals = [engine.posterior_marginal(st, rec.parent) for rec in plan.edges]
    return marginals, st.pr_e


def _plan_kl_bound(plan, true_marginals, pr_e, pr_ep) -> float:
    total = 0.0
    for params, tm in zip(plan.params, true_marginals):
        prod = params.pm * params.se
        for t, pq in zip(tm, prod):
            if t <= 0.0:
                continue
            if pq <= 0.0:
                return math.inf
            total -= t * math.log(pq)
    return total + math.log(pr_ep / pr_e)


def run(
    nprime: Network,
    plan: DeletionPlan,
    evp: Evidence,
    cfg: IterationConfig,
    *,
    reference: tuple[Network, Evidence] | None = None,
    width_cap: int = WIDTH_CAP_DEFAULT,
):
    """Iterate sweeps until the parameter residual drops below tolerance.

    ``reference`` is the (augmented network, evidence) pair the approximation
    was built from.  It is required for "ed-kl" (the updates need the true
    parent posteriors) and optional for "ed-bp", where it only enables the
    KL-bound column of the trace.  Non-convergence is reported, not raised.
    The KL-bound trace need not decrease monotonically: fixed points are
    stationary points of the divergence, and the iteration is not a descent
    method.

    Returns (final plan, FixedPointReport, list of SweepRecord).
    """
    if cfg.initialization == "uniform":
        plan = DeletionPlan.uniform(nprime, plan.edges) if len(plan) else plan
    true_marginals = None
    pr_e = None
    if reference is not None:
        true_marginals, pr_e = true_edge_marginals(
            reference[0], reference[1], plan, width_cap
        )
    if cfg.method == "ed-kl" and len(plan) and true_marginals is None:
        raise ModelError("ed-kl requires the source network (reference=...)")

    sequential = cfg.schedule == "sequential"
    trace: list[SweepRecord] = []
    residuals: tuple[float, ...] = ()
    converged = False
    iterations = 0
    for sweep in range(1, cfg.max_iterations + 1):
        plan, res = _sweep(
            nprime, plan, evp, cfg.method, true_marginals, cfg.damping,
            sequential, width_cap
        )
        iterations = sweep
        residuals = tuple(res)
        worst = max(res) if res else 0.0
        kl = None
        if true_marginals is not None and pr_e is not None and pr_e > 0:
            st = engine.compile(apply_params(nprime, plan), evp, width_cap)
            if st.pr_e > 0:
                kl = _plan_kl_bound(plan, true_marginals, pr_e, st.pr_e)
        trace.append(SweepRecord(sweep, worst, kl))
        if worst < cfg.tolerance:
            converged = True
            break
    report = FixedPointReport(
        residuals=residuals,
        eq_match_gaps=None,
        eq_exact_gaps=None,
        iterations=iterations,
        converged=converged,
    )
    return plan, report, trace


def check_conditions(
    aug: Network,
    nprime: Network,
    plan: DeletionPlan,
    ev: Evidence,
    evp: Evidence,
    *,
    width_cap: int = WIDTH_CAP_DEFAULT,
) -> FixedPointReport:
    """Measure both fixed-point conditions for every plan edge.

    Per edge the "match" gap is the larger of
      max_u |Pr'(u|e') - Pr'(u'|e')|   and
      max_u |Pr'(u|e' minus this edge's s') - pm(u)|,
    i.e. how far the parent/clone posteriors are from agreeing.  The "exact"
    gap additionally compares both posteriors against the true Pr(u|e) from
    the source network.
    """
    records = deleted_records(nprime, plan)
    current = apply_params(nprime, plan)
    st_p = engine.compile(current, evp, width_cap)
    st = engine.compile(aug, ev, width_cap)
    match_gaps = []
    exact_gaps = []
    for rec, params in zip(records, plan.params):
        pu = engine.posterior_marginal(st_p, rec.parent)
        puc = engine.posterior_marginal(st_p, rec.clone)
        gap_a = float(np.max(np.abs(pu - puc)))
        st_r = engine.compile(current, evp.without(rec.sevid), width_cap)
        pu_r = engine.posterior_marginal(st_r, rec.parent)
        gap_b = float(np.max(np.abs(pu_r - params.pm)))
        match_gaps.append(max(gap_a, gap_b))
        true = engine.posterior_marginal(st, rec.parent)
        exact_gaps.append(
            max(
                float(np.max(np.abs(pu - true))),
                float(np.max(np.abs(puc - true))),
            )
        )
    return FixedPointReport(
        residuals=None,
        eq_match_gaps=tuple(match_gaps),
        eq_exact_gaps=tuple(exact_gaps),
        iterations=0,
        converged=False,
    )
