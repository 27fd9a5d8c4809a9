"""KL divergence between a network and its edge-deleted approximation.

``kl_bound`` evaluates the divergence over all augmented-network variables in
closed form: one term per deleted edge built from the true parent posterior
and the edge parameters, plus a log-ratio of evidence probabilities.  This
quantity upper-bounds ``exact_kl``, the divergence between the posteriors
restricted to the source variables, which is computed here by brute-force
enumeration.

``score_edges`` ranks every network edge by the divergence achievable when
it alone is deleted with optimized parameters.  All per-edge quantities come
from derivative tables of a single compiled engine state, so scoring an edge
costs constant time per update after that one evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .deletion import DeletionPlan, EdgeParams, apply_params, augment
from .engine import WIDTH_CAP_DEFAULT
from .model import (
    ENUM_CAP_DEFAULT,
    Evidence,
    InconsistentEvidenceError,
    ModelError,
    Network,
    enumerate_joint,
)

INNER_MAX_ITERATIONS = 50
INNER_TOLERANCE = 1e-10


@dataclass(frozen=True)
class KlBreakdown:
    """Per-edge divergence terms, the log evidence-ratio correction, and the total."""

    edge_terms: tuple[float, ...]
    correction: float
    total: float

    @property
    def infinite(self) -> bool:
        return math.isinf(self.total)


def _edge_term(diag: np.ndarray, params: EdgeParams) -> float:
    term = 0.0
    prod = params.pm * params.se
    for t, pq in zip(diag, prod):
        if t <= 0.0:
            continue
        if pq <= 0.0:
            return math.inf
        term -= t * math.log(pq)
    return term


def kl_bound(
    aug: Network,
    nprime: Network,
    plan: DeletionPlan,
    ev: Evidence,
    evp: Evidence,
    *,
    width_cap: int = WIDTH_CAP_DEFAULT,
) -> KlBreakdown:
    """Closed-form divergence over all augmented-network variables."""
    st = engine.compile(aug, ev, width_cap)
    if st.pr_e <= 0.0:
        raise InconsistentEvidenceError("source network: evidence has zero probability")
    st_p = engine.compile(apply_params(nprime, plan), evp, width_cap)
    if st_p.pr_e <= 0.0:
        raise InconsistentEvidenceError(
            "approximate network: augmented evidence has zero probability"
        )
    terms = []
    for rec, params in zip(plan.edges, plan.params):
        pw = engine.pairwise_marginal(st, rec.parent, rec.clone)
        diag = np.diag(pw)
        terms.append(_edge_term(diag, params))
    correction = math.log(st_p.pr_e / st.pr_e)
    total = sum(terms) + correction if all(map(math.isfinite, terms)) else math.inf
    return KlBreakdown(tuple(terms), correction, total)


def exact_kl(
    aug: Network,
    nprime: Network,
    plan: DeletionPlan,
    ev: Evidence,
    evp: Evidence,
    *,
    cap: int = ENUM_CAP_DEFAULT,
) -> float:
    """Divergence between the two posteriors restricted to source variables.

    Clone variables are summed out of the approximate posterior first.  Both
    posteriors are materialized by enumeration, so this refuses on networks
    beyond the cap.
    """
    originals = set(aug.original_names())
    joint = enumerate_joint(aug, ev, cap)
    p = joint.marginalize_to(originals & set(joint.names())).normalize()
    current = apply_params(nprime, plan)
    joint_p = enumerate_joint(current, evp, cap)
    q = joint_p.marginalize_to(originals & set(joint_p.names())).normalize()
    if set(p.names()) != set(q.names()):
        raise ModelError("posteriors cover different source variables")
    q = q.reorder(p.names())
    total = 0.0
    p_flat = p.values.reshape(-1)
    q_flat = q.values.reshape(-1)
    for pi, qi in zip(p_flat, q_flat):
        if pi <= 0.0:
            continue
        if qi <= 0.0:
            return math.inf
        total += pi * math.log(pi / qi)
    return total


def single_edge_evaluate(derivs: np.ndarray, params: EdgeParams):
    """Evidence probability and its parameter derivatives for one deleted edge.

    ``derivs`` is the derivative table of the source network's evidence
    probability with respect to the edge's equivalence CPT (rows: parent
    state, columns: clone state).  Returns (pr', d pr'/d pm, d pr'/d se),
    each a plain sum over the table -- no inference happens here.
    """
    d = np.asarray(derivs, dtype=float)
    if d.ndim != 2 or d.shape[0] != params.se.size or d.shape[1] != params.pm.size:
        raise ModelError("derivative table shape does not match the edge parameters")
    d_pm = params.se @ d
    d_se = d @ params.pm
    pr_ep = float(params.se @ d @ params.pm)
    return pr_ep, d_pm, d_se


@dataclass(frozen=True)
class EdgeScore:
    parent: str
    child: str
    score: float
    params: EdgeParams
    iterations: int
    converged: bool


def _optimize_single_edge(derivs, true_marg, pr_e):
    """Single-edge fixed-point recursion on the closed-form quantities.

    One parameter set at a time: the prior is updated, the closed-form
    quantities are recomputed (constant time), then the soft-evidence row.
    """
    card_c = derivs.shape[1]
    params = EdgeParams.uniform(card_c)
    converged = False
    iterations = 0
    for it in range(1, INNER_MAX_ITERATIONS + 1):
        iterations = it
        old_pm, old_se = params.pm, params.se
        pr_ep, d_pm, _ = single_edge_evaluate(derivs, params)
        if pr_ep <= 0.0:
            break
        pm_new = _scaled(true_marg, pr_ep, d_pm)
        s_pm = pm_new.sum()
        if not (s_pm > 0):
            break
        params = EdgeParams(pm_new / s_pm, params.se)
        pr_ep, _, d_se = single_edge_evaluate(derivs, params)
        if pr_ep <= 0.0:
            break
        se_new = _scaled(true_marg, pr_ep, d_se)
        s_se = se_new.sum()
        if not (s_se > 0):
            break
        params = EdgeParams(params.pm, se_new / s_se)
        residual = max(
            float(np.max(np.abs(params.pm - old_pm))),
            float(np.max(np.abs(params.se - old_se))),
        )
        if residual < INNER_TOLERANCE:
            converged = True
            break
    pr_ep, _, _ = single_edge_evaluate(derivs, params)
    score = _edge_term(true_marg, params)
    if math.isfinite(score) and pr_ep > 0 and pr_e > 0:
        score += math.log(pr_ep / pr_e)
    else:
        score = math.inf
    return params, score, iterations, converged


def _scaled(true_marg, pr_ep, deriv):
    out = np.zeros_like(deriv)
    for i, (t, d) in enumerate(zip(true_marg, deriv)):
        if t <= 0.0:
            out[i] = 0.0
        elif d <= 0.0:
            out[i] = t * pr_ep / 1e-12
        else:
            out[i] = t * pr_ep / d
    return out


def score_edges(
    net: Network,
    ev: Evidence,
    *,
    width_cap: int = WIDTH_CAP_DEFAULT,
) -> list[EdgeScore]:
    """Score every deletable edge in isolation; smaller is better to delete.

    The input may be an original network (every edge is scored) or an
    augmented one (its intact equivalence edges are scored).  One engine
    compile serves all edges; ranking is ascending with declaration-order
    tie-breaks, and infinite scores sort last.
    """
    if net.kind == "approximate":
        raise ModelError("cannot score an already-approximate network")
    if net.kind == "original":
        aug = augment(net, net.edges())
    else:
        aug = net
    records = [r for r in aug.clone_edges if r.sevid is None]
    st = engine.compile(aug, ev, width_cap)
    scored = []
    for idx, rec in enumerate(records):
        derivs = engine.cpt_derivatives(st, aug.cpt(rec.clone))
        true_marg = engine.posterior_marginal(st, rec.parent)
        params, score, iterations, converged = _optimize_single_edge(
            derivs, true_marg, st.pr_e
        )
        scored.append(
            (score, idx, EdgeScore(rec.parent, rec.child, score, params, iterations, converged))
        )
    scored.sort(key=lambda t: (t[0], t[1]))
    return [s for _, _, s in scored]


def mutual_information_scores(
    net: Network,
    ev: Evidence,
    *,
    width_cap: int = WIDTH_CAP_DEFAULT,
) -> list[tuple[str, str, float]]:
    """Edges ranked ascending by conditional mutual information given evidence.

    Weak dependencies rank first (best to delete).  Ties break toward
    declaration order.
    """
    st = engine.compile(net, ev, width_cap)
    out = []
    for idx, (u, x) in enumerate(net.edges()):
        joint = engine.pairwise_marginal(st, u, x)
        pu = joint.sum(axis=1)
        px = joint.sum(axis=0)
        mi = 0.0
        for i in range(joint.shape[0]):
            for j in range(joint.shape[1]):
                pij = joint[i, j]
                if pij <= 0.0:
                    continue
                mi += pij * math.log(pij / (pu[i] * px[j]))
        out.append((max(mi, 0.0), idx, u, x))
    out.sort(key=lambda t: (t[0], t[1]))
    return [(u, x, mi) for mi, _, u, x in out]
