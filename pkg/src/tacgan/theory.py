"""Exact finite-distribution oracles for the degeneracy and bound results.

Everything here works on finite joint tables (states x classes), where the
divergences are exact sums. Conventions:

- KL uses 0*log(0/q) = 0 and returns +inf when p puts mass where q has none;
  the infinity is the caller's signal, not an exception.
- Ties in an argmax break toward the lowest index.
- The multi-distribution JSD is sum_k w_k KL(p_k || mixture) with uniform
  weights by default; for two distributions this is the standard JSD.
- The joint-approximation bound is evaluated under the counting measure, so
  its constants come out as c1 = half the sum of all conditional rows (M/2
  for proper rows) and c2 = 1/2; both are computed from the instance rather
  than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiscreteJoint:
    """Nonnegative (states M x classes K) table summing to 1."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        object.__setattr__(self, "table", table)
        if table.ndim != 2:
            raise ValueError(f"joint table must be 2-d, got shape {table.shape}")
        if np.any(table < 0):
            raise ValueError("joint table has negative entries")
        if abs(float(table.sum()) - 1.0) > 1e-12:
            raise ValueError(f"joint table sums to {table.sum()!r}, not 1")

    @property
    def n_states(self) -> int:
        return self.table.shape[0]

    @property
    def n_classes(self) -> int:
        return self.table.shape[1]

    def marginal_x(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def conditional_y_given_x(self) -> np.ndarray:
        """Row-stochastic P(Y|X); rows with zero marginal come back as NaN."""
        px = self.marginal_x()
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.table / px[:, None]

    def conditional_x_given_y(self) -> np.ndarray:
        """Column-conditionals Q(X|Y=k) as a (K, M) array."""
        py = self.marginal_y()
        with np.errstate(invalid="ignore", divide="ignore"):
            return (self.table / py[None, :]).T


def random_joint(m: int, k: int, seed: int, concentration: float = 1.0) -> DiscreteJoint:
    """Positive random table, Dirichlet-style, deterministic in seed."""
    if m < 1 or k < 1:
        raise ValueError(f"need m, k >= 1, got {m}, {k}")
    rng = np.random.default_rng(seed)
    table = rng.gamma(concentration, size=(m, k)) + 1e-12
    return DiscreteJoint(table / table.sum())


def random_uniform_prior_joint(m: int, k: int, seed: int) -> DiscreteJoint:
    """Random joint whose class marginal is exactly uniform."""
    rng = np.random.default_rng(seed)
    cols = rng.gamma(1.0, size=(m, k)) + 1e-12
    cols /= cols.sum(axis=0, keepdims=True)
    return DiscreteJoint(cols / k)


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


def kl(p, q) -> float:
    """sum p log(p/q); +inf flags an absolute-continuity violation."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distributions differ in length: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] == 0):
        return float("inf")
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def jsd_multi(dists, weights=None) -> float:
    """sum_k w_k KL(p_k || mixture); the mixture dominates each component."""
    dists = [np.asarray(d, dtype=np.float64) for d in dists]
    k = len(dists)
    if weights is None:
        weights = np.full(k, 1.0 / k)
    else:
        weights = np.asarray(weights, dtype=np.float64)
    mixture = sum(w * d for w, d in zip(weights, dists))
    return float(sum(w * kl(d, mixture) for w, d in zip(weights, dists)))


def mutual_information(joint: DiscreteJoint) -> float:
    """sum p(x,y) log(p(x,y) / (p(x) p(y)))."""
    t = joint.table
    px = joint.marginal_x()
    py = joint.marginal_y()
    mask = t > 0
    outer = px[:, None] * py[None, :]
    return float((t[mask] * np.log(t[mask] / outer[mask])).sum())


def conditional_entropy_y_given_x(joint: DiscreteJoint) -> float:
    """H(Y|X) = -sum p(x,y) log p(y|x)."""
    t = joint.table
    px = joint.marginal_x()
    mask = t > 0
    cond = t / px[:, None]
    return float(-(t[mask] * np.log(cond[mask])).sum())


# -- degenerate optimum of the auxiliary game -------------------------------


def theorem1_degenerate(qc: np.ndarray) -> np.ndarray:
    """One-hot rows at each row's argmax; ties break to the lowest index."""
    qc = np.asarray(qc, dtype=np.float64)
    out = np.zeros_like(qc)
    out[np.arange(qc.shape[0]), qc.argmax(axis=1)] = 1.0
    return out


def theorem1_lp_oracle(qc_row: np.ndarray) -> np.ndarray:
    """Brute-force the per-state linear program over its extreme points.

    The feasible set of conditional rows is a simplex, so the optimum of the
    linear objective -sum_i Q(Y=i) log qc_i sits on a one-hot vertex; this
    enumerates all K vertices and returns the minimizer.
    """
    qc_row = np.asarray(qc_row, dtype=np.float64)
    k = qc_row.shape[0]
    best, best_obj = None, np.inf
    for i in range(k):
        with np.errstate(divide="ignore"):
            obj = -np.log(qc_row[i])
        if obj < best_obj:
            best, best_obj = i, obj
    onehot = np.zeros(k)
    onehot[best] = 1.0
    return onehot


# -- twin classifier optimum -------------------------------------------------


def optimal_twin(class_conditionals: np.ndarray) -> np.ndarray:
    """Best-response twin: row x, class k gets Q(x|k) / sum_k' Q(x|k').

    class_conditionals is (K, M). States with zero mass under every class
    have no defined prediction and come back as NaN rows.
    """
    cond = np.asarray(class_conditionals, dtype=np.float64)
    totals = cond.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = (cond / totals[None, :]).T
    post[totals == 0.0] = np.nan
    return post


def u_of_g(class_conditionals: np.ndarray) -> float:
    """Value of the twin game at the twin's best response.

    sum_k E_{X ~ Q(.|Y=k)} log C*(X, k); zero-mass states are excluded with
    zero weight. Equals -K log K + K * jsd_multi(conditionals).
    """
    cond = np.asarray(class_conditionals, dtype=np.float64)
    post = optimal_twin(cond)
    total = 0.0
    for k in range(cond.shape[0]):
        mask = cond[k] > 0
        total += float((cond[k][mask] * np.log(post[mask, k])).sum())
    return total


# -- joint-distribution bound ------------------------------------------------


@dataclass
class BoundReport:
    lhs: float
    term_marginal: float
    term_kl_p: float
    term_kl_q: float
    c1: float
    c2: float
    rhs: float
    slack: float
    holds: bool


def _jsd_flat(p: np.ndarray, q: np.ndarray) -> float:
    return jsd_multi([p.ravel(), q.ravel()])


def _conditional_kl_counting(cond_a: np.ndarray, qc: np.ndarray) -> float:
    """Sum over defined states of KL(a_row || qc_row), counting measure."""
    total = 0.0
    for row_a, row_c in zip(cond_a, qc):
        if np.any(np.isnan(row_a)):
            continue
        total += kl(row_a, row_c)
        if total == float("inf"):
            return total
    return total


def theorem3_check(p: DiscreteJoint, q: DiscreteJoint, qc: np.ndarray) -> BoundReport:
    """Joint JSD against the three-term surrogate bound.

    lhs  = JSD(P_XY, Q_XY)
    rhs  = 2 c1 sqrt(2 JSD(P_X, Q_X))
         + c2 sqrt(2 KL(P_Y|X || qc)) + c2 sqrt(2 KL(Q_Y|X || qc))
    with c1 = half the total mass of P's defined conditional rows and
    c2 = half of Q_X's total mass, both under the counting measure. Infinite
    KL terms make the bound hold vacuously.
    """
    qc = np.asarray(qc, dtype=np.float64)
    if qc.shape != p.table.shape:
        raise ValueError(f"classifier table shape {qc.shape} != joint shape {p.table.shape}")
    lhs = _jsd_flat(p.table, q.table)
    # the divergences are nonnegative by theory; rounding can leave them a
    # hair below zero, which would turn the square roots into NaN
    jsd_x = max(jsd_multi([p.marginal_x(), q.marginal_x()]), 0.0)

    cond_p = p.conditional_y_given_x()
    cond_q = q.conditional_y_given_x()
    defined_p = ~np.isnan(cond_p).any(axis=1)
    c1 = 0.5 * float(cond_p[defined_p].sum())
    c2 = 0.5 * float(q.marginal_x().sum())

    kl_p = max(_conditional_kl_counting(cond_p, qc), 0.0)
    kl_q = max(_conditional_kl_counting(cond_q, qc), 0.0)

    term_marginal = 2.0 * c1 * np.sqrt(2.0 * jsd_x)
    term_kl_p = c2 * np.sqrt(2.0 * kl_p)
    term_kl_q = c2 * np.sqrt(2.0 * kl_q)
    rhs = float(term_marginal + term_kl_p + term_kl_q)
    slack = rhs - lhs
    return BoundReport(
        lhs=lhs,
        term_marginal=float(term_marginal),
        term_kl_p=float(term_kl_p),
        term_kl_q=float(term_kl_q),
        c1=c1,
        c2=c2,
        rhs=rhs,
        slack=slack,
        holds=bool(slack >= -1e-9),
    )
