"""Linear classifiers: Minimal Complexity Machine and L1-hinge SVM.

The MCM minimizes h + C * sum(q) subject to
    1 <= y_i (u . x_i + v) + q_i <= h,   q_i >= 0
over free (u, v, h); h upper-bounds the margin span and with it the VC
dimension, which is what makes the trained models sparse. The SVM
baseline is the usual L1-hinge linear SVM trained by deterministic dual
coordinate descent. Multiclass is one-vs-one with majority voting.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .linprog import LpProblem, solve_lp, OPTIMAL

ACTIVE_TOL = 1e-6
SVM_TOL = 1e-6
SVM_MAX_EPOCHS = 1000


class TrainingError(RuntimeError):
    pass


@dataclass
class LabeledSet:
    vectors: np.ndarray  # (n, d)
    labels: list

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        if len(self.labels) != self.vectors.shape[0]:
            raise ValueError("labels and vectors must have equal length")
        if self.vectors.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("vectors contain non-finite values")

    def binary_labels(self) -> np.ndarray:
        y = np.asarray(self.labels, dtype=np.float64)
        if not set(np.unique(y)) <= {-1.0, 1.0}:
            raise ValueError("binary labels must be +1/-1")
        if len(np.unique(y)) < 2:
            raise ValueError("binary set must contain both labels")
        return y


@dataclass
class LinearModel:
    u: np.ndarray
    v: float
    h: float  # MCM margin-span bound; 0 for SVM models
    slacks_sum: float
    support_indices: list
    kind: str  # "mcm" | "svm"
    C: float


@dataclass
class OvoEnsemble:
    class_ids: list
    models: dict  # (class_i, class_j) -> LinearModel, i < j by sort order


def train_mcm(data: LabeledSet, C: float = 1.0) -> LinearModel:
    """Train the soft-margin linear MCM by solving its LP."""
    X = data.vectors
    y = data.binary_labels()
    n, d = X.shape
    if C <= 0:
        raise ValueError("C must be > 0")

    # variables: u (d, free), v (free), h (free), q (n, >= 0)
    nv = d + 2 + n
    obj = np.zeros(nv)
    obj[d + 1] = 1.0  # h
    obj[d + 2 :] = C  # q
    var_lo = np.full(nv, -np.inf)
    var_lo[d + 2 :] = 0.0
    p = LpProblem(n_vars=nv, objective=obj, var_lo=var_lo)
    for i in range(n):
        margin = [(j, y[i] * X[i, j]) for j in range(d)] + [(d, y[i]), (d + 2 + i, 1.0)]
        # h - y_i(u.x_i + v) - q_i >= 0
        p.add_row(margin + [(d + 1, -1.0)], hi=0.0)
        # y_i(u.x_i + v) + q_i >= 1
        p.add_row(margin, lo=1.0)

    sol = solve_lp(p)
    if sol.status != OPTIMAL:
        raise TrainingError(f"MCM LP did not solve: status {sol.status}")
    u = sol.x[:d]
    v = float(sol.x[d])
    h = float(sol.x[d + 1])
    # alternative optima can inflate individual slacks; use the minimal
    # slacks consistent with (u, v) so the active set is well defined
    raw = y * (X @ u + v)
    q = np.maximum(0.0, 1.0 - raw)
    margins = raw + q
    support = [
        i
        for i in range(n)
        if abs(h - margins[i]) <= ACTIVE_TOL or abs(margins[i] - 1.0) <= ACTIVE_TOL
    ]
    return LinearModel(
        u=u, v=v, h=h, slacks_sum=float(q.sum()), support_indices=support, kind="mcm", C=C
    )


def train_linear_svm(data: LabeledSet, C: float = 1.0) -> LinearModel:
    """L1-hinge linear SVM by dual coordinate descent.

    The bias is trained as an extra always-one feature (so it is
    regularized like the weights). Fixed pass order keeps training
    deterministic; convergence when the largest projected gradient over
    an epoch drops below 1e-6.
    """
    X = data.vectors
    y = data.binary_labels()
    n, d = X.shape
    if C <= 0:
        raise ValueError("C must be > 0")

    qdiag = (X**2).sum(axis=1) + 1.0  # +1 for the bias feature
    alpha = np.zeros(n)
    w = np.zeros(d)
    v = 0.0
    for _ in range(SVM_MAX_EPOCHS):
        max_pg = 0.0
        for i in range(n):
            g = y[i] * (X[i] @ w + v) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= C:
                pg = max(g, 0.0)
            else:
                pg = g
            max_pg = max(max_pg, abs(pg))
            if abs(pg) > 1e-14:
                old = alpha[i]
                alpha[i] = min(max(old - g / qdiag[i], 0.0), C)
                delta = (alpha[i] - old) * y[i]
                w += delta * X[i]
                v += delta
        if max_pg < SVM_TOL:
            break
    support = [i for i in range(n) if alpha[i] > 1e-8]
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + v))
    return LinearModel(
        u=w, v=float(v), h=0.0, slacks_sum=float(hinge.sum()), support_indices=support, kind="svm", C=C
    )


def predict(m: LinearModel, x: np.ndarray):
    """(score, label); a score of exactly zero maps to +1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != m.u.shape:
        raise ValueError(f"dimension mismatch: model {m.u.shape}, input {x.shape}")
    score = float(m.u @ x + m.v)
    return score, (1 if score >= 0.0 else -1)


def support_count(m: LinearModel) -> int:
    return len(m.support_indices)


TRAINERS = {"mcm": train_mcm, "svm": train_linear_svm}


def train_ovo(data: LabeledSet, trainer: str = "mcm", C: float = 1.0) -> OvoEnsemble:
    """One binary model per unordered class pair; the lower class id (in
    sorted order) maps to +1."""
    if trainer not in TRAINERS:
        raise ValueError(f"unknown trainer {trainer!r}")
    labels = np.asarray(data.labels)
    class_ids = sorted(set(data.labels))
    if len(class_ids) < 2:
        raise ValueError("need at least 2 classes")
    train = TRAINERS[trainer]
    models = {}
    for ci, cj in combinations(class_ids, 2):
        mask = (labels == ci) | (labels == cj)
        X = data.vectors[mask]
        y = np.where(labels[mask] == ci, 1, -1)
        models[(ci, cj)] = train(LabeledSet(vectors=X, labels=list(y)), C=C)
    return OvoEnsemble(class_ids=class_ids, models=models)


def predict_ovo(e: OvoEnsemble, x: np.ndarray):
    """Majority vote over pairwise models; ties broken by the summed
    signed score toward each class, then by the lowest class id."""
    votes = {c: 0 for c in e.class_ids}
    margin = {c: 0.0 for c in e.class_ids}
    for (ci, cj), m in e.models.items():
        score, label = predict(m, x)
        winner = ci if label == 1 else cj
        votes[winner] += 1
        margin[ci] += score
        margin[cj] -= score
    # sorted() is stable, so equal (votes, margin) falls back to class order
    return min(e.class_ids, key=lambda c: (-votes[c], -margin[c], c))
