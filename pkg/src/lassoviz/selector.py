"""Per-class relevant filter selection by the mu-lasso.

Each class column solves ``min ||X^T w - l||^2  s.t.  ||w||_1 <= mu`` with the
spectral projected gradient method (Barzilai-Borwein steps, nonmonotone
Armijo line search) and an exact projection onto the L1 ball.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError

DROP_BELOW = 1e-12


def project_simplex_budget(u, mu):
    """Soft threshold ``tau`` such that sum(max(u - tau, 0)) == mu for nonneg ``u``."""
    s = np.sort(u)[::-1]
    css = np.cumsum(s)
    k = np.arange(1, s.size + 1)
    cond = s - (css - mu) / k > 0
    rho = int(np.nonzero(cond)[0][-1])
    return (css[rho] - mu) / (rho + 1)


def project_l1_ball(v, mu):
    """Euclidean projection of ``v`` onto {w : ||w||_1 <= mu}."""
    if mu < 0:
        raise ValueError("radius must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    if mu == 0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= mu:
        return v.copy()
    tau = project_simplex_budget(a, mu)
    return np.sign(v) * np.maximum(a - tau, 0.0)


@dataclass
class SPGOptions:
    tol: float = 1e-6
    max_iter: int = 500
    memory: int = 10
    gamma: float = 1e-4
    step_min: float = 1e-10
    step_max: float = 1e10
    # quadratic-interpolation backtracking; off by default because on quadratic
    # objectives it lands on the exact line minimum and the next BB step degrades
    # to a Cauchy step (zigzag). Plain halving is never worse on our test problems.
    interpolate: bool = False
    sigma1: float = 0.1
    sigma2: float = 0.9


@dataclass
class SolverReport:
    iterations: list = field(default_factory=list)
    objective: float = 0.0
    pg_norm: list = field(default_factory=list)
    wall_time: float = 0.0
    max_l1_excess: float = 0.0


def spg_lasso(Xt, y, mu, opts=None, trace_iterates=None):
    """Solve min ||Xt w - y||^2 s.t. ||w||_1 <= mu from w = 0.

    Returns (w, iterations, projected-gradient sup-norm, largest L1 excess over mu
    seen at any iterate).
    """
    opts = opts or SPGOptions()
    m = Xt.shape[1]
    w = np.zeros(m)
    r = Xt @ w - y
    f = float(r @ r)
    g = 2.0 * (Xt.T @ r)
    history = [f]
    pg = np.max(np.abs(project_l1_ball(w - g, mu) - w)) if m else 0.0
    alpha = 1.0 / max(np.max(np.abs(g)), 1e-300) if pg > 0 else 1.0
    alpha = min(max(alpha, opts.step_min), opts.step_max)
    excess = 0.0
    it = 0
    while it < opts.max_iter and pg > opts.tol:
        it += 1
        d = project_l1_ball(w - alpha * g, mu) - w
        gtd = float(g @ d)
        f_ref = max(history[-opts.memory:])
        Xd = Xt @ d
        lam = 1.0
        while True:
            r_new = r + lam * Xd
            f_new = float(r_new @ r_new)
            if f_new <= f_ref + opts.gamma * lam * gtd or lam < 1e-16:
                break
            # safeguarded quadratic interpolation on f(w + lam d)
            denom = 2.0 * (f_new - f - lam * gtd)
            lam_q = -gtd * lam * lam / denom if denom > 0 else -1.0
            if opts.interpolate and opts.sigma1 * lam <= lam_q <= opts.sigma2 * lam:
                lam = lam_q
            else:
                lam *= 0.5
        s = lam * d
        w = w + s
        r = r_new
        f = f_new
        g_new = 2.0 * (Xt.T @ r)
        yv = g_new - g
        g = g_new
        sty = float(s @ yv)
        alpha = opts.step_max if sty <= 0 else float(s @ s) / sty
        alpha = min(max(alpha, opts.step_min), opts.step_max)
        history.append(f)
        excess = max(excess, float(np.abs(w).sum()) - mu)
        if trace_iterates is not None:
            trace_iterates.append(w.copy())
        pg = float(np.max(np.abs(project_l1_ball(w - g, mu) - w)))
    return w, it, pg, excess


@dataclass
class RelevanceMatrix:
    """Sparse per-class weights: ``columns[j]`` maps flat index -> weight."""

    columns: list
    m: int
    mu: float

    @property
    def C(self):
        return len(self.columns)

    def dense(self):
        W = np.zeros((self.m, self.C))
        for j, col in enumerate(self.columns):
            for k, v in col.items():
                W[k, j] = v
        return W

    def column(self, j):
        w = np.zeros(self.m)
        for k, v in self.columns[j].items():
            w[k] = v
        return w

    def nnz(self, j=None):
        if j is None:
            return sum(len(c) for c in self.columns)
        return len(self.columns[j])

    def support(self):
        """Sorted flat indices that are nonzero for at least one class."""
        return sorted(set().union(*[c.keys() for c in self.columns]))

    @classmethod
    def from_dense(cls, W, mu):
        cols = []
        for j in range(W.shape[1]):
            nz = np.nonzero(np.abs(W[:, j]) >= DROP_BELOW)[0]
            cols.append({int(k): float(W[k, j]) for k in nz})
        return cls(cols, W.shape[0], float(mu))

    def to_text(self):
        lines = [f"{self.m} {self.C} {self.mu!r}"]
        for j, col in enumerate(self.columns):
            for k in sorted(col):
                lines.append(f"{j} {k} {col[k]!r}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        from .data import DataFormatError

        try:
            return cls._load(path)
        except (ValueError, IndexError) as exc:
            raise DataFormatError(str(exc)) from exc

    @classmethod
    def _load(cls, path):
        with open(path) as fh:
            head = fh.readline().split()
            if len(head) != 3:
                raise ValueError(f"{path}: header must be 'm C mu'")
            m, c, mu = int(head[0]), int(head[1]), float(head[2])
            cols = [{} for _ in range(c)]
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                j, k, v = line.split()
                j, k = int(j), int(k)
                if not (0 <= j < c and 0 <= k < m):
                    raise ValueError(f"{path}:{lineno}: entry ({j}, {k}) out of range")
                cols[j][k] = float(v)
        return cls(cols, m, mu)


def solve_mu_lasso(mats, mu, opts=None):
    """Relevance matrix for every class; classes are independent subproblems."""
    X, L = np.asarray(mats.X, dtype=np.float64), np.asarray(mats.L, dtype=np.float64)
    if mu <= 0:
        raise ValueError("mu must be positive")
    if X.shape[1] != L.shape[1]:
        raise ValueError(f"X has {X.shape[1]} columns but L has {L.shape[1]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(L))):
        raise NonFiniteError("X and L must be finite")
    start = time.perf_counter()
    Xt = np.ascontiguousarray(X.T)
    report = SolverReport()
    W = np.zeros((X.shape[0], L.shape[0]))
    for j in range(L.shape[0]):
        w, it, pg, excess = spg_lasso(Xt, L[j], mu, opts)
        W[:, j] = w
        report.iterations.append(it)
        report.pg_norm.append(pg)
        report.max_l1_excess = max(report.max_l1_excess, excess)
    R = Xt @ W - L.T
    report.objective = float(np.sum(R * R))
    report.wall_time = time.perf_counter() - start
    return RelevanceMatrix.from_dense(W, mu), report


def relevant_features(W, j, layout):
    """Nonzero features of class ``j`` as (FeatureId, weight), by |weight| desc then (layer, filter)."""
    if not 0 <= j < W.C:
        raise IndexError(f"class {j} out of range")
    items = [(layout.feature_of_index(k), v) for k, v in W.columns[j].items()]
    items.sort(key=lambda t: (-abs(t[1]), t[0].layer, t[0].filter))
    return items
