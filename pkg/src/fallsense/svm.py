"""Soft-margin SVM trained by simplified sequential minimal optimization.

The linear kernel keeps an explicit weight vector so very wide inputs
(flattened feature matrices run to ~10^5 dims) stay cheap; the RBF path
builds the full kernel matrix and is only meant for desk-scale sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence

KERNEL_LINEAR = "linear"
KERNEL_RBF = "rbf"


@dataclass
class SvmModel:
    kernel: str
    alphas: np.ndarray          # one multiplier per training sample
    b: float
    sv_x: np.ndarray            # training inputs (kept for kernel expansion)
    sv_y: np.ndarray            # labels in {-1, +1}
    gamma: float = 0.0
    w: np.ndarray | None = None  # linear kernel only
    converged: bool = True
    passes: int = 0

    def decision(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.kernel == KERNEL_LINEAR:
            return x @ self.w + self.b
        k = _rbf_matrix(x, self.sv_x, self.gamma)
        return k @ (self.alphas * self.sv_y) + self.b

    def predict(self, x):
        return np.where(self.decision(x) >= 0, 1, -1)


def _rbf_matrix(a, b, gamma):
    a2 = np.sum(a * a, axis=1)[:, None]
    b2 = np.sum(b * b, axis=1)[None, :]
    d2 = np.maximum(a2 + b2 - 2.0 * (a @ b.T), 0.0)
    return np.exp(-gamma * d2)


def smo_train(x, y, kernel=KERNEL_LINEAR, c=1.0, gamma=None, tol=1e-3,
              max_passes=200, seed=0):
    """SMO with the usual second-choice heuristic (largest |E_i - E_j| first,
    then the remaining indices in random order).

    x: (n, d) float array; y: labels in {-1, +1}. Raises NonConvergence with
    the partial model attached if the sweep budget runs out before three
    consecutive full sweeps make no updates.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    if gamma is None:
        gamma = 1.0 / d
    rng = np.random.default_rng(seed)
    alphas = np.zeros(n)
    b = 0.0

    w = np.zeros(d) if kernel == KERNEL_LINEAR else None
    if kernel == KERNEL_LINEAR:

        def f(i):
            return x[i] @ w + b

        def k(i, j):
            return float(x[i] @ x[j])
    else:
        gram = _rbf_matrix(x, x, gamma)

        def f(i):
            return float(gram[i] @ (alphas * y)) + b

        def k(i, j):
            return float(gram[i, j])

    def try_update(i, j, e_i):
        nonlocal b, w
        if j == i:
            return False
        e_j = f(j) - y[j]
        ai_old, aj_old = alphas[i], alphas[j]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj_old - ai_old), min(c, c + aj_old - ai_old)
        else:
            lo, hi = max(0.0, ai_old + aj_old - c), min(c, ai_old + aj_old)
        if lo >= hi:
            return False
        eta = 2.0 * k(i, j) - k(i, i) - k(j, j)
        if eta >= 0:
            return False
        aj = float(np.clip(aj_old - y[j] * (e_i - e_j) / eta, lo, hi))
        if abs(aj - aj_old) < 1e-5:
            return False
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        alphas[i], alphas[j] = ai, aj
        if kernel == KERNEL_LINEAR:
            w += y[i] * (ai - ai_old) * x[i] + y[j] * (aj - aj_old) * x[j]
        b1 = b - e_i - y[i] * (ai - ai_old) * k(i, i) - y[j] * (aj - aj_old) * k(i, j)
        b2 = b - e_j - y[i] * (ai - ai_old) * k(i, j) - y[j] * (aj - aj_old) * k(j, j)
        if 0 < ai < c:
            b = b1
        elif 0 < aj < c:
            b = b2
        else:
            b = (b1 + b2) / 2.0
        return True

    quiet = 0   # consecutive full sweeps with no update
    sweeps = 0
    while sweeps < max_passes:
        changed = 0
        for i in range(n):
            e_i = f(i) - y[i]
            if not ((y[i] * e_i < -tol and alphas[i] < c)
                    or (y[i] * e_i > tol and alphas[i] > 0)):
                continue
            errs = np.array([f(j) - y[j] for j in range(n)])
            order = [int(np.argmax(np.abs(errs - e_i)))]
            order += [int(j) for j in rng.permutation(n) if j not in order]
            for j in order:
                if try_update(i, j, e_i):
                    changed += 1
                    break
        sweeps += 1
        quiet = quiet + 1 if changed == 0 else 0
        if quiet >= 3:
            return SvmModel(kernel, alphas, float(b), x, y, gamma,
                            w if kernel == KERNEL_LINEAR else None,
                            converged=True, passes=sweeps)
    partial = SvmModel(kernel, alphas, float(b), x, y, gamma,
                       w if kernel == KERNEL_LINEAR else None,
                       converged=False, passes=sweeps)
    raise NonConvergence(f"SMO still updating after {sweeps} sweeps", model=partial)


def kkt_violation(model: SvmModel, c=1.0, tol=1e-3):
    """Largest KKT violation over the training set (0 means all satisfied).

    alpha = 0      -> y f(x) >= 1 - tol
    0 < alpha < c  -> |y f(x) - 1| <= tol
    alpha = c      -> y f(x) <= 1 + tol
    """
    margins = model.sv_y * model.decision(model.sv_x)
    a = model.alphas
    worst = 0.0
    free = (a > tol) & (a < c - tol)
    at_zero = a <= tol
    at_c = a >= c - tol
    if np.any(at_zero):
        worst = max(worst, float(np.max((1.0 - tol) - margins[at_zero], initial=0.0)))
    if np.any(free):
        worst = max(worst, float(np.max(np.abs(margins[free] - 1.0) - tol, initial=0.0)))
    if np.any(at_c):
        worst = max(worst, float(np.max(margins[at_c] - (1.0 + tol), initial=0.0)))
    return worst
