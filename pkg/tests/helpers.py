"""Independent oracles shared by the unit and acceptance tests.

Everything here deliberately avoids the package's own solution paths:
the constrained maximizer is a softmax-parameterized penalty method, the
logistic oracle is a grid refinement of the likelihood itself, and the
Jacobian oracle is central finite differences.
"""

import numpy as np
from scipy.optimize import minimize

W1 = W0 = 0.5


def random_dataset(rng, n=40, d=2):
    """A small dataset with both arms guaranteed nonempty."""
    from pelate.data import Dataset

    while True:
        x = rng.standard_normal((n, d))
        t = (rng.random(n) < 0.5).astype(int)
        if 0 < t.sum() < n:
            break
    y = 1.0 + x @ rng.standard_normal(d) + rng.standard_normal(n)
    return Dataset(x=x, t=t, y=y)


def pel_value(p1, p0, a1, a0):
    n = len(p1) + len(p0)
    return n * (W1 * a1 @ np.log(p1) + W0 * a0 @ np.log(p0))


def brute_force_pel(a1, a0, constraints, n_stages=4):
    """Brute-force maximizer of the weighted likelihood on two simplices.

    ``constraints`` is a list of (coef1, coef0, target) triples encoding
    sum(p1*coef1) + sum(p0*coef0) = target. Stage one is a penalty method
    over softmax-parameterized probabilities (normalizations exact, listed
    constraints penalized); stage two polishes with an SQP solve on the
    raw probabilities under the exact constraints. Both stages are
    independent of the package's dual-Newton path.
    Returns (p1, p0, loglik).
    """
    n1, n0 = len(a1), len(a0)

    def unpack(q):
        e1 = np.exp(q[:n1] - q[:n1].max())
        e0 = np.exp(q[n1:] - q[n1:].max())
        return e1 / e1.sum(), e0 / e0.sum()

    def objective(q, k):
        p1, p0 = unpack(q)
        pen = 0.0
        for c1, c0, tgt in constraints:
            viol = float(p1 @ c1 + p0 @ c0 - tgt)
            pen += viol * viol
        return -pel_value(p1, p0, a1, a0) + k * pen

    q = np.zeros(n1 + n0)
    for k in [10.0 ** (2 + 2 * s) for s in range(n_stages)]:
        res = minimize(objective, q, args=(k,), method="BFGS",
                       options={"maxiter": 2000, "gtol": 1e-12})
        q = res.x
    p_start = np.concatenate(unpack(q))

    def neg_value(p):
        return -pel_value(p[:n1], p[n1:], a1, a0)

    cons = [
        {"type": "eq", "fun": lambda p: p[:n1].sum() - 1.0},
        {"type": "eq", "fun": lambda p: p[n1:].sum() - 1.0},
    ]
    for c1, c0, tgt in constraints:
        cons.append({"type": "eq",
                     "fun": lambda p, c1=c1, c0=c0, tgt=tgt:
                         float(p[:n1] @ c1 + p[n1:] @ c0 - tgt)})
    res = minimize(neg_value, p_start, method="SLSQP", constraints=cons,
                   bounds=[(1e-12, 1.0)] * (n1 + n0),
                   options={"maxiter": 500, "ftol": 1e-14})
    p = res.x if res.success and -res.fun >= pel_value(p_start[:n1], p_start[n1:], a1, a0) - 1e-9 else p_start
    p1, p0 = p[:n1], p[n1:]
    return p1, p0, pel_value(p1, p0, a1, a0)


def grid_logistic_mle(X, t, span=4.0, rounds=8, points=21):
    """Coarse-to-fine grid maximizer of the Bernoulli log-likelihood (2-D)."""
    from scipy.special import expit

    def loglik(a):
        lp = X @ a
        return float(np.sum(t * lp - np.logaddexp(0.0, lp)))

    center = np.zeros(2)
    width = span
    best = center
    for _ in range(rounds):
        g0 = np.linspace(center[0] - width, center[0] + width, points)
        g1 = np.linspace(center[1] - width, center[1] + width, points)
        vals = np.array([[loglik(np.array([u, v])) for v in g1] for u in g0])
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        best = np.array([g0[i], g1[j]])
        center = best
        width *= 2.0 / (points - 1)
    return best


def fd_jacobian(fn, x, h=1e-6):
    """Central finite-difference Jacobian of a vector-valued function."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fn(x))
    jac = np.zeros((f0.size, x.size))
    for k in range(x.size):
        hk = h * max(1.0, abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += hk
        xm[k] -= hk
        jac[:, k] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2.0 * hk)
    return jac


def fd_gradient(fn, x, h=1e-6):
    return fd_jacobian(lambda v: np.atleast_1d(fn(v)), x, h)[0]
