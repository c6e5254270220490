"""Independent reference implementations used to freeze expected test values.

Everything here is deliberately written against plain numpy primitives that
differ from the package's code paths (normal equations instead of lstsq,
closed forms instead of bisection), so agreement is evidence rather than a
tautology.
"""

import numpy as np


def fd_gradient(fn, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        grad.flat[i] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return grad


def quadratic_ray_minimum(y, g, phi):
    """Exact minimizer of c -> 0.5*||y - g - c*phi||^2 over c >= 0.

    Returns (c_star, value_at_c_star).
    """
    r = np.asarray(y, dtype=float) - np.asarray(g, dtype=float)
    phi = np.asarray(phi, dtype=float)
    denom = float(phi @ phi)
    if denom == 0.0:
        return 0.0, 0.5 * float(r @ r)
    c = max(float(r @ phi) / denom, 0.0)
    diff = r - c * phi
    return c, 0.5 * float(diff @ diff)


def quadratic_line_minimum(y, g, phi):
    """Exact minimizer of c -> 0.5*||y - g - c*phi||^2 over all of R."""
    r = np.asarray(y, dtype=float) - np.asarray(g, dtype=float)
    phi = np.asarray(phi, dtype=float)
    denom = float(phi @ phi)
    if denom == 0.0:
        return 0.0, 0.5 * float(r @ r)
    c = float(r @ phi) / denom
    diff = r - c * phi
    return c, 0.5 * float(diff @ diff)


def free_relaxation_joint_minimum(y, g, phi):
    """Exact (alpha, lam) minimizing 0.5*||y - alpha*g - lam*phi||^2.

    Solves the 2x2 normal equations directly; returns (alpha, lam, value).
    The package parameterization is G_m = (1 - w) G + lam phi, so alpha
    corresponds to 1 - w.
    """
    y = np.asarray(y, dtype=float)
    g = np.asarray(g, dtype=float)
    phi = np.asarray(phi, dtype=float)
    a = np.array([[g @ g, g @ phi], [phi @ g, phi @ phi]])
    b = np.array([g @ y, phi @ y])
    if abs(np.linalg.det(a)) < 1e-14 * max(1.0, float(np.abs(a).max()) ** 2):
        # Degenerate (parallel or zero vectors): fall back to the single
        # direction with larger norm.
        if phi @ phi >= g @ g:
            lam, val = quadratic_line_minimum(y, np.zeros_like(y), phi)
            return 0.0, lam, val
        alpha, val = quadratic_line_minimum(y, np.zeros_like(y), g)
        return alpha, 0.0, val
    alpha, lam = np.linalg.solve(a, b)
    diff = y - alpha * g - lam * phi
    return float(alpha), float(lam), 0.5 * float(diff @ diff)


def omp_normal_equations(columns, y, steps):
    """Orthogonal matching pursuit via explicit normal equations.

    Independent of the package driver: selection by argmax |Phi^T r| with
    lowest-index ties, re-fit by solving B^T B c = B^T y with np.linalg.solve.
    Returns a list of (selected_index, coefficient_dict) per iteration, where
    coefficient_dict maps column index -> signed coefficient.
    """
    phi = np.asarray(columns, dtype=float)
    y = np.asarray(y, dtype=float)
    chosen = []
    out = []
    for _ in range(steps):
        r = y if not chosen else y - phi[:, chosen] @ coef
        scores = np.abs(phi.T @ r)
        j = int(np.argmax(scores))
        if j not in chosen:
            chosen.append(j)
        basis = phi[:, chosen]
        gram = basis.T @ basis
        coef = np.linalg.solve(gram, basis.T @ y)
        out.append((j, {idx: float(c) for idx, c in zip(chosen, coef)}))
    return out


def xi_closed_form(gamma, q, t, theta):
    """Root of gamma * u**(q-1) = theta * t in closed form."""
    return (theta * t / gamma) ** (1.0 / (q - 1.0))


def loglog_slope(ms, values):
    """Least-squares slope of log(values) against log(ms), explicit formula."""
    x = np.log(np.asarray(ms, dtype=float))
    z = np.log(np.asarray(values, dtype=float))
    xm = x.mean()
    zm = z.mean()
    return float(((x - xm) @ (z - zm)) / ((x - xm) @ (x - xm)))


def brute_force_sup(columns, w):
    """Certified sup over signed atoms of a finite dictionary, by enumeration.

    Returns (value, index, sign) with the package tie rule: lowest index wins,
    sign +1 when the inner product is >= 0.
    """
    phi = np.asarray(columns, dtype=float)
    w = np.asarray(w, dtype=float)
    inner = phi.T @ w
    best_val = -1.0
    best = (0.0, 0, 1)
    for j in range(phi.shape[1]):
        v = abs(float(inner[j]))
        if v > best_val + 0.0:
            best_val = v
            best = (v, j, 1 if inner[j] >= 0.0 else -1)
    return best


def top_singular_svd(w):
    """Top singular triple via full SVD (reference for power iteration)."""
    u, s, vt = np.linalg.svd(np.asarray(w, dtype=float))
    return u[:, 0], vt[0], float(s[0])


def nuclear_norm(w):
    return float(np.linalg.svd(np.asarray(w, dtype=float), compute_uv=False).sum())
