"""Independent proximal-gradient (FISTA) reference solver.

Used only as a cross-check oracle for the block-coordinate solver: it works
in an orthonormalized coefficient space computed here with plain numpy SVD,
takes fixed gradient steps, and applies the group soft-threshold prox.  It
shares nothing with the library solver beyond the problem data.
"""

import math

import numpy as np


def pg_fit(y, blocks, lam, a0, max_iter=300_000, tol=1e-11):
    """Minimize (1/2)||y - sum_g U_g b_g||_{2,n}^2 +
    a0 sum_g lam_g ||U_g b_g||_{2,n} by FISTA with restarts.

    blocks/lam are dicts keyed by group over raw numpy matrices/levels.
    Returns the fitted n-vector.
    """
    keys = sorted(blocks.keys())
    n = y.shape[0]
    qs = []
    for key in keys:
        u, s, _ = np.linalg.svd(np.asarray(blocks[key], dtype=float), full_matrices=False)
        rank = int(np.sum(s > 1e-12 * (s[0] if s.size else 1.0)))
        qs.append(u[:, :rank])
    dims = [q.shape[1] for q in qs]
    qcat = np.hstack(qs) if qs else np.zeros((n, 0))
    lam_eff = np.array([a0 * lam[key] / math.sqrt(n) for key in keys])
    lips = np.linalg.norm(qcat.T @ qcat, 2) / n
    if lips <= 0:
        return np.zeros(n)

    c = np.zeros(qcat.shape[1])
    z = c.copy()
    t_par = 1.0
    f_prev = np.inf
    for it in range(max_iter):
        grad = -(qcat.T @ (y - qcat @ z)) / n
        w = z - grad / lips
        c_new = np.empty_like(w)
        off = 0
        for d, lg in zip(dims, lam_eff):
            seg = w[off : off + d]
            norm = np.linalg.norm(seg)
            thr = lg / lips
            c_new[off : off + d] = (
                0.0 if norm <= thr else (1.0 - thr / norm) * seg
            )
            off += d
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_par ** 2))
        z = c_new + (t_par - 1.0) / t_next * (c_new - c)
        move = np.linalg.norm(c_new - c)
        # restart on non-monotonicity keeps FISTA stable near the optimum
        resid = y - qcat @ c_new
        f_val = 0.5 * (resid @ resid) / n + float(
            np.sum(lam_eff * _group_norms(c_new, dims))
        )
        if f_val > f_prev:
            z = c_new.copy()
            t_next = 1.0
        f_prev = min(f_prev, f_val)
        c = c_new
        t_par = t_next
        if move <= tol * max(1.0, np.linalg.norm(c)):
            break
    return qcat @ c


def _group_norms(c, dims):
    out = np.empty(len(dims))
    off = 0
    for g, d in enumerate(dims):
        out[g] = np.linalg.norm(c[off : off + d])
        off += d
    return out
