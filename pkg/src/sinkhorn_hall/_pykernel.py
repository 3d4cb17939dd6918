"""Pure-Python (numpy) Sinkhorn sweep loop, used when the compiled kernel is absent.

The working matrix is ``diag(u) K diag(v)``.  Once ``u`` or ``v`` leave
``[1e-100, 1e100]`` they are multiplied into ``K`` and their logs are added
to ``xi``/``eta``; entries stay exact to rounding while the log factors keep
the full (possibly huge) spread between blocks.  Working entries below
``1e-280`` are zeroed to keep the arithmetic out of subnormals; on exit they
are rebuilt from the log factors.
"""
from __future__ import annotations

import numpy as np

HI = 1e100
LO = 1e-100
FLUSH = 1e-280


def _absorb(rows, cols, xi, eta, u, v, K):
    K *= u[rows] * v[cols]
    K[K < FLUSH] = 0.0
    xi += np.log(u)
    eta += np.log(v)
    u[:] = 1.0
    v[:] = 1.0


def sinkhorn_sweeps(rows, cols, log_a, values, xi, eta, r, c, n_iter, stride, k0,
                    stop_mode, tol, window, prev_p, rec_k, rec_p, rec_change):
    """Advance the state ``n_iter`` iterations (or until the stop rule fires).

    ``values``, ``xi``, ``eta`` and ``prev_p`` are updated in place; on return
    ``prev_p`` holds the row marginal of the final state.  ``stop_mode`` is 0
    (fixed budget), 1 (sup-norm change of the row marginal below ``tol``) or
    2 (sorted order of the row marginal unchanged, or its sup-norm change
    below ``tol``, for ``window`` consecutive iterations).
    Returns ``(iterations_done, records_written)``.
    """
    n, m = xi.shape[0], eta.shape[0]
    u = np.ones(n)
    v = np.ones(m)
    K = np.array(values, dtype=np.float64)
    K[K < FLUSH] = 0.0
    last = None
    it = nrec = stable = 0
    while True:
        k = k0 + it
        s = np.bincount(rows, weights=K * v[cols], minlength=n)
        p = u * s
        change = np.nan if np.isnan(prev_p).any() else float(np.max(np.abs(p - prev_p)))
        if stop_mode == 2:
            perm = np.argsort(p, kind="stable")
            # a motionless p counts as settled: its reorderings are rounding noise
            if (it > 0 and np.array_equal(perm, last)) or (not np.isnan(change) and change < tol):
                stable += 1
            else:
                stable = 0
            last = perm
        stop = it >= n_iter
        if stop_mode == 1 and not np.isnan(change) and change < tol:
            stop = True
        if stop_mode == 2 and stable >= window:
            stop = True
        if stride > 0 and (k % stride == 0 or stop):
            rec_k[nrec] = k
            rec_change[nrec] = change
            rec_p[nrec, :] = p
            nrec += 1
        prev_p[:] = p
        if stop:
            break
        u[:] = r / s
        t = np.bincount(cols, weights=K * u[rows], minlength=m)
        v[:] = c / t
        if u.max() > HI or u.min() < LO or v.max() > HI or v.min() < LO:
            _absorb(rows, cols, xi, eta, u, v, K)
        it += 1
    _absorb(rows, cols, xi, eta, u, v, K)
    lost = K == 0.0
    K[lost] = np.exp(log_a[lost] + xi[rows[lost]] + eta[cols[lost]])
    values[:] = K
    return it, nrec
