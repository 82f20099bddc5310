"""Compiled inner loops shared by the sampling and optimizer modules.

Every random draw is derived from pre-generated uniforms so that the numpy
RNG stream alone determines a run.
"""
import numpy as np
from numba import njit

QUADRATIC, REGRESSION, LOGISTIC = 0, 1, 2
KIND_CODES = {"quadratic": QUADRATIC, "regression": REGRESSION, "logistic": LOGISTIC}

OK, DIVERGED = 0, 1
DIVERGENCE_NORM = 1e8


@njit(cache=True)
def draw_row(u, m, replacement, pool, out):
    """Turn ``k`` uniforms into ``k`` positions in ``[0, m)``.

    Without replacement this is a partial Fisher-Yates shuffle of ``pool``;
    the pool stays a permutation, so successive rows remain uniform subsets.
    """
    k = u.shape[0]
    if replacement:
        for j in range(k):
            r = int(u[j] * m)
            out[j] = r if r < m else m - 1
    else:
        for j in range(k):
            span = m - j
            r = int(u[j] * span)
            if r >= span:
                r = span - 1
            r += j
            tmp = pool[j]
            pool[j] = pool[r]
            pool[r] = tmp
            out[j] = pool[j]


@njit(cache=True)
def sort_by_loss(vals, idx):
    # insertion sort on (loss, index); k is small
    k = vals.shape[0]
    for a in range(1, k):
        v = vals[a]
        i = idx[a]
        b = a - 1
        while b >= 0 and (vals[b] > v or (vals[b] == v and idx[b] > i)):
            vals[b + 1] = vals[b]
            idx[b + 1] = idx[b]
            b -= 1
        vals[b + 1] = v
        idx[b + 1] = i


@njit(cache=True)
def select_many(losses, u, replacement, order_index, keep):
    """Vectorized selection for a fixed loss vector, one row of ``u`` per draw.

    ``keep == 0`` means single pick of the ``order_index``-th smallest;
    otherwise the ``keep`` smallest drawn indices are returned.
    """
    n = losses.shape[0]
    T, k = u.shape
    width = 1 if keep == 0 else keep
    out = np.empty((T, width), dtype=np.int64)
    pool = np.arange(n)
    drawn = np.empty(k, dtype=np.int64)
    vals = np.empty(k)
    for t in range(T):
        draw_row(u[t], n, replacement, pool, drawn)
        for j in range(k):
            vals[j] = losses[drawn[j]]
        sort_by_loss(vals, drawn)
        if keep == 0:
            out[t, 0] = drawn[order_index - 1]
        else:
            for j in range(keep):
                out[t, j] = drawn[j]
    return out


@njit(cache=True)
def component_loss(kind, X, y, curv, n_classes, i, w):
    d = X.shape[1]
    if kind == QUADRATIC:
        s = 0.0
        for c in range(d):
            r = w[c] - X[i, c]
            s += r * r
        return curv[i] * s
    if kind == REGRESSION:
        r = -y[i]
        for c in range(d):
            r += X[i, c] * w[c]
        return r * r
    zmax = -np.inf
    zy = 0.0
    z = np.empty(n_classes)
    for a in range(n_classes):
        s = 0.0
        for c in range(d):
            s += w[a * d + c] * X[i, c]
        z[a] = s
        if s > zmax:
            zmax = s
    acc = 0.0
    for a in range(n_classes):
        acc += np.exp(z[a] - zmax)
    zy = z[int(y[i])]
    return zmax + np.log(acc) - zy


@njit(cache=True)
def add_gradient(kind, X, y, curv, n_classes, i, w, scale, g):
    """``g += scale * grad f_i(w)``."""
    d = X.shape[1]
    if kind == QUADRATIC:
        for c in range(d):
            g[c] += scale * 2.0 * curv[i] * (w[c] - X[i, c])
        return
    if kind == REGRESSION:
        r = -y[i]
        for c in range(d):
            r += X[i, c] * w[c]
        for c in range(d):
            g[c] += scale * 2.0 * r * X[i, c]
        return
    z = np.empty(n_classes)
    zmax = -np.inf
    for a in range(n_classes):
        s = 0.0
        for c in range(d):
            s += w[a * d + c] * X[i, c]
        z[a] = s
        if s > zmax:
            zmax = s
    tot = 0.0
    for a in range(n_classes):
        z[a] = np.exp(z[a] - zmax)
        tot += z[a]
    label = int(y[i])
    for a in range(n_classes):
        coef = z[a] / tot - (1.0 if a == label else 0.0)
        for c in range(d):
            g[a * d + c] += scale * coef * X[i, c]


@njit(cache=True)
def run_block(kind, X, y, curv, n_classes, w, u, draw_map, replacement, pool,
              order_index, keep, etas, record_every, step0,
              rec_w, rec_sel, rec_loss, rec_step, rec_pos):
    """Advance ``w`` in place through ``u.shape[0]`` selection steps.

    Returns ``(steps_done, status, rec_pos)``; on divergence ``steps_done``
    is the 1-based step index at which the norm guard fired.
    """
    T, k = u.shape
    m = draw_map.shape[0]
    dim = w.shape[0]
    drawn = np.empty(k, dtype=np.int64)
    vals = np.empty(k)
    g = np.empty(dim)
    width = 1 if keep == 0 else keep
    for t in range(T):
        draw_row(u[t], m, replacement, pool, drawn)
        for j in range(k):
            drawn[j] = draw_map[drawn[j]]
            vals[j] = component_loss(kind, X, y, curv, n_classes, drawn[j], w)
        sort_by_loss(vals, drawn)
        for c in range(dim):
            g[c] = 0.0
        if keep == 0:
            sel_loss = vals[order_index - 1]
            add_gradient(kind, X, y, curv, n_classes, drawn[order_index - 1], w, 1.0, g)
            first = order_index - 1
        else:
            sel_loss = 0.0
            for j in range(keep):
                sel_loss += vals[j]
                add_gradient(kind, X, y, curv, n_classes, drawn[j], w, 1.0 / keep, g)
            sel_loss /= keep
            first = 0
        eta = etas[t]
        nrm = 0.0
        for c in range(dim):
            w[c] -= eta * g[c]
            nrm += w[c] * w[c]
        step = step0 + t + 1
        if not np.isfinite(nrm) or nrm > DIVERGENCE_NORM * DIVERGENCE_NORM:
            return step, DIVERGED, rec_pos
        if step % record_every == 0:
            for c in range(dim):
                rec_w[rec_pos, c] = w[c]
            for j in range(width):
                rec_sel[rec_pos, j] = drawn[first + j]
            rec_loss[rec_pos] = sel_loss
            rec_step[rec_pos] = step
            rec_pos += 1
    return step0 + T, OK, rec_pos
