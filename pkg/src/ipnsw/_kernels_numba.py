"""numba kernels for graph walk and insertion build.

Scores are accumulated in float64 and rounded to float32, which keeps the
two backends bit-compatible. Pool order is (score desc, id asc) throughout.
Adjacency is a dense (n, M) int32 matrix padded with -1 plus a degree vector.
"""

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _score(X, scale, q, i):
    acc = 0.0
    row = X[i]
    for j in range(row.shape[0]):
        acc += np.float64(row[j]) * q[j]
    return np.float32(acc * scale[i])


@njit(**_OPTS)
def _better(s1, i1, s2, i2):
    return s1 > s2 or (s1 == s2 and i1 < i2)


@njit(**_OPTS)
def _pool_push(ids, scores, checked, size, cap, v, s):
    if size == cap:
        if not _better(s, v, scores[size - 1], ids[size - 1]):
            return size
        j = cap - 1
    else:
        j = size
        size += 1
    while j > 0 and _better(s, v, scores[j - 1], ids[j - 1]):
        ids[j] = ids[j - 1]
        scores[j] = scores[j - 1]
        checked[j] = checked[j - 1]
        j -= 1
    ids[j] = v
    scores[j] = s
    checked[j] = False
    return size


@njit(**_OPTS)
def _walk(X, scale, q, adj, deg, ids, scores, checked, size, cap,
          visited, mark, evals, n_eval):
    hops = 0
    while True:
        i = 0
        while i < size and checked[i]:
            i += 1
        if i >= size:
            break
        checked[i] = True
        v = ids[i]
        hops += 1
        for e in range(deg[v]):
            u = adj[v, e]
            if visited[u] == mark:
                continue
            visited[u] = mark
            s = _score(X, scale, q, u)
            evals[n_eval] = u
            n_eval += 1
            size = _pool_push(ids, scores, checked, size, cap, u, s)
    return size, n_eval, hops


@njit(**_OPTS)
def search(X, scale, q, adj, deg, entries, l, visited, mark, evals):
    ids = np.empty(l, np.int64)
    scores = np.empty(l, np.float32)
    checked = np.zeros(l, np.bool_)
    size = 0
    n_eval = 0
    for v in entries:
        if visited[v] == mark:
            continue
        visited[v] = mark
        s = _score(X, scale, q, v)
        evals[n_eval] = v
        n_eval += 1
        size = _pool_push(ids, scores, checked, size, l, v, s)
    size, n_eval, hops = _walk(X, scale, q, adj, deg, ids, scores, checked,
                               size, l, visited, mark, evals, n_eval)
    return ids[:size].copy(), scores[:size].copy(), n_eval, hops


@njit(**_OPTS)
def seeded_search(X, scale, q, adj, deg, anchors, include_anchors, fallback,
                  l, visited, mark, evals):
    """Seed the pool with out-neighbors of ``anchors`` in ``adj``, then walk."""
    ids = np.empty(l, np.int64)
    scores = np.empty(l, np.float32)
    checked = np.zeros(l, np.bool_)
    size = 0
    n_eval = 0
    for a in anchors:
        if include_anchors and visited[a] != mark:
            visited[a] = mark
            s = _score(X, scale, q, a)
            evals[n_eval] = a
            n_eval += 1
            size = _pool_push(ids, scores, checked, size, l, a, s)
        for e in range(deg[a]):
            u = adj[a, e]
            if visited[u] == mark:
                continue
            visited[u] = mark
            s = _score(X, scale, q, u)
            evals[n_eval] = u
            n_eval += 1
            size = _pool_push(ids, scores, checked, size, l, u, s)
    if n_eval == 0:
        visited[fallback] = mark
        s = _score(X, scale, q, fallback)
        evals[0] = fallback
        n_eval = 1
        size = _pool_push(ids, scores, checked, size, l, fallback, s)
    n_seed = n_eval
    size, n_eval, hops = _walk(X, scale, q, adj, deg, ids, scores, checked,
                               size, l, visited, mark, evals, n_eval)
    return ids[:size].copy(), scores[:size].copy(), n_eval, n_seed, hops


@njit(**_OPTS)
def _link(adj, adj_s, deg, M, u, v, s):
    """Offer edge u -> v with score s; keep u's top-M list sorted."""
    d = deg[u]
    if d == M:
        if not _better(s, v, adj_s[u, M - 1], adj[u, M - 1]):
            return
        j = M - 1
    else:
        j = d
        deg[u] = d + 1
    while j > 0 and _better(s, v, adj_s[u, j - 1], adj[u, j - 1]):
        adj[u, j] = adj[u, j - 1]
        adj_s[u, j] = adj_s[u, j - 1]
        j -= 1
    adj[u, j] = v
    adj_s[u, j] = s


@njit(**_OPTS)
def _row_query(X, scale, v):
    d = X.shape[1]
    q = np.empty(d, np.float64)
    for j in range(d):
        q[j] = np.float64(X[v, j]) * scale[v]
    return q


@njit(**_OPTS)
def _prefix_pool(X, scale, q, order, t):
    """Score every already-inserted item; return them sorted."""
    ids = np.empty(t, np.int64)
    scores = np.empty(t, np.float32)
    checked = np.zeros(t, np.bool_)
    size = 0
    for p in range(t):
        u = order[p]
        size = _pool_push(ids, scores, checked, size, t, u, _score(X, scale, q, u))
    return ids, scores


@njit(**_OPTS)
def _connect(adj, adj_s, deg, M, v, ids, scores, bidirectional):
    m = min(M, ids.shape[0])
    for e in range(m):
        adj[v, e] = ids[e]
        adj_s[v, e] = scores[e]
    deg[v] = m
    if bidirectional:
        for e in range(m):
            _link(adj, adj_s, deg, M, ids[e], v, scores[e])


@njit(**_OPTS)
def build_graph(X, scale, order, M, l_build, bidirectional):
    n = X.shape[0]
    adj = np.full((n, M), -1, np.int32)
    adj_s = np.zeros((n, M), np.float32)
    deg = np.zeros(n, np.int32)
    visited = np.zeros(n, np.int32)
    evals = np.empty(n, np.int32)
    entry = np.empty(1, np.int64)
    entry[0] = order[0]
    for t in range(1, n):
        v = order[t]
        q = _row_query(X, scale, v)
        if t <= M:
            ids, scores = _prefix_pool(X, scale, q, order, t)
        else:
            ids, scores, _, _ = search(X, scale, q, adj, deg, entry, l_build,
                                       visited, t, evals)
        _connect(adj, adj_s, deg, M, v, ids, scores, bidirectional)
    return adj, deg


@njit(**_OPTS)
def build_plus(X, ang_scale, order, M_a, l_a, M, l_build, k_prime,
               include_anchors, bidirectional):
    n = X.shape[0]
    ip_scale = np.ones(n, np.float64)
    adj_a = np.full((n, M_a), -1, np.int32)
    adj_a_s = np.zeros((n, M_a), np.float32)
    deg_a = np.zeros(n, np.int32)
    adj_g = np.full((n, M), -1, np.int32)
    adj_g_s = np.zeros((n, M), np.float32)
    deg_g = np.zeros(n, np.int32)
    vis_a = np.zeros(n, np.int32)
    vis_g = np.zeros(n, np.int32)
    evals = np.empty(n, np.int32)
    entry = np.empty(1, np.int64)
    entry[0] = order[0]
    for t in range(1, n):
        v = order[t]
        qa = _row_query(X, ang_scale, v)
        if t <= M_a:
            a_ids, a_scores = _prefix_pool(X, ang_scale, qa, order, t)
        else:
            a_ids, a_scores, _, _ = search(X, ang_scale, qa, adj_a, deg_a, entry,
                                           l_a, vis_a, t, evals)
        _connect(adj_a, adj_a_s, deg_a, M_a, v, a_ids, a_scores, bidirectional)

        qg = _row_query(X, ip_scale, v)
        if t <= M:
            g_ids, g_scores = _prefix_pool(X, ip_scale, qg, order, t)
        else:
            kp = min(k_prime, a_ids.shape[0])
            g_ids, g_scores, _, _, _ = seeded_search(
                X, ip_scale, qg, adj_g, deg_g, a_ids[:kp], include_anchors,
                order[0], l_build, vis_g, t, evals)
        _connect(adj_g, adj_g_s, deg_g, M, v, g_ids, g_scores, bidirectional)
    return adj_a, deg_a, adj_g, deg_g
