"""Pure numpy fallback for the numba kernels.

Same signatures and results as ``_kernels_numba``. Neighbor batches are
scored with one vectorized product; pool bookkeeping is plain Python.
Inserting a batch then sorting and truncating yields the same pool as the
numba one-at-a-time insertion, because (score desc, id asc) is a total order.
"""

import numpy as np


def _scores(X, scale, q, idx):
    idx = np.asarray(idx, dtype=np.int64)
    return ((X[idx].astype(np.float64) @ q) * scale[idx]).astype(np.float32)


class CandidatePool:
    """Bounded pool of (id, score, checked), ordered by score desc then id asc."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("pool capacity must be >= 1")
        self.capacity = capacity
        self._entries: list[list] = []  # [-score, id, checked]

    def __len__(self):
        return len(self._entries)

    def add_many(self, ids, scores):
        for v, s in zip(ids, scores):
            self._entries.append([-float(s), int(v), False])
        self._entries.sort(key=lambda e: (e[0], e[1]))
        del self._entries[self.capacity:]

    def pop_unchecked(self):
        """Mark the best unchecked entry as checked and return its id, or None."""
        for e in self._entries:
            if not e[2]:
                e[2] = True
                return e[1]
        return None

    @property
    def ids(self) -> np.ndarray:
        return np.array([e[1] for e in self._entries], dtype=np.int64)

    @property
    def scores(self) -> np.ndarray:
        return np.array([-e[0] for e in self._entries], dtype=np.float32)

    @property
    def checked(self) -> np.ndarray:
        return np.array([e[2] for e in self._entries], dtype=bool)


def _fresh(cands, visited, mark):
    out = []
    for u in cands:
        u = int(u)
        if visited[u] != mark:
            visited[u] = mark
            out.append(u)
    return out


def _walk(X, scale, q, adj, deg, pool, visited, mark, evals, n_eval):
    hops = 0
    while True:
        v = pool.pop_unchecked()
        if v is None:
            break
        hops += 1
        new = _fresh(adj[v, :deg[v]], visited, mark)
        if new:
            evals[n_eval:n_eval + len(new)] = new
            n_eval += len(new)
            pool.add_many(new, _scores(X, scale, q, new))
    return n_eval, hops


def search(X, scale, q, adj, deg, entries, l, visited, mark, evals):
    pool = CandidatePool(l)
    new = _fresh(entries, visited, mark)
    n_eval = len(new)
    evals[:n_eval] = new
    if new:
        pool.add_many(new, _scores(X, scale, q, new))
    n_eval, hops = _walk(X, scale, q, adj, deg, pool, visited, mark, evals, n_eval)
    return pool.ids, pool.scores, n_eval, hops


def seeded_search(X, scale, q, adj, deg, anchors, include_anchors, fallback,
                  l, visited, mark, evals):
    pool = CandidatePool(l)
    seeds = []
    for a in anchors:
        a = int(a)
        if include_anchors:
            seeds += _fresh([a], visited, mark)
        seeds += _fresh(adj[a, :deg[a]], visited, mark)
    if not seeds:
        visited[fallback] = mark
        seeds = [int(fallback)]
    n_eval = len(seeds)
    evals[:n_eval] = seeds
    pool.add_many(seeds, _scores(X, scale, q, seeds))
    n_seed = n_eval
    n_eval, hops = _walk(X, scale, q, adj, deg, pool, visited, mark, evals, n_eval)
    return pool.ids, pool.scores, n_eval, n_seed, hops


class _Adjacency:
    """Growable top-M neighbor lists used during build."""

    def __init__(self, n, M):
        self.M = M
        self.adj = np.full((n, M), -1, dtype=np.int32)
        self.deg = np.zeros(n, dtype=np.int32)
        self.lists: list[list] = [[] for _ in range(n)]  # [-score, id]

    def set(self, v, ids, scores):
        self.lists[v] = [[-float(s), int(u)] for u, s in zip(ids[:self.M], scores[:self.M])]
        self._sync(v)

    def offer(self, u, v, s):
        lst = self.lists[u]
        lst.append([-float(s), int(v)])
        lst.sort(key=lambda e: (e[0], e[1]))
        del lst[self.M:]
        self._sync(u)

    def _sync(self, v):
        lst = self.lists[v]
        self.deg[v] = len(lst)
        self.adj[v, :len(lst)] = [e[1] for e in lst]


def _connect(A, v, ids, scores, bidirectional):
    A.set(v, ids, scores)
    if bidirectional:
        for u, s in zip(ids[:A.M], scores[:A.M]):
            A.offer(int(u), v, s)


def _prefix_pool(X, scale, q, order, t):
    pool = CandidatePool(t)
    prefix = order[:t]
    pool.add_many(prefix, _scores(X, scale, q, prefix))
    return pool.ids, pool.scores


def build_graph(X, scale, order, M, l_build, bidirectional):
    n = X.shape[0]
    A = _Adjacency(n, M)
    visited = np.zeros(n, dtype=np.int32)
    evals = np.empty(n, dtype=np.int32)
    entry = np.array([order[0]], dtype=np.int64)
    for t in range(1, n):
        v = int(order[t])
        q = X[v].astype(np.float64) * scale[v]
        if t <= M:
            ids, scores = _prefix_pool(X, scale, q, order, t)
        else:
            ids, scores, _, _ = search(X, scale, q, A.adj, A.deg, entry, l_build,
                                       visited, t, evals)
        _connect(A, v, ids, scores, bidirectional)
    return A.adj, A.deg


def build_plus(X, ang_scale, order, M_a, l_a, M, l_build, k_prime,
               include_anchors, bidirectional):
    n = X.shape[0]
    ip_scale = np.ones(n, dtype=np.float64)
    A = _Adjacency(n, M_a)
    G = _Adjacency(n, M)
    vis_a = np.zeros(n, dtype=np.int32)
    vis_g = np.zeros(n, dtype=np.int32)
    evals = np.empty(n, dtype=np.int32)
    entry = np.array([order[0]], dtype=np.int64)
    for t in range(1, n):
        v = int(order[t])
        qa = X[v].astype(np.float64) * ang_scale[v]
        if t <= M_a:
            a_ids, a_scores = _prefix_pool(X, ang_scale, qa, order, t)
        else:
            a_ids, a_scores, _, _ = search(X, ang_scale, qa, A.adj, A.deg, entry,
                                           l_a, vis_a, t, evals)
        _connect(A, v, a_ids, a_scores, bidirectional)

        qg = X[v].astype(np.float64)
        if t <= M:
            g_ids, g_scores = _prefix_pool(X, ip_scale, qg, order, t)
        else:
            g_ids, g_scores, _, _, _ = seeded_search(
                X, ip_scale, qg, G.adj, G.deg, a_ids[:k_prime], include_anchors,
                int(order[0]), l_build, vis_g, t, evals)
        _connect(G, v, g_ids, g_scores, bidirectional)
    return A.adj, A.deg, G.adj, G.deg
