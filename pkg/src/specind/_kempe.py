"""Compiled enumeration of every Kempe-component move of every coloring.

Used to assemble exact flip-dynamics kernels; the stepwise sampler in
:mod:`specind.dynamics` carries its own pure-Python BFS, and the tests check
the two agree.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def kempe_moves(support, indptr, indices, lists, list_len, pos, radix, codes, max_size):
    """For each state s, vertex v and list slot k (color c = lists[v, k]):

    sizes[s, v, k]   -- |S_sigma(v, c)|, or max_size + 1 once the BFS exceeds it
    targets[s, v, k] -- code of sigma_S if S is flippable and small, else -1
    """
    N, n = support.shape
    L = lists.shape[1]
    sizes = np.zeros((N, n, L), dtype=np.int64)
    targets = np.full((N, n, L), -1, dtype=np.int64)
    in_comp = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    for s in range(N):
        sigma = support[s]
        for v in range(n):
            a = sigma[v]
            for k in range(list_len[v]):
                c = lists[v, k]
                if c == a:
                    sizes[s, v, k] = 1
                    targets[s, v, k] = codes[s]
                    continue
                head = 0
                tail = 1
                queue[0] = v
                in_comp[v] = True
                too_big = False
                while head < tail:
                    w = queue[head]
                    head += 1
                    other = c if sigma[w] == a else a
                    for e in range(indptr[w], indptr[w + 1]):
                        x = indices[e]
                        if not in_comp[x] and sigma[x] == other:
                            in_comp[x] = True
                            queue[tail] = x
                            tail += 1
                            if tail > max_size:
                                too_big = True
                                break
                    if too_big:
                        break
                sizes[s, v, k] = max_size + 1 if too_big else tail
                if not too_big:
                    code = codes[s]
                    ok = True
                    for i in range(tail):
                        w = queue[i]
                        new = c if sigma[w] == a else a
                        if pos[w, new] < 0:
                            ok = False
                            break
                        code += (pos[w, new] - pos[w, sigma[w]]) * radix[w]
                    if ok:
                        targets[s, v, k] = code
                for i in range(tail):
                    in_comp[queue[i]] = False
    return sizes, targets
