"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Same random-number consumption and the same floating point evaluation order,
so results match the compiled backend bit for bit. Slow; meant for platforms
without a C compiler and for cross-checking the extension.
"""

import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

BACKEND = "python"
EXP_CUTOFF = 40.0


def metropolis_anneal(indptr, indices, coupling, field, spins, temperatures, visit, rng):
    n = spins.shape[0]
    if visit.shape[1] != n:
        raise ValueError("visit order length must equal the number of sites")
    orders = visit.tolist()
    ptr = indptr.tolist()
    nbr = indices.tolist()
    c = coupling.tolist()
    h = field.tolist()
    s = spins.tolist()
    for t, temp in enumerate(temperatures.tolist()):
        # one uniform per visit, drawn in visit order
        draws = rng.random(n).tolist()
        order = orders[t % len(orders)]
        for j in range(n):
            i = order[j]
            local = h[i]
            for p in range(ptr[i], ptr[i + 1]):
                local = local + c[p] * s[nbr[p]]
            de = (-2.0 * s[i]) * local
            u = draws[j]
            if de <= 0.0 or (de < EXP_CUTOFF * temp and u < math.exp(-de / temp)):
                s[i] = -s[i]
    spins[:] = s


def sqa_anneal(indptr, indices, coupling, field, spins, jperp, temperature, visit, rng):
    n_slices, n = spins.shape
    if visit.shape[1] != n:
        raise ValueError("visit order length must equal the number of sites")
    orders = visit.tolist()
    ptr = indptr.tolist()
    nbr = indices.tolist()
    c = coupling.tolist()
    h = field.tolist()
    s = spins.tolist()
    for t, jp in enumerate(jperp.tolist()):
        order = orders[t % len(orders)]
        for k in range(n_slices):
            sk = s[k]
            sm = s[k - 1]
            sp = s[(k + 1) % n_slices]
            draws = rng.random(n).tolist()
            for j in range(n):
                i = order[j]
                local = h[i]
                for p in range(ptr[i], ptr[i + 1]):
                    local = local + c[p] * sk[nbr[p]]
                de = (-2.0 * sk[i]) * local + (2.0 * jp * sk[i]) * (sm[i] + sp[i])
                u = draws[j]
                if de <= 0.0 or (de < EXP_CUTOFF * temperature and u < math.exp(-de / temperature)):
                    sk[i] = -sk[i]
    spins[:, :] = np.asarray(s, dtype=spins.dtype)


def node_weighted_distances(indptr, indices, weight, sources, limit):
    n = indptr.shape[0] - 1
    graph = csr_matrix((weight[indices], indices, indptr), shape=(n, n))
    return dijkstra(
        graph, directed=True, indices=np.asarray(sources), min_only=True,
        limit=limit,
    )
