# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every routine here has a line-for-line twin in ``_pykernels``. Both consume
random numbers from the same numpy bit generator in the same order and
accumulate floating point sums in the same order, so the two backends return
identical results for identical inputs.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, INFINITY
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t

import numpy as np

BACKEND = "compiled"

# Uphill moves with dE/T beyond this are rejected without evaluating exp;
# exp(-40) ~ 4e-18 is below the spacing of the uniform draws.
DEF CUTOFF = 40.0
EXP_CUTOFF = CUTOFF


cdef bitgen_t* _bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("rng does not expose a numpy BitGenerator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


def metropolis_anneal(const Py_ssize_t[::1] indptr,
                      const Py_ssize_t[::1] indices,
                      const double[::1] coupling,
                      const double[::1] field,
                      signed char[::1] spins,
                      const double[::1] temperatures,
                      const Py_ssize_t[:, ::1] visit,
                      object rng):
    """Single-spin-flip Metropolis, one sweep per temperature.

    Sweep t visits sites in the order ``visit[t % len(visit)]``.
    """
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t n = spins.shape[0]
    cdef Py_ssize_t n_sweeps = temperatures.shape[0]
    cdef Py_ssize_t n_orders = visit.shape[0]
    cdef Py_ssize_t t, j, i, p
    cdef const Py_ssize_t* order
    cdef double temp, local, de, u
    if visit.shape[1] != n:
        raise ValueError("visit order length must equal the number of sites")
    with rng.bit_generator.lock, nogil:
        for t in range(n_sweeps):
            temp = temperatures[t]
            order = &visit[t % n_orders, 0]
            for j in range(n):
                i = order[j]
                local = field[i]
                for p in range(indptr[i], indptr[i + 1]):
                    local = local + coupling[p] * spins[indices[p]]
                de = (-2.0 * spins[i]) * local
                u = bg.next_double(bg.state)
                if de <= 0.0 or (de < CUTOFF * temp and u < exp(-de / temp)):
                    spins[i] = -spins[i]


def sqa_anneal(const Py_ssize_t[::1] indptr,
               const Py_ssize_t[::1] indices,
               const double[::1] coupling,
               const double[::1] field,
               signed char[:, ::1] spins,
               const double[::1] jperp,
               double temperature,
               const Py_ssize_t[:, ::1] visit,
               object rng):
    """Path-integral Metropolis over P periodic Trotter slices.

    ``spins`` has shape (P, n). ``jperp[t]`` is the ferromagnetic inter-slice
    coupling for sweep t; all moves are accepted at ``temperature`` = P*T_q.
    """
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t n_slices = spins.shape[0]
    cdef Py_ssize_t n = spins.shape[1]
    cdef Py_ssize_t n_sweeps = jperp.shape[0]
    cdef Py_ssize_t n_orders = visit.shape[0]
    cdef Py_ssize_t t, k, kp, km, j, i, p
    cdef const Py_ssize_t* order
    cdef double jp, local, de, u
    if visit.shape[1] != n:
        raise ValueError("visit order length must equal the number of sites")
    with rng.bit_generator.lock, nogil:
        for t in range(n_sweeps):
            jp = jperp[t]
            order = &visit[t % n_orders, 0]
            for k in range(n_slices):
                kp = k + 1
                if kp == n_slices:
                    kp = 0
                km = k - 1
                if km < 0:
                    km = n_slices - 1
                for j in range(n):
                    i = order[j]
                    local = field[i]
                    for p in range(indptr[i], indptr[i + 1]):
                        local = local + coupling[p] * spins[k, indices[p]]
                    de = (-2.0 * spins[k, i]) * local + (2.0 * jp * spins[k, i]) * (spins[km, i] + spins[kp, i])
                    u = bg.next_double(bg.state)
                    if de <= 0.0 or (de < CUTOFF * temperature and u < exp(-de / temperature)):
                        spins[k, i] = -spins[k, i]


cdef inline void _sift_down(double* key, Py_ssize_t* node, Py_ssize_t size, Py_ssize_t pos) noexcept nogil:
    cdef Py_ssize_t child
    cdef double k = key[pos]
    cdef Py_ssize_t v = node[pos]
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size and key[child + 1] < key[child]:
            child += 1
        if key[child] >= k:
            break
        key[pos] = key[child]
        node[pos] = node[child]
        pos = child
    key[pos] = k
    node[pos] = v


cdef inline void _sift_up(double* key, Py_ssize_t* node, Py_ssize_t pos) noexcept nogil:
    cdef Py_ssize_t parent
    cdef double k = key[pos]
    cdef Py_ssize_t v = node[pos]
    while pos > 0:
        parent = (pos - 1) // 2
        if key[parent] <= k:
            break
        key[pos] = key[parent]
        node[pos] = node[parent]
        pos = parent
    key[pos] = k
    node[pos] = v


def node_weighted_distances(const Py_ssize_t[::1] indptr,
                            const Py_ssize_t[::1] indices,
                            const double[::1] weight,
                            const Py_ssize_t[::1] sources,
                            double limit):
    """Multi-source shortest paths where entering node b costs ``weight[b]``.

    Sources sit at distance 0. Nodes farther than ``limit`` are reported as inf.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t n_edges = indices.shape[0]
    dist_arr = np.full(n, np.inf)
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t cap = n_edges + sources.shape[0] + 1
    cdef double* hkey = <double*> malloc(cap * sizeof(double))
    cdef Py_ssize_t* hnode = <Py_ssize_t*> malloc(cap * sizeof(Py_ssize_t))
    cdef char* done = <char*> malloc(n * sizeof(char))
    if hkey == NULL or hnode == NULL or done == NULL:
        free(hkey); free(hnode); free(done)
        raise MemoryError()
    cdef Py_ssize_t size = 0, s, a, b, p
    cdef double d, nd
    with nogil:
        for a in range(n):
            done[a] = 0
        for s in range(sources.shape[0]):
            a = sources[s]
            if dist[a] != 0.0:
                dist[a] = 0.0
                hkey[size] = 0.0
                hnode[size] = a
                size += 1
        while size > 0:
            d = hkey[0]
            a = hnode[0]
            size -= 1
            if size > 0:
                hkey[0] = hkey[size]
                hnode[0] = hnode[size]
                _sift_down(hkey, hnode, size, 0)
            if done[a]:
                continue
            done[a] = 1
            for p in range(indptr[a], indptr[a + 1]):
                b = indices[p]
                if done[b]:
                    continue
                nd = d + weight[b]
                if nd < dist[b] and nd <= limit:
                    dist[b] = nd
                    hkey[size] = nd
                    hnode[size] = b
                    _sift_up(hkey, hnode, size)
                    size += 1
    free(hkey)
    free(hnode)
    free(done)
    return dist_arr
