# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled collapsed-Gibbs pass over a contiguous token range.

Mirrors ``_gibbs_py.gibbs_pass`` operation for operation; both consume the same
uniform draws, so the two backends produce bit-identical states.
"""

def gibbs_pass(const int[::1] words, int[::1] z, const int[::1] cells,
               Py_ssize_t start, Py_ssize_t stop,
               int[:, ::1] nkw, int[::1] nk, int[:, ::1] nck,
               const int[::1] nbr_ptr, const int[::1] nbr_idx,
               double alpha, double beta, double gamma, int n_used, bint allow_new,
               const double[::1] uniforms, double[::1] cum):
    cdef Py_ssize_t i, j, k, c, w
    cdef Py_ssize_t cap = nk.shape[0]
    cdef int V = nkw.shape[1]
    cdef double vbeta = V * beta
    cdef double p_new = gamma / V if allow_new else 0.0
    cdef double acc, x, p
    cdef long s
    cdef int choice, old

    for i in range(start, stop):
        w = words[i]
        c = cells[i]
        old = z[i]
        if old >= 0:
            nkw[old, w] -= 1
            nk[old] -= 1
            nck[c, old] -= 1
            z[i] = -1

        acc = 0.0
        for k in range(n_used):
            if nk[k] > 0:
                s = 0
                for j in range(nbr_ptr[c], nbr_ptr[c + 1]):
                    s += nck[nbr_idx[j], k]
                p = (s + alpha) * ((nkw[k, w] + beta) / (nk[k] + vbeta))
                acc += p
            cum[k] = acc
        acc += p_new
        cum[n_used] = acc

        x = uniforms[i - start] * acc
        choice = n_used
        for k in range(n_used + 1):
            if x < cum[k]:
                choice = k
                break

        if choice == n_used:
            if n_used == cap:
                return i, n_used
            n_used += 1

        z[i] = choice
        nkw[choice, w] += 1
        nk[choice] += 1
        nck[c, choice] += 1

    return stop, n_used
