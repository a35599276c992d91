"""Pure-Python collapsed-Gibbs pass; reference twin of the compiled kernel."""
import numpy as np


def gibbs_pass(words, z, cells, start, stop, nkw, nk, nck, nbr_ptr, nbr_idx,
               alpha, beta, gamma, n_used, allow_new, uniforms, cum):
    """Resample topic assignments of tokens ``start..stop-1`` in place.

    Returns ``(position, n_used)``. ``position < stop`` means a new topic was
    drawn while every slot was taken: the token at ``position`` is left
    unassigned and the caller must grow the tables and resume from there.
    """
    cap = nk.shape[0]
    V = nkw.shape[1]
    vbeta = V * beta
    p_new = gamma / V if allow_new else 0.0
    for i in range(start, stop):
        w = words[i]
        c = cells[i]
        old = z[i]
        if old >= 0:
            nkw[old, w] -= 1
            nk[old] -= 1
            nck[c, old] -= 1
            z[i] = -1

        nbrs = nbr_idx[nbr_ptr[c]:nbr_ptr[c + 1]]
        live = nk[:n_used]
        s = nck[nbrs, :n_used].sum(axis=0).astype(np.float64)
        p = (s + alpha) * ((nkw[:n_used, w] + beta) / (live + vbeta))
        p[live <= 0] = 0.0
        p = np.append(p, p_new)
        acc = np.cumsum(p)
        x = uniforms[i - start] * acc[-1]
        choice = int(np.searchsorted(acc, x, side="right"))
        if choice > n_used:
            choice = n_used

        if choice == n_used:
            if n_used == cap:
                return i, n_used
            n_used += 1

        z[i] = choice
        nkw[choice, w] += 1
        nk[choice] += 1
        nck[c, choice] += 1
    return stop, n_used
