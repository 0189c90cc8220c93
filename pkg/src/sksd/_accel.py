"""Optional numba kernels for the sliced-Stein pair sums.

``gram_sum`` and ``slice_terms`` are ``None`` when numba is unavailable;
callers then use the vectorized numpy paths, which compute the same
quantities.
"""

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

gram_sum = None
slice_terms = None

if numba is not None:
    from math import exp

    @numba.njit(cache=True, nogil=True)
    def _gram_sum(A, S, c, h, out):
        n, m = A.shape
        for i in range(n):
            for j in range(i, n):
                acc = 0.0
                for k in range(m):
                    d = A[i, k] - A[j, k]
                    hk = h[k]
                    u = d * d / hk
                    ck = c[k]
                    acc += exp(-u) * (
                        S[i, k] * S[j, k]
                        + 2.0 * ck / hk * d * (S[i, k] - S[j, k])
                        + ck * ck * 2.0 / hk * (1.0 - 2.0 * u)
                    )
                out[i, j] = acc
                out[j, i] = acc
        return out

    gram_sum = _gram_sum

    @numba.njit(cache=True, nogil=True)
    def _slice_terms(A, S, c, h, values, v, dc, w):
        # pair sums over i != j for each slice k; M_ij is antisymmetric in (i, j)
        n, m = A.shape
        for k in range(m):
            hk = h[k]
            ck = c[k]
            val = 0.0
            dck = 0.0
            for i in range(n):
                for j in range(i + 1, n):
                    d = A[i, k] - A[j, k]
                    u = d * d / hk
                    K = exp(-u)
                    si = S[i, k]
                    sj = S[j, k]
                    g2 = 2.0 * d / hk * K
                    chi = (2.0 / hk) * (1.0 - 2.0 * u) * K
                    val += 2.0 * (si * sj * K + ck * g2 * (si - sj) + ck * ck * chi)
                    v[k, i] += 2.0 * (K * sj + ck * g2)
                    v[k, j] += 2.0 * (K * si - ck * g2)
                    dck += 2.0 * g2 * (si - sj) + 4.0 * ck * chi
                    Mij = (
                        -si * sj * g2
                        + ck * (si - sj) * (2.0 / hk) * (1.0 - 2.0 * u) * K
                        + ck * ck * K * (-12.0 * d / (hk * hk) + 8.0 * d * u / (hk * hk))
                    )
                    w[k, i] += 2.0 * Mij
                    w[k, j] -= 2.0 * Mij
            values[k] = val
            dc[k] = dck

    slice_terms = _slice_terms
