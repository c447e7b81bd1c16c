# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-path kernels; bit-identical mirror of ``_kernels_py``."""

from libc.math cimport log1p

BACKEND = "compiled"

cdef extern from *:
    """
    #include <stdint.h>
    static const uint64_t PSV_GAMMA = 0x9E3779B97F4A7C15ULL;
    static const uint64_t PSV_STREAM_SALT = 0xBF58476D1CE4E5B9ULL;
    static const uint64_t PSV_TRUTH_SALT = 0xD1B54A32D192ED03ULL;
    static inline uint64_t psv_mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    """
    unsigned long long PSV_GAMMA
    unsigned long long PSV_STREAM_SALT
    unsigned long long PSV_TRUTH_SALT
    unsigned long long psv_mix(unsigned long long z) nogil

cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline double _uniform(unsigned long long state, unsigned long long index) nogil:
    cdef unsigned long long x = psv_mix(state + (index + 1) * PSV_GAMMA)
    return ((x >> 11) + 0.5) * _INV53


def stream_state(seed: int, stream_id: int) -> int:
    cdef unsigned long long s = seed & 0xFFFFFFFFFFFFFFFF
    cdef unsigned long long t = stream_id & 0xFFFFFFFFFFFFFFFF
    return psv_mix(s ^ (t * PSV_STREAM_SALT))


def stream_uniform(state: int, index: int) -> float:
    return _uniform(state, index)


cdef inline double _laplace_quantile(double u, double scale) nogil:
    cdef double d = u - 0.5
    if d > 0.0:
        return -scale * log1p(-2.0 * d)
    if d < 0.0:
        return scale * log1p(2.0 * d)
    return 0.0


def laplace_quantile(u: float, scale: float) -> float:
    return _laplace_quantile(u, scale)


def truth_label(dataset_seed: int, input_id: int, num_classes: int) -> int:
    cdef unsigned long long s = dataset_seed & 0xFFFFFFFFFFFFFFFF
    cdef unsigned long long i = input_id & 0xFFFFFFFFFFFFFFFF
    cdef unsigned long long h = psv_mix(s ^ (i * PSV_TRUTH_SALT))
    return h % (<unsigned long long> num_classes)


def serve_pick(
    long long[::1] lat_idx,
    long long[::1] acc_idx,
    double[::1] accs,
    long long[::1] ncls,
    long long acc_req_idx,
    long long lat_cap_idx,
    unsigned long long sel_state,
    unsigned long long draw_base,
    unsigned long long dataset_seed,
    unsigned long long input_id,
):
    cdef Py_ssize_t n = lat_idx.shape[0]
    cdef Py_ssize_t lo = 0, hi = n, mid, i, j, pos
    cdef long long k
    cdef unsigned long long truth
    cdef double u0, u1, u2
    cdef long long count, label

    while lo < hi:
        mid = (lo + hi) // 2
        if lat_idx[mid] <= lat_cap_idx:
            lo = mid + 1
        else:
            hi = mid
    j = lo - 1
    if j < 0:
        return -1, -1
    lo = 0
    hi = n
    while lo < hi:
        mid = (lo + hi) // 2
        if acc_idx[mid] < acc_req_idx:
            lo = mid + 1
        else:
            hi = mid
    i = lo
    if i > j:
        return -1, -1

    count = j - i + 1
    u0 = _uniform(sel_state, draw_base)
    pos = i + <long long> (u0 * count)
    if pos > j:
        pos = j
    k = ncls[pos]
    truth = psv_mix(dataset_seed ^ (input_id * PSV_TRUTH_SALT)) % (<unsigned long long> k)
    u1 = _uniform(sel_state, draw_base + 1)
    u2 = _uniform(sel_state, draw_base + 2)
    if k == 1 or u1 < accs[pos]:
        label = <long long> truth
    else:
        label = (<long long> truth + 1 + <long long> (u2 * (k - 1))) % k
    return pos, label
