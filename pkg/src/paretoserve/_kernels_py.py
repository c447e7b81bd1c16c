"""Pure-Python hot-path kernels.

Mirrors ``paretoserve._speedups`` (the Cython build) operation for operation;
both backends must produce bit-identical results so that seeded experiments
replay the same way regardless of which one is importable.  The serving RNG is
a splitmix64 counter stream: a draw is addressed by (stream state, draw index)
alone, so every consumer is random-access and nothing here holds state.
"""

from math import log1p

BACKEND = "pure"

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_STREAM_SALT = 0xBF58476D1CE4E5B9
_TRUTH_SALT = 0xD1B54A32D192ED03
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_state(seed: int, stream_id: int) -> int:
    """Initial splitmix64 state for the (seed, stream_id) uniform stream."""
    return _mix((seed & _MASK) ^ ((stream_id & _MASK) * _STREAM_SALT & _MASK))


def stream_uniform(state: int, index: int) -> float:
    """The index-th uniform draw of a stream, strictly inside (0, 1)."""
    x = _mix((state + ((index + 1) * _GAMMA)) & _MASK)
    return ((x >> 11) + 0.5) * _INV53


def laplace_quantile(u: float, scale: float) -> float:
    """Zero-mean Laplace inverse CDF: -scale * sgn(u - 1/2) * ln(1 - 2|u - 1/2|)."""
    d = u - 0.5
    if d > 0.0:
        return -scale * log1p(-2.0 * d)
    if d < 0.0:
        return scale * log1p(2.0 * d)
    return 0.0


def truth_label(dataset_seed: int, input_id: int, num_classes: int) -> int:
    """Ground-truth class of an input under the simulated dataset."""
    h = _mix((dataset_seed & _MASK) ^ ((input_id & _MASK) * _TRUTH_SALT & _MASK))
    return h % num_classes


def serve_pick(
    lat_idx,
    acc_idx,
    accs,
    ncls,
    acc_req_idx: int,
    lat_cap_idx: int,
    sel_state: int,
    draw_base: int,
    dataset_seed: int,
    input_id: int,
):
    """Feasibility test, uniform pick, and simulated-oracle label in one step.

    Entries are sorted ascending in both latency index and accuracy index, so
    the feasibility set is the contiguous run [first acc_idx >= acc_req_idx,
    last lat_idx <= lat_cap_idx].  Returns (position, label), position -1 when
    the set is empty (no draws consumed); otherwise draws draw_base..+2 from
    the selection stream.
    """
    n = len(lat_idx)
    # rightmost entry with lat_idx <= lat_cap_idx
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if lat_idx[mid] <= lat_cap_idx:
            lo = mid + 1
        else:
            hi = mid
    j = lo - 1
    if j < 0:
        return -1, -1
    # leftmost entry with acc_idx >= acc_req_idx
    lo, hi = 0, n
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
    u0 = stream_uniform(sel_state, draw_base)
    pos = i + int(u0 * count)
    if pos > j:
        pos = j
    k = ncls[pos]
    truth = truth_label(dataset_seed, input_id, k)
    u1 = stream_uniform(sel_state, draw_base + 1)
    u2 = stream_uniform(sel_state, draw_base + 2)
    if k == 1 or u1 < accs[pos]:
        label = truth
    else:
        label = (truth + 1 + int(u2 * (k - 1))) % k
    return pos, label
