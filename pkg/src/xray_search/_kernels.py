"""Compiled inner loops for candidate-pose scanning."""

import numba
import numpy as np


@numba.njit(nogil=True, cache=True)
def scan_rotation(visible, observed, obs_count, dx, dy, txs, tys, threshold, acc, hits):
    """Test every (ty, tx) translation for one rotation bin.

    A candidate is consistent when its modal mask (amodal mask restricted to
    ``visible``) has IoU > ``threshold`` with ``observed``, or when both are
    empty.  Consistent candidates add their amodal mask into ``acc`` and set
    ``hits[j, i]``.
    """
    h, w = visible.shape
    n = dx.shape[0]
    for j in range(tys.shape[0]):
        ty = tys[j]
        for i in range(txs.shape[0]):
            tx = txs[i]
            cand = 0
            inter = 0
            dead = False
            for k in range(n):
                x = tx + dx[k]
                y = ty + dy[k]
                if x >= 0 and x < w and y >= 0 and y < h and visible[y, x]:
                    cand += 1
                    if observed[y, x]:
                        inter += 1
                    elif obs_count == 0:
                        dead = True
                        break
                if obs_count > 0 and (k & 31) == 31:
                    # IoU <= (inter + remaining) / |observed|; division is monotone
                    if (inter + (n - k - 1)) / obs_count <= threshold:
                        dead = True
                        break
            if dead:
                continue
            if obs_count == 0:
                ok = cand == 0
            else:
                ok = inter / (cand + obs_count - inter) > threshold
            if ok:
                hits[j, i] = 1
                for k in range(n):
                    x = tx + dx[k]
                    y = ty + dy[k]
                    if x >= 0 and x < w and y >= 0 and y < h:
                        acc[y, x] += 1


def warmup():
    v = np.zeros((2, 2), dtype=np.uint8)
    d = np.zeros(1, dtype=np.int32)
    t = np.zeros(1, dtype=np.int64)
    scan_rotation(v, v, 0, d, d, t, t, 0.9, np.zeros((2, 2), np.int32), np.zeros((1, 1), np.uint8))
