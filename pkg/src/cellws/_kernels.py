"""Compiled inner loops: grayscale reconstruction and the watershed flood.

Both kernels are deterministic.  The flood orders its queue by (priority,
insertion index) so equal-priority pixels are served first-in-first-out;
neighbour pushes happen in raster-scan order of the offsets, which pins the
insertion indices and therefore the tie-breaking.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# neighbour offsets in raster-scan order; the first four rows are shared by
# 4-connectivity (rows 1, 3, 4, 6 of the 8-conn table)
_OFF8 = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    np.int64,
)
_OFF4 = np.array([(-1, 0), (0, -1), (0, 1), (1, 0)], np.int64)


@njit(cache=True)
def _reconstruct(rec, ceiling, use8):
    """Morphological reconstruction by dilation of ``rec`` under ``ceiling``.

    In-place hybrid algorithm: one forward raster sweep, one backward sweep
    that also seeds a FIFO queue, then queue propagation until the true
    fixed point is reached.
    """
    H, W = rec.shape

    # forward sweep: propagate from raster-preceding neighbours
    for y in range(H):
        for x in range(W):
            v = rec[y, x]
            if y > 0:
                if rec[y - 1, x] > v:
                    v = rec[y - 1, x]
                if use8:
                    if x > 0 and rec[y - 1, x - 1] > v:
                        v = rec[y - 1, x - 1]
                    if x < W - 1 and rec[y - 1, x + 1] > v:
                        v = rec[y - 1, x + 1]
            if x > 0 and rec[y, x - 1] > v:
                v = rec[y, x - 1]
            c = ceiling[y, x]
            rec[y, x] = v if v < c else c

    # backward sweep, collecting pixels that still have work to hand down
    cap = 1024
    queue = np.empty(cap, np.int64)
    head = 0
    size = 0
    for y in range(H - 1, -1, -1):
        for x in range(W - 1, -1, -1):
            v = rec[y, x]
            if y < H - 1:
                if rec[y + 1, x] > v:
                    v = rec[y + 1, x]
                if use8:
                    if x > 0 and rec[y + 1, x - 1] > v:
                        v = rec[y + 1, x - 1]
                    if x < W - 1 and rec[y + 1, x + 1] > v:
                        v = rec[y + 1, x + 1]
            if x < W - 1 and rec[y, x + 1] > v:
                v = rec[y, x + 1]
            c = ceiling[y, x]
            if v > c:
                v = c
            rec[y, x] = v

            push = False
            if y < H - 1:
                if rec[y + 1, x] < v and rec[y + 1, x] < ceiling[y + 1, x]:
                    push = True
                if use8 and not push and x > 0:
                    if rec[y + 1, x - 1] < v and rec[y + 1, x - 1] < ceiling[y + 1, x - 1]:
                        push = True
                if use8 and not push and x < W - 1:
                    if rec[y + 1, x + 1] < v and rec[y + 1, x + 1] < ceiling[y + 1, x + 1]:
                        push = True
            if not push and x < W - 1:
                if rec[y, x + 1] < v and rec[y, x + 1] < ceiling[y, x + 1]:
                    push = True
            if push:
                if size == cap:
                    queue, head, cap = _compact_or_grow(queue, head, size, cap)
                queue[(head + size) % cap] = y * W + x
                size += 1

    # queue propagation to the fixed point
    while size > 0:
        p = queue[head]
        head = (head + 1) % cap
        size -= 1
        y = p // W
        x = p % W
        v = rec[y, x]
        offs = _OFF8 if use8 else _OFF4
        for k in range(offs.shape[0]):
            ny = y + offs[k, 0]
            nx = x + offs[k, 1]
            if ny < 0 or ny >= H or nx < 0 or nx >= W:
                continue
            r = rec[ny, nx]
            c = ceiling[ny, nx]
            if r < v and r < c:
                rec[ny, nx] = v if v < c else c
                if size == cap:
                    queue, head, cap = _compact_or_grow(queue, head, size, cap)
                queue[(head + size) % cap] = ny * W + nx
                size += 1


@njit(cache=True)
def _compact_or_grow(queue, head, size, cap):
    new = np.empty(cap * 2, np.int64)
    for i in range(size):
        new[i] = queue[(head + i) % cap]
    return new, 0, cap * 2


@njit(cache=True)
def _heap_push(keys, pix, src, size, key, p, lab):
    i = size
    keys[i] = key
    pix[i] = p
    src[i] = lab
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        pix[parent], pix[i] = pix[i], pix[parent]
        src[parent], src[i] = src[i], src[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(keys, pix, src, size):
    key = keys[0]
    p = pix[0]
    lab = src[0]
    size -= 1
    if size > 0:
        keys[0] = keys[size]
        pix[0] = pix[size]
        src[0] = src[size]
        i = 0
        while True:
            left = 2 * i + 1
            if left >= size:
                break
            child = left
            right = left + 1
            if right < size and keys[right] < keys[left]:
                child = right
            if keys[i] <= keys[child]:
                break
            keys[i], keys[child] = keys[child], keys[i]
            pix[i], pix[child] = pix[child], pix[i]
            src[i], src[child] = src[child], src[i]
            i = child
    return key, p, lab, size


@njit(cache=True)
def _flood(key32, labels, region, H, W, use8):
    """Priority-flood region growing from labelled seeds.

    ``key32`` holds order-preserving uint32 encodings of the relief, flat.
    ``labels`` carries the seeds in and the result out.  Heap entries encode
    (priority << 32) | insertion counter so equal priorities pop FIFO.
    Pixels outside ``region`` are never visited.
    """
    n = H * W
    cap = 9 * n + 16  # seeds plus at most 8 pushes per expanded pixel
    keys = np.empty(cap, np.uint64)
    pix = np.empty(cap, np.int64)
    src = np.empty(cap, np.int32)
    popped = np.zeros(n, np.uint8)
    size = 0
    counter = np.uint64(0)

    for p in range(n):
        if labels[p] != 0 and region[p] != 0:
            key = (np.uint64(key32[p]) << np.uint64(32)) | counter
            counter += np.uint64(1)
            size = _heap_push(keys, pix, src, size, key, p, labels[p])

    offs = _OFF8 if use8 else _OFF4
    while size > 0:
        key, p, lab, size = _heap_pop(keys, pix, src, size)
        if popped[p] != 0:
            continue
        popped[p] = 1
        if labels[p] == 0:
            labels[p] = lab
        else:
            lab = labels[p]
        prio = key >> np.uint64(32)
        y = p // W
        x = p % W
        for k in range(offs.shape[0]):
            ny = y + offs[k, 0]
            nx = x + offs[k, 1]
            if ny < 0 or ny >= H or nx < 0 or nx >= W:
                continue
            q = ny * W + nx
            if region[q] == 0 or labels[q] != 0 or popped[q] != 0:
                continue
            nk = np.uint64(key32[q])
            if nk < prio:
                nk = prio
            nkey = (nk << np.uint64(32)) | counter
            counter += np.uint64(1)
            size = _heap_push(keys, pix, src, size, nkey, q, lab)


def warmup() -> None:
    """Force JIT compilation of both kernels on tiny inputs."""
    rec = np.zeros((3, 3), np.float32)
    ceil = np.ones((3, 3), np.float32)
    _reconstruct(rec, ceil, True)
    _reconstruct(rec.copy(), ceil, False)
    lab = np.zeros(9, np.int32)
    lab[0] = 1
    _flood(np.zeros(9, np.uint32), lab, np.ones(9, np.uint8), 3, 3, True)
    lab = np.zeros(9, np.int32)
    lab[0] = 1
    _flood(np.zeros(9, np.uint32), lab, np.ones(9, np.uint8), 3, 3, False)
