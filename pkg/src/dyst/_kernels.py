"""Compiled inner loops for the first-fit Monte-Carlo engine."""
import numpy as np
from numba import njit


@njit(cache=True)
def first_fit_table(codewords, masks, weights, h, needed, n_needed):
    """First fit of every h-bit value, built codeword-first.

    Masks are visited in canonical order; the first codeword that reaches a
    value through the current mask is, by construction, that value's first
    fit.  Stops as soon as every value flagged in ``needed`` is assigned.
    """
    size = 1 << h
    ff = np.full(size, -1, dtype=np.int32)
    wt = np.full(size, 255, dtype=np.uint8)
    remaining = n_needed
    ncode = codewords.shape[0]
    for k in range(masks.shape[0]):
        m = masks[k]
        w = weights[k]
        for msg in range(ncode):
            y = codewords[msg] ^ m
            if ff[y] < 0:
                ff[y] = msg
                wt[y] = w
                if needed[y]:
                    remaining -= 1
        if remaining == 0:
            break
    return ff, wt


@njit(cache=True)
def first_fit_scan(ys, masks, weights, table, c):
    """First fit per hash by scanning masks directly (no 2**h table)."""
    n = ys.shape[0]
    cmask = np.uint64((1 << c) - 1)
    shift = np.uint64(c)
    msg_out = np.full(n, -1, dtype=np.int64)
    wt_out = np.full(n, 255, dtype=np.uint8)
    for i in range(n):
        y = ys[i]
        for k in range(masks.shape[0]):
            x = y ^ masks[k]
            if table[np.int64(x >> shift)] == np.int64(x & cmask):
                msg_out[i] = np.int64(x >> shift)
                wt_out[i] = weights[k]
                break
    return msg_out, wt_out
