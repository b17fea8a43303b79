"""Per-pixel numba kernels for the ops that are too slow as numpy expressions.

All kernels are strictly elementwise (no fastmath, no reductions across
pixels except integer histograms), so results do not depend on pixel order.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _rgb_to_hsv_px(r, g, b):
    maxc = max(r, g, b)
    minc = min(r, g, b)
    v = maxc
    chroma = maxc - minc
    if chroma <= 0.0:
        return 0.0, 0.0, v
    s = chroma / maxc
    rc = (maxc - r) / chroma
    gc = (maxc - g) / chroma
    bc = (maxc - b) / chroma
    if r == maxc:
        h = bc - gc
    elif g == maxc:
        h = 2.0 + rc - bc
    else:
        h = 4.0 + gc - rc
    if h < 0.0:
        h += 6.0
    h = h / 6.0
    if h >= 1.0:
        h = 0.0
    return h, s, v


@njit(cache=True, inline="always")
def _hsv_to_rgb_px(h, s, v):
    h6 = h * 6.0
    fi = np.floor(h6)
    f = h6 - fi
    i = int(fi)
    if i >= 6:  # h just below 1 can round up to h6 == 6
        i = 0
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    if i == 0:
        return v, t, p
    if i == 1:
        return q, v, p
    if i == 2:
        return p, v, t
    if i == 3:
        return p, q, v
    if i == 4:
        return t, p, v
    return v, p, q


@njit(cache=True)
def rgb_to_hsv(img):
    h, w, _ = img.shape
    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            hh, ss, vv = _rgb_to_hsv_px(img[y, x, 0], img[y, x, 1], img[y, x, 2])
            out[y, x, 0] = hh
            out[y, x, 1] = ss
            out[y, x, 2] = vv
    return out


@njit(cache=True)
def hsv_to_rgb(hsv):
    h, w, _ = hsv.shape
    out = np.empty_like(hsv)
    for y in range(h):
        for x in range(w):
            r, g, b = _hsv_to_rgb_px(hsv[y, x, 0], hsv[y, x, 1], hsv[y, x, 2])
            out[y, x, 0] = r
            out[y, x, 1] = g
            out[y, x, 2] = b
    return out


@njit(cache=True)
def hsv_adjust(img, hue_delta, sat_scale):
    """Shift hue by ``hue_delta`` turns and scale saturation, clamped to [0, 1]."""
    h, w, _ = img.shape
    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            hh, ss, vv = _rgb_to_hsv_px(img[y, x, 0], img[y, x, 1], img[y, x, 2])
            hh = hh + hue_delta
            if hh >= 1.0:
                hh -= 1.0
            ss = min(ss * sat_scale, 1.0)
            r, g, b = _hsv_to_rgb_px(hh, ss, vv)
            out[y, x, 0] = min(max(r, 0.0), 1.0)
            out[y, x, 1] = min(max(g, 0.0), 1.0)
            out[y, x, 2] = min(max(b, 0.0), 1.0)
    return out


@njit(cache=True)
def equalize(img, nbins):
    h, w, _ = img.shape
    n = h * w
    out = np.empty_like(img)
    hist = np.zeros(nbins, dtype=np.int64)
    lut = np.empty(nbins, dtype=np.float64)
    for c in range(3):
        hist[:] = 0
        for y in range(h):
            for x in range(w):
                b = int(img[y, x, c] * nbins)
                if b > nbins - 1:
                    b = nbins - 1
                hist[b] += 1
        cdf_min = 0
        for b in range(nbins):
            if hist[b] > 0:
                cdf_min = hist[b]
                break
        if cdf_min == n:
            for y in range(h):
                for x in range(w):
                    out[y, x, c] = img[y, x, c]
            continue
        acc = 0
        for b in range(nbins):
            acc += hist[b]
            val = (acc - cdf_min) / (n - cdf_min)
            lut[b] = min(max(val, 0.0), 1.0)
        for y in range(h):
            for x in range(w):
                b = int(img[y, x, c] * nbins)
                if b > nbins - 1:
                    b = nbins - 1
                out[y, x, c] = lut[b]
    return out


@njit(cache=True)
def solarize(img, threshold):
    out = np.empty_like(img)
    flat = img.ravel()
    oflat = out.ravel()
    for i in range(flat.size):
        v = flat[i]
        oflat[i] = 1.0 - v if v >= threshold else v
    return out


@njit(cache=True)
def posterize(img, levels):
    out = np.empty_like(img)
    flat = img.ravel()
    oflat = out.ravel()
    top = levels - 1
    for i in range(flat.size):
        q = np.floor(flat[i] * levels)
        if q > top:
            q = top
        oflat[i] = q / top
    return out
