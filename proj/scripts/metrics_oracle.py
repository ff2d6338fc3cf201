"""Reference values for the UIQM / UCIQE unit tests.

A second, straight-line implementation on numpy/scipy. It shares no code
with the C++ headers; the synthetic images are defined by closed formulas
that tests/test_metrics.cpp reproduces exactly.
"""
import math

import numpy as np
from scipy import ndimage


def image(kind):
    if kind == 0:
        h, w = 32, 40
        y, x = np.mgrid[0:h, 0:w]
        r = ((x * 7 + y * 3) % 256) / 255.0
        g = ((x * x + 2 * y) % 256) / 255.0
        b = ((5 * x * y + 11) % 256) / 255.0
    elif kind == 1:
        h, w = 25, 33
        y, x = np.mgrid[0:h, 0:w].astype(np.float64)
        r = 0.5 + 0.4 * np.sin(x / 5.0) * np.cos(y / 7.0)
        g = 0.3 + 0.2 * (x / w)
        b = 0.6 - 0.3 * (y / h)
    else:
        h, w = 20, 20
        y, x = np.mgrid[0:h, 0:w]
        base = np.where(((x // 4) + (y // 4)) % 2 == 1, 0.8, 0.2)
        r, g, b = base * 0.3, base * 0.9, base * 0.6
    return np.stack([r, g, b], axis=-1).astype(np.float64)


def trimmed_mean(v, al=0.1, ar=0.1):
    v = np.sort(v.ravel())
    k = v.size
    tl = math.ceil(al * k - 1e-9)
    tr = math.floor(ar * k + 1e-9)
    return v[tl:k - tr].mean()


def uicm(img):
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    rg = (r - g).ravel()
    yb = ((r + g) / 2 - b).ravel()
    mrg, myb = trimmed_mean(rg), trimmed_mean(yb)
    srg = np.mean((rg - mrg) ** 2)
    syb = np.mean((yb - myb) ** 2)
    return -0.0268 * math.hypot(mrg, myb) + 0.1586 * math.sqrt(srg + syb)


def sobel(c):
    mag = np.hypot(ndimage.sobel(c, 0), ndimage.sobel(c, 1))
    peak = mag.max()
    return mag * (255.0 / peak) if peak > 0 else mag


def blocks(h, w, size=10):
    k2, k1 = max(1, h // size), max(1, w // size)
    sy, sx = min(size, h), min(size, w)
    for i in range(k2):
        for j in range(k1):
            yield (slice(i * sy, (i + 1) * sy), slice(j * sx, (j + 1) * sx)), k1 * k2


def eme(c):
    acc, n = 0.0, 1
    for sl, n in blocks(*c.shape):
        lo, hi = c[sl].min(), c[sl].max()
        if lo > 0 and hi > 0:
            acc += math.log(hi / lo)
    return 2.0 / n * acc


def uism(img):
    lam = (0.299, 0.587, 0.114)
    return sum(l * eme(sobel(img[..., k]) * img[..., k]) for k, l in enumerate(lam))


def uiconm(img):
    acc, n = 0.0, 1
    for sl, n in blocks(*img.shape[:2]):
        blk = img[sl[0], sl[1], :]
        top, bot = blk.max() - blk.min(), blk.max() + blk.min()
        if top > 0 and bot > 0:
            acc += (top / bot) * math.log(top / bot)
    return -1.0 / n * acc


def uiqm(img01):
    x = img01 * 255.0
    c = (uicm(x), uism(x), uiconm(x))
    return c + (0.0282 * c[0] + 0.2953 * c[1] + 3.5753 * c[2],)


def lab(img):
    lin = np.where(img <= 0.04045, img / 12.92, ((img + 0.055) / 1.055) ** 2.4)
    m = np.array([[0.4124564, 0.3575761, 0.1804375],
                  [0.2126729, 0.7151522, 0.0721750],
                  [0.0193339, 0.1191920, 0.9503041]])
    xyz = lin @ m.T / m.sum(axis=1)
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    return 116 * f[..., 1] - 16, 500 * (f[..., 0] - f[..., 1]), 200 * (f[..., 1] - f[..., 2])


def uciqe(img):
    L, a, b = lab(img)
    chroma = np.sqrt(a ** 2 + b ** 2) / 100.0
    l = np.sort(L.ravel() / 100.0)
    n = l.size
    con = l[min(n - 1, int(math.floor(0.99 * n)))] - l[min(n - 1, int(math.floor(0.01 * n)))]
    hi, lo = img.max(axis=-1), img.min(axis=-1)
    sat = np.where(hi > 0, (hi - lo) / np.where(hi > 0, hi, 1), 0.0)
    c = (chroma.std(), con, sat.mean())
    return c + (0.4680 * c[0] + 0.2745 * c[1] + 0.2576 * c[2],)


if __name__ == "__main__":
    for k in range(3):
        img = image(k)
        print(f"image {k}: uiqm (uicm, uism, uiconm, uiqm) = {', '.join(f'{v:.15g}' for v in uiqm(img))}")
        print(f"image {k}: uciqe (chroma_std, contrast, saturation, uciqe) = {', '.join(f'{v:.15g}' for v in uciqe(img))}")
