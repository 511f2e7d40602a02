"""Slow, independent reference computations used only by the tests.

Nothing here calls into rcae's FFT or convolution code paths.
"""

import numpy as np


def dft2_direct(x):
    x = np.asarray(x, dtype=np.float64)
    d1, d2 = x.shape
    out = np.zeros((d1, d2), dtype=np.complex128)
    for u in range(d1):
        for v in range(d2):
            acc = 0j
            for m in range(d1):
                for n in range(d2):
                    acc += x[m, n] * np.exp(-2j * np.pi * (u * m / d1 + v * n / d2))
            out[u, v] = acc
    return out


def conv_valid_loop(img, ker):
    d1, d2 = img.shape
    w1, w2 = ker.shape
    out = np.zeros((d1 - w1 + 1, d2 - w2 + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            acc = 0.0
            for a in range(w1):
                for b in range(w2):
                    acc += ker[a, b] * img[i + w1 - 1 - a, j + w2 - 1 - b]
            out[i, j] = acc
    return out


def conv_full_loop(fmap, ker):
    h1, h2 = fmap.shape
    w1, w2 = ker.shape
    out = np.zeros((h1 + w1 - 1, h2 + w2 - 1))
    for i in range(h1):
        for j in range(h2):
            for a in range(w1):
                for b in range(w2):
                    out[i + a, j + b] += fmap[i, j] * ker[a, b]
    return out


def encode_loop(x, filters, biases):
    """Return (preactivation, tanh maps, 1 - maps^2) with explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    pre = []
    for a, b in zip(filters, biases):
        acc = sum(conv_valid_loop(x[c], a) for c in range(x.shape[0]))
        pre.append(acc + b)
    pre = np.array(pre)
    maps = np.tanh(pre)
    return pre, maps, 1.0 - maps ** 2


def lift_loop(x, filters, biases, d):
    """Spectra (H, X, D) of one image via loops and the direct DFT."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    _, maps, dmaps = encode_loop(x, filters, biases)
    K = len(filters)

    def pad(p):
        out = np.zeros((d, d))
        out[:p.shape[0], :p.shape[1]] = p
        return out

    H = np.array([dft2_direct(pad(maps[k])) for k in range(K)])
    X = sum(dft2_direct(x[c]) for c in range(x.shape[0]))
    D = np.array([dft2_direct(pad(dmaps[k])) * dft2_direct(pad(filters[k])) for k in range(K)])
    return H, X, D


def ridge_per_bin(Hs, Xs, Ds, lam):
    """Minimize sum_n |sum_k W_k H_nk - X_n|^2 + lam |sum_k W_k D_nk|^2 bin by bin.

    ``Hs``/``Ds``: (N, K, d1, d2), ``Xs``: (N, d1, d2). Dense normal equations
    solved with numpy.linalg.solve for each bin.
    """
    Hs, Xs, Ds = map(np.asarray, (Hs, Xs, Ds))
    N, K, d1, d2 = Hs.shape
    W = np.zeros((K, d1, d2), dtype=np.complex128)
    for u in range(d1):
        for v in range(d2):
            Hm = Hs[:, :, u, v]        # N x K
            Dm = Ds[:, :, u, v]
            A = Hm.conj().T @ Hm + lam * Dm.conj().T @ Dm
            rhs = Hm.conj().T @ Xs[:, u, v]
            W[:, u, v] = np.linalg.solve(A, rhs)
    return W


def objective_per_sample(Hs, Xs, Ds, W, lam):
    """Mean over samples of the spectral loss divided by the bin count."""
    P = Xs.shape[-1] * Xs.shape[-2]
    total = 0.0
    for H, X, D in zip(Hs, Xs, Ds):
        r = (W * H).sum(0) - X
        c = (W * D).sum(0)
        total += (np.sum(np.abs(r) ** 2) + lam * np.sum(np.abs(c) ** 2)) / P
    return total / len(Xs)
