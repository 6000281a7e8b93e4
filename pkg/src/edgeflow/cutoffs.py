"""Smooth momentum cutoffs, dyadic shells and anisotropic norms.

Everything here is vectorized over numpy arrays; momenta are pairs
``(k0, k1)`` of equal-shape arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "smoothstep",
    "chi",
    "chi_mollified",
    "channel_norm",
    "band_cutoff",
    "shell",
    "shell_support",
]


def smoothstep(t):
    """Quintic 6t^5 - 15t^4 + 10t^3 clamped to [0, 1]; C^2 at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def chi(s):
    """Even plateau cutoff: 1 for |s| <= 1, 0 for |s| >= 2, monotone between."""
    return 1.0 - smoothstep(np.abs(s) - 1.0)


def chi_mollified(s, eps, nodes=32):
    """Gaussian mollification of :func:`chi` over the half line.

    Averages chi against exp(-|s-u|^2/eps) restricted to u >= 0, with the
    weight renormalized on the same half line, so the result is smooth in s
    and tends to chi(s) as eps -> 0.  Strict positivity holds up to the
    Gaussian quadrature floor.
    """
    if eps <= 0.0:
        return chi(s)
    s = np.asarray(s, dtype=float)
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    u = s[..., None] + np.sqrt(eps / 2.0) * x
    mask = u >= 0.0
    wm = w * mask
    norm = wm.sum(axis=-1)
    out = (wm * chi(u)).sum(axis=-1)
    return np.where(norm > 0.0, out / np.where(norm > 0.0, norm, 1.0), chi(s))


def channel_norm(k0, k1, v):
    """Velocity-weighted Euclidean norm sqrt(k0^2 + v^2 k1^2)."""
    return np.hypot(k0, v * k1)


def band_cutoff(r, h, n, eps=0.0):
    """Infrared/ultraviolet window in the radial variable.

    ``(1 - chi(2^-h r)) * chi(2^-n r)``: supported on 2^(h-1) <= r <= 2^(n+1),
    identically 1 on 2^(h+1) <= r <= 2^n.
    """
    if eps > 0.0:
        return (1.0 - chi_mollified(np.ldexp(np.asarray(r, float), -h), eps)) * chi_mollified(
            np.ldexp(np.asarray(r, float), -n), eps
        )
    r = np.asarray(r, dtype=float)
    return (1.0 - chi(r * 2.0 ** (-h))) * chi(r * 2.0 ** (-n))


def shell(r, j, h_min):
    """Single dyadic shell f_j = window[h_min, j] - window[h_min, j-1].

    The shells partition the full window: sum_{j=h_min..0} f_j = window[h_min, 0].
    """
    return band_cutoff(r, h_min, j) - band_cutoff(r, h_min, j - 1)


def shell_support(j):
    """Radial support (r_lo, r_hi) of the shell at scale j."""
    return 2.0 ** (j - 1), 2.0 ** (j + 1)
