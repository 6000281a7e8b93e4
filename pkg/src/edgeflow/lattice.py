"""Cylinder geometry and translation-invariant hopping Hamiltonians.

The lattice is periodic in the first direction and open in the second,
with Dirichlet rows at ``x2 = 0`` and ``x2 = L2 - 1`` kept in place as
exact zero rows of every operator.  A Hamiltonian is stored as a sparse
collection of ``M x M`` hopping blocks ``H(z1; x2, y2)`` (amplitude for a
hop from column ``y2`` to column ``x2`` with ring displacement ``z1``),
and its Bloch fibers ``H(k1) = sum_z1 exp(i k1 z1) H(z1)`` are assembled
densely for any real ``k1``.

Indexing convention for fiber matrices: row index ``x2 * M + rho``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CylinderGeometry",
    "LatticeHamiltonian",
    "HermiticityError",
    "haldane_cylinder",
    "hofstadter_cylinder",
    "stacked_shifted",
    "chain_cylinder",
    "builtin_models",
    "assemble_fiber",
    "boundary_weight",
    "dump_blocks",
    "load_blocks",
    "model_from_config",
]


class HermiticityError(ValueError):
    """A pair of hopping blocks violates H(z1; x2, y2) = H(-z1; y2, x2)^dag."""


@dataclass(frozen=True)
class CylinderGeometry:
    """Finite cylinder: ``L1`` sites around (periodic), ``L2`` across
    (Dirichlet), ``M`` internal degrees of freedom per site."""

    L1: int
    L2: int
    M: int = 1

    def __post_init__(self):
        if self.L1 < 4 or self.L2 < 4 or self.M < 1:
            raise ValueError("need L1 >= 4, L2 >= 4, M >= 1")

    @property
    def fiber_dim(self):
        return self.L2 * self.M

    def ring_distance(self, x1, y1):
        d = abs(x1 - y1) % self.L1
        return min(d, self.L1 - d)


class LatticeHamiltonian:
    """Finite-range hopping Hamiltonian on a cylinder.

    Parameters
    ----------
    geometry : CylinderGeometry
    blocks : dict
        Mapping ``(z1, x2, y2) -> (M, M) complex array``.  Entries on the
        Dirichlet rows or beyond the range are rejected.
    hop_range : float
        Maximal Euclidean bond length D; blocks with
        ``hypot(z1, x2 - y2) > D`` are rejected at construction.
    """

    def __init__(self, geometry, blocks=None, hop_range=np.sqrt(2.0)):
        self.geometry = geometry
        self.hop_range = float(hop_range)
        self._blocks = {}
        if blocks:
            for key, blk in blocks.items():
                self.add_block(*key, blk)

    def add_block(self, z1, x2, y2, block, accumulate=True):
        g = self.geometry
        block = np.asarray(block, dtype=complex)
        if block.shape != (g.M, g.M):
            raise ValueError(f"block at {(z1, x2, y2)} must be {g.M}x{g.M}")
        if not (0 <= x2 < g.L2 and 0 <= y2 < g.L2):
            raise ValueError(f"column indices out of range at {(z1, x2, y2)}")
        if np.hypot(z1, x2 - y2) > self.hop_range + 1e-12:
            raise ValueError(
                f"block at {(z1, x2, y2)} exceeds hopping range {self.hop_range}"
            )
        if x2 in (0, g.L2 - 1) or y2 in (0, g.L2 - 1):
            if np.any(block != 0.0):
                raise ValueError("Dirichlet rows must carry zero blocks")
            return
        key = (int(z1), int(x2), int(y2))
        if accumulate and key in self._blocks:
            self._blocks[key] = self._blocks[key] + block
        else:
            self._blocks[key] = block
        if np.all(self._blocks[key] == 0.0):
            del self._blocks[key]

    def block(self, z1, x2, y2):
        g = self.geometry
        out = self._blocks.get((z1, x2, y2))
        if out is None:
            return np.zeros((g.M, g.M), dtype=complex)
        return out

    def items(self):
        return self._blocks.items()

    def check_hermitian(self, rtol=1e-12):
        scale = max((np.max(np.abs(b)) for b in self._blocks.values()), default=1.0)
        for (z1, x2, y2), blk in self._blocks.items():
            partner = self._blocks.get((-z1, y2, x2))
            partner = (
                np.zeros_like(blk) if partner is None else partner
            )
            if np.max(np.abs(blk - partner.conj().T)) > rtol * scale:
                raise HermiticityError(
                    f"blocks at (z1,x2,y2)={(z1, x2, y2)} and {(-z1, y2, x2)} "
                    "are not Hermitian partners"
                )

    def shifted(self, energy):
        """Copy with ``energy`` added on the diagonal of all interior sites."""
        g = self.geometry
        out = LatticeHamiltonian(g, hop_range=self.hop_range)
        for key, blk in self._blocks.items():
            out.add_block(*key, blk)
        eye = energy * np.eye(g.M)
        for x2 in range(1, g.L2 - 1):
            out.add_block(0, x2, x2, eye)
        return out


def assemble_fiber(ham: LatticeHamiltonian, k1: float) -> np.ndarray:
    """Dense Bloch fiber ``sum_z1 exp(-i k1 z1) H(z1)`` at any real k1.

    The phase convention is the wavefunction one: ``exp(+i k1 x1) xi(x2)``
    is an eigenfunction of the full Hamiltonian iff ``xi`` is an
    eigenvector of the fiber, so the dispersion slope is the physical
    propagation velocity.  Raises :class:`HermiticityError` when the input
    blocks are not Hermitian partners (checked pairwise, naming the
    violating pair).
    """
    ham.check_hermitian()
    g = ham.geometry
    n = g.fiber_dim
    out = np.zeros((n, n), dtype=complex)
    for (z1, x2, y2), blk in ham.items():
        phase = np.exp(-1j * k1 * z1)
        out[x2 * g.M : (x2 + 1) * g.M, y2 * g.M : (y2 + 1) * g.M] += phase * blk
    return out


def boundary_weight(geometry, vec):
    """Total |psi|^2 carried by the two Dirichlet rows of a fiber vector."""
    m, l2 = geometry.M, geometry.L2
    v = np.asarray(vec).reshape(l2, m)
    w = np.sum(np.abs(v) ** 2, axis=1)
    return float(w[0] + w[l2 - 1])


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------


def chain_cylinder(geometry, t=1.0):
    """Decoupled rings: hopping -t along the periodic direction only."""
    ham = LatticeHamiltonian(geometry)
    eye = -t * np.eye(geometry.M)
    for x2 in range(1, geometry.L2 - 1):
        ham.add_block(1, x2, x2, eye)
        ham.add_block(-1, x2, x2, eye)
    return ham


def haldane_cylinder(geometry=None, t1=1.0, t2=0.2, phi=np.pi / 2, m_stag=0.0, L1=16, L2=16):
    """Honeycomb Chern-insulator model on the cylinder, zigzag edges.

    The honeycomb lattice is embedded as a square Bravais lattice with an
    ``M = 2`` sublattice index; nearest-neighbour bonds carry ``-t1``, the
    six next-nearest bonds carry ``t2 e^{+-i phi}`` with alternating signs
    around the hexagon, and ``m_stag`` is the staggered sublattice mass.
    The bulk gap closes at ``|m_stag| = 3 sqrt(3) |t2 sin phi|``.
    """
    if geometry is None:
        geometry = CylinderGeometry(L1=L1, L2=L2, M=2)
    if geometry.M != 2:
        raise ValueError("Haldane model needs M = 2")
    ham = LatticeHamiltonian(geometry)
    # orientation fixed so that at phi = +pi/2 the lower-edge mode crossing
    # a mid-gap chemical potential propagates with positive velocity
    up, dn = np.exp(-1j * phi), np.exp(1j * phi)
    interior = range(1, geometry.L2 - 1)
    for y2 in interior:
        nn0 = np.zeros((2, 2), dtype=complex)
        nn0[1, 0] = nn0[0, 1] = -t1
        diag = np.diag([t2 * up, t2 * dn])
        ham.add_block(0, y2, y2, nn0 + np.diag([m_stag, -m_stag]))
        ham.add_block(1, y2, y2, diag)
        ham.add_block(-1, y2, y2, diag.conj())
        if y2 + 1 in interior:
            blk_up = np.zeros((2, 2), dtype=complex)
            blk_up[0, 0] = t2 * dn  # A hop along +a2
            blk_up[1, 1] = t2 * up
            ham.add_block(0, y2 + 1, y2, blk_up)
            ham.add_block(0, y2, y2 + 1, blk_up.conj().T)
            nn_up = np.zeros((2, 2), dtype=complex)
            nn_up[1, 0] = -t1  # A(c) - B(c - a2)
            ham.add_block(0, y2, y2 + 1, nn_up)
            ham.add_block(0, y2 + 1, y2, nn_up.conj().T)
            skew = np.diag([t2 * dn, t2 * up])  # A hop along +(a1 - a2)
            ham.add_block(1, y2, y2 + 1, skew)
            ham.add_block(-1, y2 + 1, y2, skew.conj())
        nn1 = np.zeros((2, 2), dtype=complex)
        nn1[1, 0] = -t1  # A(c) - B(c - a1)
        ham.add_block(-1, y2, y2, nn1)
        ham.add_block(1, y2, y2, nn1.conj().T)
    return ham


def hofstadter_cylinder(geometry=None, p=1, q=3, t=1.0, L1=16, L2=16):
    """Square-lattice model with rational flux p/q per plaquette.

    Landau gauge with the vector potential along the ring direction:
    ring hoppings carry phases ``exp(+-2 pi i (p/q) x2)``, so translation
    invariance along the ring is exact and the flux enters the fiber as
    column-dependent phases.
    """
    from math import gcd

    if q < 2:
        raise ValueError("need q >= 2")
    if gcd(p, q) != 1:
        raise ValueError(f"flux fraction {p}/{q} must be in lowest terms")
    if geometry is None:
        geometry = CylinderGeometry(L1=L1, L2=L2, M=1)
    if geometry.M != 1:
        raise ValueError("Hofstadter model needs M = 1")
    if geometry.L1 % q:
        raise ValueError("L1 must be a multiple of q for a single magnetic cell")
    ham = LatticeHamiltonian(geometry)
    interior = range(1, geometry.L2 - 1)
    for x2 in interior:
        phase = np.exp(2j * np.pi * p / q * x2)
        ham.add_block(1, x2, x2, [[-t * phase]])
        ham.add_block(-1, x2, x2, [[-t * np.conj(phase)]])
        if x2 + 1 in interior:
            ham.add_block(0, x2 + 1, x2, [[-t]])
            ham.add_block(0, x2, x2 + 1, [[-t]])
    return ham


def stacked_shifted(base, shifts):
    """Direct sum of energy-shifted copies of one or several models.

    ``base`` is a single :class:`LatticeHamiltonian` (duplicated) or a
    sequence matched with ``shifts``.  Internal indices of the copies are
    interleaved into an ``M = sum M_i`` model on the same cylinder.
    """
    shifts = list(shifts)
    if not shifts:
        raise ValueError("need at least one shift")
    if isinstance(base, LatticeHamiltonian):
        parts = [base] * len(shifts)
    else:
        parts = list(base)
        if len(parts) != len(shifts):
            raise ValueError("one shift per stacked model required")
    g0 = parts[0].geometry
    if any(p.geometry.L1 != g0.L1 or p.geometry.L2 != g0.L2 for p in parts):
        raise ValueError("stacked models must share the cylinder")
    parts = [p.shifted(e) for p, e in zip(parts, shifts)]
    m_tot = sum(p.geometry.M for p in parts)
    geometry = CylinderGeometry(L1=g0.L1, L2=g0.L2, M=m_tot)
    ham = LatticeHamiltonian(geometry, hop_range=max(p.hop_range for p in parts))
    offset = 0
    for part in parts:
        m = part.geometry.M
        for (z1, x2, y2), blk in part.items():
            big = np.zeros((m_tot, m_tot), dtype=complex)
            big[offset : offset + m, offset : offset + m] = blk
            ham.add_block(z1, x2, y2, big)
        offset += m
    return ham


def builtin_models():
    """Registry of the built-in model constructors."""
    return {
        "haldane": haldane_cylinder,
        "hofstadter": hofstadter_cylinder,
        "stacked": stacked_shifted,
        "chain": chain_cylinder,
    }


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def dump_blocks(ham, path):
    """Write nonzero block entries: z1 x2 y2 rho rho' re im (one per line)."""
    g = ham.geometry
    with open(path, "w") as f:
        f.write(f"# cylinder L1={g.L1} L2={g.L2} M={g.M} range={ham.hop_range}\n")
        for (z1, x2, y2) in sorted(ham._blocks):
            blk = ham._blocks[(z1, x2, y2)]
            for r in range(g.M):
                for c in range(g.M):
                    if blk[r, c] != 0.0:
                        f.write(
                            f"{z1} {x2} {y2} {r} {c} "
                            f"{blk[r, c].real:.17g} {blk[r, c].imag:.17g}\n"
                        )


def load_blocks(path):
    """Inverse of :func:`dump_blocks`."""
    with open(path) as f:
        header = f.readline().strip()
        meta = dict(kv.split("=") for kv in header.lstrip("# cylinder ").split())
        geometry = CylinderGeometry(int(meta["L1"]), int(meta["L2"]), int(meta["M"]))
        ham = LatticeHamiltonian(geometry, hop_range=float(meta["range"]))
        for line in f:
            z1, x2, y2, r, c, re, im = line.split()
            blk = np.zeros((geometry.M, geometry.M), dtype=complex)
            blk[int(r), int(c)] = float(re) + 1j * float(im)
            ham.add_block(int(z1), int(x2), int(y2), blk)
    return ham


def model_from_config(cfg):
    """Build a model from a parsed config mapping with [geometry]/[model]/[params].

    ``cfg`` is any mapping of section name to key-value mapping, e.g. a
    ``configparser.ConfigParser``.
    """
    geo = cfg["geometry"]
    L1, L2 = int(geo["l1"]), int(geo["l2"])
    kind = cfg["model"]["type"].strip().lower()
    params = {k: float(v) for k, v in cfg["params"].items()} if "params" in cfg else {}
    if kind == "haldane":
        g = CylinderGeometry(L1, L2, 2)
        return haldane_cylinder(g, **{k: params[k] for k in ("t1", "t2", "phi", "m_stag") if k in params})
    if kind == "hofstadter":
        g = CylinderGeometry(L1, L2, 1)
        kw = {}
        if "p" in params:
            kw["p"] = int(params["p"])
        if "q" in params:
            kw["q"] = int(params["q"])
        if "t" in params:
            kw["t"] = params["t"]
        return hofstadter_cylinder(g, **kw)
    if kind == "stacked-haldane":
        g = CylinderGeometry(L1, L2, 2)
        base_kw = {k: params[k] for k in ("t1", "t2", "phi", "m_stag") if k in params}
        shifts = [float(s) for s in cfg["model"].get("shifts", "0").split(",")]
        flips = cfg["model"].get("flips", "")
        flips = [s.strip() == "1" for s in flips.split(",")] if flips else [False] * len(shifts)
        bases = []
        for flip in flips:
            kw = dict(base_kw)
            if flip:
                kw["phi"] = -kw.get("phi", np.pi / 2)
            bases.append(haldane_cylinder(g, **kw))
        return stacked_shifted(bases, shifts)
    raise ValueError(f"unknown model type {kind!r}")
