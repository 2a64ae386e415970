"""Learnable lookup-table core: 1D curves, 3D grids, fusion, penalties, gradients.

Axis convention for ``Lut3D.grid`` (shape D x D x D x 3): the *last* lattice
index moves along the R input axis, the middle along G, the first along B,
i.e. ``grid[ib, jg, kr]`` holds the output RGB for the input lattice point
``(kr, jg, ib) / (D - 1)``.  Iterating the grid in C order therefore yields
R-fastest rows, which is exactly the .cube text layout.  The identity grid
satisfies ``grid[i, j, k] = (k, j, i) / (D - 1)`` and a lattice-exactness
test pins the convention.

Every forward operation has an exact analytic backward used by the trainer;
all of them are checked against central finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidSize


@dataclass
class Lut1D:
    """Piecewise-linear curve over [0, 1] sampled at ``len(entries)`` bins."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.atleast_1d(np.asarray(self.entries))
        if self.entries.ndim != 1 or self.entries.shape[0] < 2:
            raise InvalidSize("a Lut1D needs at least 2 entries")
        if not np.isfinite(self.entries).all():
            raise InvalidSize("Lut1D entries must be finite")

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass
class Lut1DTriple:
    """One Lut1D per CIELAB axis, equal bin counts."""

    l: Lut1D
    a: Lut1D
    b: Lut1D

    def __post_init__(self):
        if not (self.l.size == self.a.size == self.b.size):
            raise DimensionMismatch("the three 1D LUTs must share a bin count")

    @property
    def size(self) -> int:
        return self.l.size

    def as_array(self) -> np.ndarray:
        """Stack as (3, S): rows are the L, a, b curves."""
        return np.stack([self.l.entries, self.a.entries, self.b.entries])

    @staticmethod
    def from_array(arr: np.ndarray) -> "Lut1DTriple":
        arr = np.asarray(arr)
        if arr.ndim != 2 or arr.shape[0] != 3:
            raise DimensionMismatch(f"expected (3, S) array, got {arr.shape}")
        return Lut1DTriple(Lut1D(arr[0]), Lut1D(arr[1]), Lut1D(arr[2]))


@dataclass
class Lut3D:
    """D x D x D x 3 grid of output RGB values (see module docstring for axes)."""

    grid: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        s = self.grid.shape
        if self.grid.ndim != 4 or s[3] != 3 or not (s[0] == s[1] == s[2]) or s[0] < 2:
            raise InvalidSize(f"expected (D, D, D, 3) grid with D >= 2, got {s}")
        if not np.isfinite(self.grid).all():
            raise InvalidSize("Lut3D grid must be finite")

    @property
    def dim(self) -> int:
        return self.grid.shape[0]


@dataclass
class BasisLutBank:
    """K learnable 3D grids fused by image-dependent weights.

    Index 0 is initialized to the identity grid and the rest to zero, so a
    weight vector (1, 0, ..., 0) reproduces the identity transform exactly.
    """

    grids: np.ndarray  # (K, D, D, D, 3)

    def __post_init__(self):
        self.grids = np.asarray(self.grids)
        if self.grids.ndim != 5 or self.grids.shape[4] != 3:
            raise InvalidSize(f"expected (K, D, D, D, 3) bank, got {self.grids.shape}")

    @property
    def count(self) -> int:
        return self.grids.shape[0]

    @property
    def dim(self) -> int:
        return self.grids.shape[1]

    @staticmethod
    def initial(count: int = 3, dim: int = 33, dtype=np.float64) -> "BasisLutBank":
        if count < 1:
            raise InvalidSize("bank needs at least one basis grid")
        grids = np.zeros((count, dim, dim, dim, 3), dtype=dtype)
        grids[0] = identity_3d(dim, dtype=dtype).grid
        return BasisLutBank(grids)


# --------------------------------------------------------------------------
# Constructors
# --------------------------------------------------------------------------

def identity_1d(size: int = 33, dtype=np.float64) -> Lut1D:
    if size < 2:
        raise InvalidSize(f"1D LUT size must be >= 2, got {size}")
    return Lut1D(np.linspace(0.0, 1.0, size, dtype=dtype))


def identity_3d(dim: int = 33, dtype=np.float64) -> Lut3D:
    if dim < 2:
        raise InvalidSize(f"3D LUT dim must be >= 2, got {dim}")
    axis = np.linspace(0.0, 1.0, dim, dtype=dtype)
    grid = np.empty((dim, dim, dim, 3), dtype=dtype)
    grid[..., 0] = axis[None, None, :]  # R along the last lattice index
    grid[..., 1] = axis[None, :, None]  # G along the middle
    grid[..., 2] = axis[:, None, None]  # B along the first
    return Lut3D(grid)


# --------------------------------------------------------------------------
# Application
# --------------------------------------------------------------------------

def _promote(arr: np.ndarray, entries_dtype) -> np.ndarray:
    dt = np.result_type(arr.dtype, entries_dtype)
    if dt.kind != "f":
        dt = np.dtype(np.float64)
    return arr.astype(dt, copy=False)


def _bracket(x: np.ndarray, size: int):
    """Clamp x to [0,1] and return (lower index, fractional offset).

    Positions within a few ulps of a lattice index snap onto it, so exact
    lattice coordinates i/(size-1) interpolate to the stored entry
    bit-for-bit even when x*(size-1) rounds away from the integer.
    """
    x = np.clip(x, 0.0, 1.0)
    pos = x * (size - 1)
    nearest = np.rint(pos)
    eps = np.finfo(pos.dtype).eps
    pos = np.where(np.abs(pos - nearest) <= 4.0 * eps * np.maximum(1.0, np.abs(pos)), nearest, pos)
    idx = np.minimum(pos.astype(np.int64), size - 2)
    frac = pos - idx.astype(pos.dtype)  # keep the working dtype (int64 would promote)
    return idx, frac


def apply_1d(lut: Lut1D, x):
    """Linear interpolation of ``x`` (scalar or array, clamped to [0,1])."""
    arr = _promote(np.asarray(x), lut.entries.dtype)
    idx, frac = _bracket(arr, lut.size)
    e = lut.entries.astype(arr.dtype, copy=False)
    out = e[idx] * (1.0 - frac) + e[idx + 1] * frac
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def apply_1d_backward(lut: Lut1D, x, grad_out):
    """Gradients of apply_1d: returns (grad_entries, grad_x)."""
    arr = _promote(np.asarray(x), lut.entries.dtype)
    g = np.asarray(grad_out, dtype=arr.dtype)
    idx, frac = _bracket(arr, lut.size)
    flat_idx = idx.ravel()
    flat_frac = frac.ravel()
    flat_g = g.ravel()
    grad_entries = (
        np.bincount(flat_idx, weights=flat_g * (1.0 - flat_frac), minlength=lut.size)
        + np.bincount(flat_idx + 1, weights=flat_g * flat_frac, minlength=lut.size)
    ).astype(arr.dtype)
    e = lut.entries.astype(arr.dtype, copy=False)
    grad_x = g * (e[idx + 1] - e[idx]) * (lut.size - 1)
    # clamped inputs sit on a flat extension: zero slope outside [0, 1]
    inside = (arr >= 0.0) & (arr <= 1.0)
    grad_x = np.where(inside, grad_x, 0.0)
    return grad_entries, grad_x


def _corner_weights(idx, frac):
    """8 trilinear corner offsets and weights for fractional lattice coords."""
    fb, fg, fr = frac
    w = []
    for db in (0, 1):
        wb = fb if db else (1.0 - fb)
        for dg in (0, 1):
            wg = fg if dg else (1.0 - fg)
            for dr in (0, 1):
                wr = fr if dr else (1.0 - fr)
                w.append(((db, dg, dr), wb * wg * wr))
    return w


def apply_3d(lut: Lut3D, c, clamp: bool = True):
    """Trilinear interpolation of RGB triples ``c`` (shape (..., 3)).

    Components are clamped to [0,1] before lookup; the interpolated output
    is clamped to [0,1] unless ``clamp=False``.
    """
    arr = _promote(np.asarray(c), lut.grid.dtype)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[-1] != 3:
        raise DimensionMismatch(f"expected (..., 3) input, got {arr.shape}")
    d = lut.dim
    grid = lut.grid.astype(arr.dtype, copy=False)
    ib, fb = _bracket(arr[..., 2], d)  # B selects the first lattice axis
    ig, fg = _bracket(arr[..., 1], d)
    ir, fr = _bracket(arr[..., 0], d)
    out = np.zeros(arr.shape, dtype=arr.dtype)
    for (db, dg, dr), w in _corner_weights((ib, ig, ir), (fb, fg, fr)):
        out += w[..., None] * grid[ib + db, ig + dg, ir + dr]
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


def apply_3d_backward(lut: Lut3D, c, grad_out, clamp: bool = True):
    """Gradients of apply_3d: returns (grad_grid, grad_c).

    ``grad_grid`` is a dense array of the grid's shape but only the corners
    active for some input receive mass (8 per input point).
    """
    arr = _promote(np.asarray(c), lut.grid.dtype)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    g = np.asarray(grad_out, dtype=arr.dtype).reshape(arr.shape)
    d = lut.dim
    grid = lut.grid.astype(arr.dtype, copy=False)
    ib, fb = _bracket(arr[..., 2], d)
    ig, fg = _bracket(arr[..., 1], d)
    ir, fr = _bracket(arr[..., 0], d)

    if clamp:
        # recompute the pre-clamp output to mask the clamp's zero-gradient region
        pre = np.zeros(arr.shape, dtype=arr.dtype)
        for (db, dg, dr), w in _corner_weights((ib, ig, ir), (fb, fg, fr)):
            pre += w[..., None] * grid[ib + db, ig + dg, ir + dr]
        g = np.where((pre >= 0.0) & (pre <= 1.0), g, 0.0)

    n = d * d * d
    flat_base = (ib * d + ig) * d + ir
    grad_grid_flat = np.zeros((n, 3), dtype=arr.dtype)
    grad_c = np.zeros(arr.shape, dtype=arr.dtype)

    one = np.ones_like(fb)
    for (db, dg, dr), w in _corner_weights((ib, ig, ir), (fb, fg, fr)):
        idx = (flat_base + (db * d + dg) * d + dr).ravel()
        gw = g * w[..., None]
        for ch in range(3):
            grad_grid_flat[:, ch] += np.bincount(idx, weights=gw[..., ch].ravel(), minlength=n)
        corner = grid[ib + db, ig + dg, ir + dr]
        dot = np.sum(g * corner, axis=-1)
        wb = fb if db else (1.0 - fb)
        wg = fg if dg else (1.0 - fg)
        wr = fr if dr else (1.0 - fr)
        sb = one if db else -one
        sg = one if dg else -one
        sr = one if dr else -one
        grad_c[..., 2] += dot * sb * wg * wr * (d - 1)
        grad_c[..., 1] += dot * wb * sg * wr * (d - 1)
        grad_c[..., 0] += dot * wb * wg * sr * (d - 1)

    inside = (arr >= 0.0) & (arr <= 1.0)
    grad_c = np.where(inside, grad_c, 0.0)
    grad_grid = grad_grid_flat.reshape(lut.grid.shape)
    if single:
        grad_c = grad_c[0]
    return grad_grid, grad_c


# --------------------------------------------------------------------------
# Fusion
# --------------------------------------------------------------------------

def fuse(bank: BasisLutBank, w) -> Lut3D:
    """Entry-wise weighted sum of the basis grids."""
    w = np.asarray(w, dtype=bank.grids.dtype)
    if w.shape != (bank.count,):
        raise DimensionMismatch(f"expected {bank.count} weights, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise DimensionMismatch("fusion weights must be finite")
    return Lut3D(np.tensordot(w, bank.grids, axes=(0, 0)))


def fuse_backward(bank: BasisLutBank, w, grad_grid):
    """Gradients of fuse: returns (grad_bank_grids, grad_w)."""
    w = np.asarray(w, dtype=bank.grids.dtype)
    grad_grid = np.asarray(grad_grid, dtype=bank.grids.dtype)
    grad_bank = w[:, None, None, None, None] * grad_grid[None]
    grad_w = np.tensordot(bank.grids, grad_grid, axes=([1, 2, 3, 4], [0, 1, 2, 3]))
    return grad_bank, grad_w


# --------------------------------------------------------------------------
# Regularization penalties
# --------------------------------------------------------------------------

def _smooth_1d_entries(e: np.ndarray) -> float:
    d = np.diff(e)
    return float(np.sum(d * d))


def _smooth_3d_grid(grid: np.ndarray) -> float:
    total = 0.0
    for axis in range(3):
        d = np.diff(grid, axis=axis)
        total += float(np.sum(d * d))
    return total


def _mono_1d_entries(e: np.ndarray) -> float:
    return float(np.sum(np.maximum(0.0, e[:-1] - e[1:])))


def _mono_3d_grid(grid: np.ndarray) -> float:
    # output channel c is penalized along its own input axis: R along the
    # last lattice index, G along the middle, B along the first
    total = 0.0
    for ch, axis in ((0, 2), (1, 1), (2, 0)):
        d = -np.diff(grid[..., ch], axis=axis)
        total += float(np.sum(np.maximum(0.0, d)))
    return total


def smoothness_penalty(obj, weights=None) -> float:
    """Sum of squared adjacent-entry differences; plus ||w||^2 for a fused grid."""
    total = 0.0
    if isinstance(obj, Lut1D):
        total = _smooth_1d_entries(obj.entries)
    elif isinstance(obj, Lut1DTriple):
        total = sum(_smooth_1d_entries(l.entries) for l in (obj.l, obj.a, obj.b))
    elif isinstance(obj, Lut3D):
        total = _smooth_3d_grid(obj.grid)
    elif isinstance(obj, BasisLutBank):
        total = sum(_smooth_3d_grid(g) for g in obj.grids)
    else:
        raise TypeError(f"no smoothness penalty for {type(obj).__name__}")
    if weights is not None:
        w = np.asarray(weights)
        total += float(np.sum(w * w))
    return total


def monotonicity_penalty(obj) -> float:
    """Hinge on decreasing adjacent entries along the penalized directions."""
    if isinstance(obj, Lut1D):
        return _mono_1d_entries(obj.entries)
    if isinstance(obj, Lut1DTriple):
        return sum(_mono_1d_entries(l.entries) for l in (obj.l, obj.a, obj.b))
    if isinstance(obj, Lut3D):
        return _mono_3d_grid(obj.grid)
    if isinstance(obj, BasisLutBank):
        return sum(_mono_3d_grid(g) for g in obj.grids)
    raise TypeError(f"no monotonicity penalty for {type(obj).__name__}")


def smoothness_backward_1d(entries: np.ndarray) -> np.ndarray:
    d = np.diff(entries)
    grad = np.zeros_like(entries)
    grad[:-1] -= 2.0 * d
    grad[1:] += 2.0 * d
    return grad


def smoothness_backward_3d(grid: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(grid)
    for axis in range(3):
        d = np.diff(grid, axis=axis)
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        grad[tuple(lo)] -= 2.0 * d
        grad[tuple(hi)] += 2.0 * d
    return grad


def monotonicity_backward_1d(entries: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(entries)
    viol = entries[:-1] > entries[1:]
    grad[:-1][viol] += 1.0
    grad[1:][viol] -= 1.0
    return grad


def monotonicity_backward_3d(grid: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(grid)
    for ch, axis in ((0, 2), (1, 1), (2, 0)):
        g_ch = grid[..., ch]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        viol = g_ch[tuple(lo)] > g_ch[tuple(hi)]
        gg = grad[..., ch]
        lo_view = gg[tuple(lo)]
        hi_view = gg[tuple(hi)]
        lo_view[viol] += 1.0
        hi_view[viol] -= 1.0
    return grad


# --------------------------------------------------------------------------
# .cube interchange (3D only)
# --------------------------------------------------------------------------

def write_cube(lut: Lut3D, path, title: str | None = None) -> None:
    """Write the grid as a plain-text cube table, R-fastest rows."""
    lines = []
    if title:
        lines.append(f'TITLE "{title}"')
    lines.append(f"LUT_3D_SIZE {lut.dim}")
    lines.append("DOMAIN_MIN 0.0 0.0 0.0")
    lines.append("DOMAIN_MAX 1.0 1.0 1.0")
    rows = lut.grid.reshape(-1, 3)  # C order over (b, g, r) = R fastest
    for r, g, b in rows:
        lines.append(f"{r:.8f} {g:.8f} {b:.8f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cube(path) -> Lut3D:
    dim = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("TITLE"):
                continue
            if line.startswith("LUT_3D_SIZE"):
                dim = int(line.split()[1])
                continue
            if line.startswith(("DOMAIN_MIN", "DOMAIN_MAX", "LUT_1D_SIZE")):
                continue
            parts = line.split()
            if len(parts) == 3:
                rows.append([float(v) for v in parts])
    if dim is None:
        raise InvalidSize("missing LUT_3D_SIZE header")
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[0] != dim**3:
        raise InvalidSize(f"expected {dim ** 3} rows for dim {dim}, found {data.shape[0]}")
    return Lut3D(data.reshape(dim, dim, dim, 3))
