"""Dense tensor primitives: contraction, matricization, QR, truncated SVD, projectors."""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

# relative singular value threshold applied before truncation and inversion
DEFAULT_CUTOFF = 1e-12

_ind_counter = itertools.count()


def fresh_ind(prefix="_k"):
    """Return a new globally unique index label."""
    return f"{prefix}{next(_ind_counter)}"


class DenseTensor:
    """A dense real tensor with labelled indices.

    Parameters
    ----------
    data : array_like
        Tensor entries, row-major, with one dimension per index.
    inds : sequence of str
        Index labels, one per dimension, unique within the tensor.
    """

    __slots__ = ("data", "inds")

    def __init__(self, data, inds):
        data = np.asarray(data, dtype=np.float64)
        inds = tuple(inds)
        if data.ndim != len(inds):
            raise ValueError(
                f"tensor has {data.ndim} dimensions but {len(inds)} index labels"
            )
        if len(set(inds)) != len(inds):
            raise ValueError(f"duplicate index labels in {inds}")
        self.data = data
        self.inds = inds

    @property
    def dims(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def ind_dim(self, ind):
        return self.data.shape[self.inds.index(ind)]

    def copy(self):
        return DenseTensor(self.data.copy(), self.inds)

    def relabel(self, mapping):
        """Return a view-sharing tensor with indices renamed via ``mapping``."""
        return DenseTensor(self.data, tuple(mapping.get(ix, ix) for ix in self.inds))

    def transpose_to(self, inds):
        """Return a copy with dimensions permuted into the order ``inds``."""
        inds = tuple(inds)
        if inds == self.inds:
            return DenseTensor(self.data, self.inds)
        perm = tuple(self.inds.index(ix) for ix in inds)
        return DenseTensor(np.transpose(self.data, perm), inds)

    def norm(self):
        return float(np.linalg.norm(self.data.reshape(-1)))

    def __repr__(self):
        return f"DenseTensor(dims={self.dims}, inds={self.inds})"


@dataclass(frozen=True)
class Matricization:
    """A bipartition of a tensor's indices into row and column groups."""

    left_inds: tuple
    right_inds: tuple

    def __post_init__(self):
        object.__setattr__(self, "left_inds", tuple(self.left_inds))
        object.__setattr__(self, "right_inds", tuple(self.right_inds))

    def validate(self, t):
        if set(self.left_inds) | set(self.right_inds) != set(t.inds) or set(
            self.left_inds
        ) & set(self.right_inds):
            raise ValueError(
                f"matricization {self.left_inds} | {self.right_inds} does not "
                f"partition tensor indices {t.inds}"
            )

    def dims(self, t):
        left = 1
        for ix in self.left_inds:
            left *= t.ind_dim(ix)
        right = 1
        for ix in self.right_inds:
            right *= t.ind_dim(ix)
        return left, right


@dataclass
class ProjectorPair:
    """Rank-reducing pair realizing a bond truncation as ``A @ p_left @ p_right @ B``.

    ``p_left`` carries the old bond indices then the new bond; ``p_right``
    carries the new bond then the old bond indices.
    """

    p_left: DenseTensor
    p_right: DenseTensor
    kept_singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def new_ind(self):
        return self.p_left.inds[-1]

    @property
    def new_dim(self):
        return self.p_left.dims[-1]


def contract_pair(a, b):
    """Contract two tensors over all shared indices.

    Output indices are ``a``'s surviving indices followed by ``b``'s.
    Shared indices must have matching dimensions. With no shared indices
    this is the outer product.
    """
    shared = [ix for ix in a.inds if ix in set(b.inds)]
    for ix in shared:
        da, db = a.ind_dim(ix), b.ind_dim(ix)
        if da != db:
            raise ValueError(f"dimension mismatch on shared index {ix}: {da} != {db}")
    axes_a = [a.inds.index(ix) for ix in shared]
    axes_b = [b.inds.index(ix) for ix in shared]
    data = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    out_inds = tuple(ix for ix in a.inds if ix not in set(shared)) + tuple(
        ix for ix in b.inds if ix not in set(shared)
    )
    return DenseTensor(data, out_inds)


def matricize(t, m):
    """Reshape ``t`` into the 2D array given by matricization ``m``."""
    m.validate(t)
    tt = t.transpose_to(m.left_inds + m.right_inds)
    dl, dr = m.dims(t)
    return tt.data.reshape(dl, dr)


def _stable_svd(mat):
    # gesdd occasionally fails to converge; fall back to the slower gesvd
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def qr_reduced(t, m, new_ind=None):
    """Reduced QR of the matricized tensor, ``t = q @ r``.

    ``q`` has orthonormal columns and indices ``left_inds + (new,)``;
    ``r`` has indices ``(new,) + right_inds`` and shape
    ``min(left_dim, right_dim) x right_dim`` on the matricized view.
    """
    mat = matricize(t, m)
    q, r = np.linalg.qr(mat, mode="reduced")
    k = q.shape[1]
    if new_ind is None:
        new_ind = fresh_ind()
    left_dims = tuple(t.ind_dim(ix) for ix in m.left_inds)
    right_dims = tuple(t.ind_dim(ix) for ix in m.right_inds)
    qt = DenseTensor(q.reshape(left_dims + (k,)), m.left_inds + (new_ind,))
    rt = DenseTensor(r.reshape((k,) + right_dims), (new_ind,) + m.right_inds)
    return qt, rt


def rq_reduced(t, m, new_ind=None):
    """Reduced RQ of the matricized tensor, ``t = r @ q`` with ``q q^T = 1``."""
    mat = matricize(t, m)
    q1, r1 = np.linalg.qr(mat.T, mode="reduced")
    k = q1.shape[1]
    if new_ind is None:
        new_ind = fresh_ind()
    left_dims = tuple(t.ind_dim(ix) for ix in m.left_inds)
    right_dims = tuple(t.ind_dim(ix) for ix in m.right_inds)
    rt = DenseTensor(r1.T.reshape(left_dims + (k,)), m.left_inds + (new_ind,))
    qt = DenseTensor(q1.T.reshape((k,) + right_dims), (new_ind,) + m.right_inds)
    return rt, qt


def _kept_count(s, chi, cutoff):
    if s.size == 0 or s[0] <= 0.0:
        return 0
    keep = int(np.count_nonzero(s > cutoff * s[0]))
    keep = min(keep, int(chi))
    return max(keep, 1)


def svd_truncated(t, m, chi, cutoff=DEFAULT_CUTOFF, new_ind=None):
    """Truncated SVD of the matricized tensor.

    Keeps ``min(chi, #values > cutoff * s_max)`` singular values, but never
    fewer than one. Returns ``(u, s, v)`` with ``u`` carrying the left
    indices plus the new bond and ``v`` the new bond plus the right indices.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    mat = matricize(t, m)
    u, s, vh = _stable_svd(mat)
    k = _kept_count(s, chi, cutoff)
    if k == 0:
        k = 1
    if new_ind is None:
        new_ind = fresh_ind()
    left_dims = tuple(t.ind_dim(ix) for ix in m.left_inds)
    right_dims = tuple(t.ind_dim(ix) for ix in m.right_inds)
    ut = DenseTensor(u[:, :k].reshape(left_dims + (k,)), m.left_inds + (new_ind,))
    vt = DenseTensor(vh[:k].reshape((k,) + right_dims), (new_ind,) + m.right_inds)
    return ut, s[:k].copy(), vt


def compute_projectors(r_a, r_b, chi, cutoff=DEFAULT_CUTOFF, new_ind=None):
    """Build the bond-truncation projector pair from two reduced factors.

    ``r_a`` and ``r_b`` must share the bond indices being compressed. The
    combined factor ``r_a @ r_b`` (contracted over the shared bond) is SVD'd
    and truncated to ``chi``; singular values at or below ``cutoff * s_max``
    are dropped before the inverse square root is taken.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    shared = tuple(ix for ix in r_a.inds if ix in set(r_b.inds))
    if not shared:
        raise ValueError("reduced factors share no bond to compress")
    rest_a = tuple(ix for ix in r_a.inds if ix not in set(shared))
    rest_b = tuple(ix for ix in r_b.inds if ix not in set(shared))
    ra = matricize(r_a, Matricization(rest_a, shared))
    rb = matricize(r_b, Matricization(shared, rest_b))
    r_ab = ra @ rb
    u, s, vh = _stable_svd(r_ab)
    if s.size == 0 or s[0] <= 0.0:
        raise ValueError("cannot compress a null bond (all singular values zero)")
    k = _kept_count(s, chi, cutoff)
    kept = s[:k].copy()
    isq = 1.0 / np.sqrt(kept)
    if new_ind is None:
        new_ind = fresh_ind("_c")
    shared_dims = tuple(r_a.ind_dim(ix) for ix in shared)
    # p_left = r_b v s^{-1/2}: (shared x k); p_right = s^{-1/2} u^T r_a: (k x shared)
    plm = rb @ (vh[:k].T * isq)
    prm = (u[:, :k].T * isq[:, None]) @ ra
    p_left = DenseTensor(plm.reshape(shared_dims + (k,)), shared + (new_ind,))
    p_right = DenseTensor(prm.reshape((k,) + shared_dims), (new_ind,) + shared)
    return ProjectorPair(p_left, p_right, kept)
