"""
Dense pointwise tensor algebra.

Components are numpy arrays or :class:`~curvgap.jets.Jet` values whose leading
axes are the tensor slots (each of length ``n``) and whose trailing axes, if
any, form a batch of points.  All pipeline tensors are fully covariant; mixed
or contravariant forms are produced on demand through :func:`raise_lower`.

Conventions pinned here (everything downstream relies on them):

* Kulkarni-Nomizu product
  ``(A o B)_ijkl = A_il B_jk + A_jk B_il - A_ik B_jl - A_jl B_ik``,
  so for the identity metric ``(g o g)_1212 = -2``.
* ``A . B = A_ij B^ij``, ``(A x B)_ij = A_ik g^kl B_lj``, ``tr A = g^ij A_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .jets import Jet, jeinsum

__all__ = [
    "TensorError",
    "PointTensor",
    "einsum",
    "raise_lower",
    "contract",
    "kulkarni_nomizu",
    "sym2_ops",
    "tensor_norm_sq",
    "raise_all",
    "norm_sq",
    "dot",
    "times",
    "trace",
    "cube_trace",
    "traceless",
    "symmetry_defect",
    "expand",
]

Slot = Literal["co", "contra"]


class TensorError(ValueError):
    pass


def einsum(subscripts: str, *operands):
    """Backend-neutral einsum over tensor slots; trailing batch axes ride along."""
    if any(isinstance(op, Jet) for op in operands):
        n_jets = sum(isinstance(op, Jet) for op in operands)
        if len(operands) <= 2 or n_jets == 1:
            return jeinsum(subscripts, *operands)
        # fold left to right, keeping only indices still needed
        inputs, output = subscripts.split("->")
        terms = inputs.split(",")
        acc, acc_term = operands[0], terms[0]
        for k in range(1, len(operands)):
            later = "".join(terms[k + 1 :]) + output
            keep = "".join(dict.fromkeys(ch for ch in acc_term + terms[k] if ch in later))
            acc = jeinsum(f"{acc_term},{terms[k]}->{keep}", acc, operands[k])
            acc_term = keep
        if acc_term != output:
            acc = jeinsum(f"{acc_term}->{output}", acc)
        return acc
    inputs, output = subscripts.split("->")
    terms = inputs.split(",")
    arrays = [np.asarray(op, dtype=float) for op in operands]
    batched = any(a.ndim > len(t) for a, t in zip(arrays, terms))
    if batched:
        terms = [t + "..." if a.ndim > len(t) else t for a, t in zip(arrays, terms)]
        output = output + "..."
    return np.einsum(",".join(terms) + "->" + output, *arrays, optimize=len(arrays) > 2)


# ---------------------------------------------------------------------------
# raw component operations (covariant arrays, explicit inverse metric)
# ---------------------------------------------------------------------------

_LETTERS = "abcdefghijklmnopqrstuvwxy"


def raise_all(T, g_inv, rank: int):
    """All ``rank`` leading slots contracted with ``g_inv``."""
    src = _LETTERS[:rank]
    for s in range(rank):
        T = einsum(f"{src[s]}z,{src[:s]}z{src[s + 1:]}->{src}", g_inv, T)
    return T


def norm_sq(T, g_inv, rank: int):
    """Full squared norm of a covariant tensor with ``rank`` slots."""
    s = _LETTERS[:rank]
    return einsum(f"{s},{s}->", raise_all(T, g_inv, rank), T)


def dot(A, B, g_inv):
    """A_ij B^ij."""
    return einsum("ab,ab->", A, raise_all(B, g_inv, 2))


def times(A, B, g_inv):
    """(A x B)_ij = A_ik g^kl B_lj."""
    return einsum("il,lj->ij", einsum("ik,kl->il", A, g_inv), B)


def trace(A, g_inv):
    return einsum("ij,ij->", g_inv, A)


def cube_trace(A, g_inv):
    """tr(A^3) = A_ij A^j_k A^ki."""
    m = einsum("ik,kj->ij", g_inv, A)
    return einsum("ij,ji->", einsum("ij,jk->ik", m, m), m)


def traceless(A, g, g_inv, n: int):
    """A - (tr A / n) g."""
    return A - expand(trace(A, g_inv), 2) * g * (1.0 / n)


def expand(s, rank: int):
    """Give a scalar field room for ``rank`` leading tensor slots."""
    key = (None,) * rank
    return s[key] if isinstance(s, Jet) else np.asarray(s)[key]


def kulkarni_nomizu(A, B):
    """(A o B)_ijkl = A_il B_jk + A_jk B_il - A_ik B_jl - A_jl B_ik."""
    # every term is a slot permutation of Y_ijkl = A_il B_jk
    Y = einsum("il,jk->ijkl", A, B)
    Yk = Y.swapaxes(2, 3)  # A_ik B_jl
    return Y - Yk + (Y - Yk).swapaxes(0, 1).swapaxes(2, 3)


def symmetry_defect(A, pair=(0, 1)) -> float:
    """max |A - A^T| over the slot pair, relative to max |A|."""
    arr = A.value if isinstance(A, Jet) else np.asarray(A)
    diff = np.abs(arr - np.swapaxes(arr, *pair)).max(initial=0.0)
    scale = np.abs(arr).max(initial=0.0)
    return float(diff / scale) if scale > 0 else float(diff)


# ---------------------------------------------------------------------------
# the PointTensor value type
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointTensor:
    """Components plus per-slot valence at a point (or batch of points)."""

    components: object  # ndarray or Jet; leading axes are slots
    valence: tuple[Slot, ...]

    def __post_init__(self):
        shape = self.components.shape
        r = len(self.valence)
        if len(shape) < r:
            raise TensorError(f"{r} slots declared but components have shape {shape}")
        n = shape[0] if r else None
        if r and any(s != n for s in shape[:r]):
            raise TensorError(f"slot lengths differ: {shape[:r]}")
        for v in self.valence:
            if v not in ("co", "contra"):
                raise TensorError(f"bad valence {v!r}")

    @property
    def rank(self) -> int:
        return len(self.valence)

    @property
    def dim(self) -> int:
        return self.components.shape[0]


def raise_lower(T: PointTensor, slot: int, g, g_inv) -> PointTensor:
    """Flip the valence of one slot by contracting with g or g_inv."""
    if not 0 <= slot < T.rank:
        raise TensorError(f"slot {slot} out of range for rank {T.rank}")
    metric = g_inv if T.valence[slot] == "co" else g
    src = _LETTERS[: T.rank]
    moved = src.replace(src[slot], "z")
    comps = einsum(f"{src[slot]}z,{moved}->{src}", metric, T.components)
    val = list(T.valence)
    val[slot] = "contra" if val[slot] == "co" else "co"
    return PointTensor(comps, tuple(val))


def contract(T: PointTensor, slot_a: int, slot_b: int) -> PointTensor:
    """Trace over a covariant/contravariant slot pair."""
    if not (0 <= slot_a < T.rank and 0 <= slot_b < T.rank) or slot_a == slot_b:
        raise TensorError(f"invalid slot pair ({slot_a}, {slot_b})")
    if {T.valence[slot_a], T.valence[slot_b]} != {"co", "contra"}:
        raise TensorError("contraction needs one covariant and one contravariant slot")
    src = list(_LETTERS[: T.rank])
    src[slot_b] = src[slot_a]
    out = "".join(ch for k, ch in enumerate(src) if k not in (slot_a, slot_b))
    comps = einsum(f"{''.join(src)}->{out}", T.components)
    val = tuple(v for k, v in enumerate(T.valence) if k not in (slot_a, slot_b))
    return PointTensor(comps, val)


def sym2_ops(A, B, g, g_inv, tol: float = 1e-12) -> dict:
    """dot, times, trace, cube_trace and traceless part for symmetric 2-tensors."""
    for name, M in (("A", A), ("B", B)):
        if symmetry_defect(M) > tol:
            raise TensorError(f"{name} is not symmetric")
    n = np.shape(A)[0] if not isinstance(A, Jet) else A.shape[0]
    return {
        "dot": dot(A, B, g_inv),
        "times": times(A, B, g_inv),
        "trace": trace(A, g_inv),
        "cube_trace": cube_trace(A, g_inv),
        "traceless": traceless(A, g, g_inv, n),
    }


def tensor_norm_sq(T: PointTensor, g, g_inv):
    """|T|^2 with every slot lowered first; always >= 0 for definite g."""
    for s in range(T.rank):
        if T.valence[s] == "contra":
            T = raise_lower(T, s, g, g_inv)
    return norm_sq(T.components, g_inv, T.rank)
