"""Core recursion engine for WT functions on rooted metric trees.

The forward WT function R = psi'/psi of the square-integrable solution on
the subtree beyond a point is propagated in two equivalent pictures:

* the half-plane picture, where an edge acts by a Moebius map and a
  vertex merge is plain addition of the child values, and
* the unit-disk picture m = (R - i*sqrt(z)) / (R + i*sqrt(z)), where an
  edge of length l multiplies m by exp(2i*sqrt(z)*l) and therefore
  contracts the disk whenever Im sqrt(z) > 0.

All solvers run in the disk picture, which never overflows; the
half-plane edge step is retained as an independent cross-check route.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryPointError,
    BudgetExceededError,
    MoebiusPoleError,
    NumericalDegeneracyError,
    SingularMergeError,
    SingularTransformError,
    ValidationError,
)
from .graphmodel import (
    DOMAIN_EDGE,
    DisorderModel,
    EdgeAddress,
    ROOT_EDGE,
    TreeSpec,
    hash_words,
    omega_for_generation,
    omega_from_uniform,
    uniform01,
)

__all__ = [
    "HalfPlanePoint",
    "as_point",
    "sqrt_upper",
    "m_from_r",
    "r_from_m",
    "edge_step_m",
    "vertex_merge_m",
    "edge_step_R",
    "cos_sin",
    "symmetric_tilde",
    "symmetric_tilde_inverse",
    "solve_root_R",
    "solve_edge_R",
    "solve_root_R_batch",
    "solve_R_minus",
    "boundary_extrapolate",
    "WT_INFINITY",
    "VISIT_BUDGET",
    "DEFAULT_ETA_LADDER",
]

#: WT values live in the closed upper half plane (units 1/length).
WtValue = complex
#: Disk transforms satisfy |m| <= 1.
DiskValue = complex

#: Distinguished value signalling an infinite WT function (a Dirichlet-type pole).
WT_INFINITY = complex(math.inf, 0.0)

#: Default cap on the number of edges a single tree solve may visit.
VISIT_BUDGET = 2**24

#: Default eta ladder for boundary-value extrapolation.
DEFAULT_ETA_LADDER = (1e-1, 1e-2, 1e-3, 1e-4)

_OVERFLOW_IM = 340.0


@dataclass(frozen=True)
class HalfPlanePoint:
    """Spectral parameter z = E + i*eta with eta >= 0.

    ``eta == 0`` flags boundary mode: the point stands for the limit
    E + i0, which direct recursion must not evaluate; boundary values are
    produced by extrapolation in eta instead.
    """

    E: float
    eta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.E) and math.isfinite(self.eta)):
            raise ValidationError("spectral point must be finite")
        if self.eta < 0.0:
            raise ValidationError(f"eta must be >= 0, got {self.eta}")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)

    @property
    def boundary_mode(self) -> bool:
        return self.eta == 0.0


def as_point(z) -> HalfPlanePoint:
    """Coerce a complex number or HalfPlanePoint into a HalfPlanePoint."""
    if isinstance(z, HalfPlanePoint):
        return z
    zc = complex(z)
    return HalfPlanePoint(zc.real, zc.imag)


def sqrt_upper(z) -> complex:
    """Square root of z with Im sqrt(z) > 0.

    In boundary mode (eta = 0) only E > 0 is supported and the root is
    the positive real sqrt(E).

    Raises
    ------
    BoundaryPointError
        If eta = 0 and E <= 0.
    """
    p = as_point(z)
    if p.boundary_mode:
        if p.E <= 0.0:
            raise BoundaryPointError(
                f"boundary-mode sqrt requires E > 0, got E = {p.E}"
            )
        return complex(math.sqrt(p.E), 0.0)
    return cmath.sqrt(p.z)


def m_from_r(R: complex, z) -> complex:
    """Unit-disk transform m = (R - i*w) / (R + i*w), w = sqrt_upper(z)."""
    w = sqrt_upper(z)
    den = R + 1j * w
    if den == 0:
        raise SingularTransformError("m transform evaluated at its pole R = -i*sqrt(z)")
    return (R - 1j * w) / den


def r_from_m(m: complex, z) -> complex:
    """Inverse disk transform R = i*w*(1 + m) / (1 - m), w = sqrt_upper(z)."""
    w = sqrt_upper(z)
    den = 1.0 - m
    if den == 0:
        raise SingularTransformError("inverse disk transform evaluated at m = 1")
    return 1j * w * (1.0 + m) / den


def edge_step_m(m_far: complex, L_e: float, z) -> complex:
    """Pull a disk value from the far end of an edge to its near end.

    The map is linear, m_near = exp(2i*sqrt(z)*L_e) * m_far, and contracts
    the modulus by exactly exp(-2*L_e*Im sqrt(z)).
    """
    w = sqrt_upper(z)
    return cmath.exp(2j * w * L_e) * m_far


def vertex_merge_m(children, z) -> complex:
    """Merge the K child disk values across a Kirchhoff vertex.

    Equivalent to transforming every child to the half plane, adding the
    WT values, and transforming back.

    Raises
    ------
    SingularMergeError
        If any child sits at the singular point m = 1 (R at infinity).
    """
    zeta = 0.0 + 0.0j
    for m in children:
        den = 1.0 - m
        if den == 0:
            raise SingularMergeError("vertex merge received a child at m = 1")
        zeta += (1.0 + m) / den
    den = zeta + 1.0
    if den == 0:
        raise SingularMergeError("vertex merge hit the singular total zeta = -1")
    return (zeta - 1.0) / den


def cos_sin(w: complex, l: float) -> tuple[complex, complex]:
    """cos(w*l) and sin(w*l) with an explicit overflow guard."""
    x = w * l
    if abs(x.imag) > _OVERFLOW_IM:
        raise NumericalDegeneracyError(
            f"trigonometric edge factors overflow at Im(w*l) = {x.imag:.3g}"
        )
    return cmath.cos(x), cmath.sin(x)


def edge_step_R(R0: complex, l: float, z) -> complex:
    """Forward Moebius evolution of R along an edge of length l.

    R(l) = (R0*cos(w*l) - w*sin(w*l)) / (cos(w*l) + R0*sin(w*l)/w).
    Retained as a cross-check of the disk route; valid while
    Im(sqrt(z))*l stays moderate.

    Raises
    ------
    MoebiusPoleError
        If the denominator vanishes (excluded for eta > 0; signals a
        numerically degenerate evaluation).
    """
    w = sqrt_upper(z)
    c, s = cos_sin(w, l)
    den = c + R0 * s / w
    if den == 0:
        raise MoebiusPoleError("edge propagation denominator vanished")
    out = (R0 * c - w * s) / den
    if not (math.isfinite(out.real) and math.isfinite(out.imag)):
        raise MoebiusPoleError("edge propagation produced a non-finite value")
    return out


def symmetric_tilde(R: complex, beta_v: float) -> complex:
    """Rotated WT value -1 / (cot(beta_v) + R) for symmetric vertex conditions.

    ``beta_v = 0`` is the Kirchhoff case and returns R unchanged.
    """
    if beta_v == 0.0:
        return R
    if not 0.0 < beta_v < math.pi:
        raise ValidationError(f"beta_v must lie in [0, pi), got {beta_v}")
    ct = math.cos(beta_v) / math.sin(beta_v)
    den = ct + R
    if den == 0:
        raise SingularTransformError("tilde rotation evaluated at its pole R = -cot(beta)")
    return -1.0 / den


def symmetric_tilde_inverse(R_tilde: complex, beta_v: float) -> complex:
    """Inverse of :func:`symmetric_tilde`."""
    if beta_v == 0.0:
        return R_tilde
    if not 0.0 < beta_v < math.pi:
        raise ValidationError(f"beta_v must lie in [0, pi), got {beta_v}")
    if R_tilde == 0:
        raise SingularTransformError("inverse tilde rotation evaluated at R_tilde = 0")
    ct = math.cos(beta_v) / math.sin(beta_v)
    return -1.0 / R_tilde - ct


def _subtree_edge_count(K: int, depth_local: int) -> int:
    if K == 1:
        return depth_local + 1
    return (K ** (depth_local + 1) - 1) // (K - 1)


def _check_seed_m(seed_m: complex) -> complex:
    seed_m = complex(seed_m)
    if abs(seed_m) > 1.0 + 1e-12:
        raise ValidationError(f"truncation seed must satisfy |m| <= 1, got |m| = {abs(seed_m)}")
    if seed_m == 1:
        raise ValidationError("truncation seed m = 1 is the singular point of the merge")
    return seed_m


def solve_edge_R(
    spec: TreeSpec,
    dm: DisorderModel,
    z,
    addr: EdgeAddress = ROOT_EDGE,
    seed_m: complex = 0j,
    replica: int = 0,
    visit_budget: int = VISIT_BUDGET,
) -> complex:
    """WT value at the near end of the edge ``addr`` of a truncated tree.

    Depth-first backward recursion in the disk picture: every edge of
    generation ``spec.depth`` is seeded with ``seed_m`` at its far end,
    deeper ends merge their children, and each edge applies the disk
    step with its own random length.  Memory grows linearly in depth.

    Parameters
    ----------
    spec, dm : TreeSpec, DisorderModel
    z : HalfPlanePoint or complex
        Spectral parameter with eta > 0.
    addr : EdgeAddress
        Edge whose near end is evaluated; the recursion covers the
        subtree hanging from it (truncated at the global depth).
    seed_m : complex
        Far-end disk seed at the cut generation, |m| <= 1, m != 1.
    replica : int
        Disorder replica index.
    visit_budget : int
        Hard cap on visited edges.

    Returns
    -------
    complex
        R at the near end; Im R > 0.
    """
    p = as_point(z)
    if p.boundary_mode:
        raise ValidationError("direct recursion requires eta > 0; boundary values need extrapolation")
    if not spec.vertex_bc.is_kirchhoff:
        raise ValidationError(
            "the recursion merges Kirchhoff vertices; apply symmetric_tilde to "
            "reduce symmetric conditions first"
        )
    if addr.generation > spec.depth:
        raise ValidationError(
            f"edge at generation {addr.generation} exceeds tree depth {spec.depth}"
        )
    for d in addr.path:
        if not 0 <= d < spec.K:
            raise ValidationError(f"child index {d} out of range for K={spec.K}")
    seed_m = _check_seed_m(seed_m)
    n_edges = _subtree_edge_count(spec.K, spec.depth - addr.generation)
    if n_edges > visit_budget:
        raise BudgetExceededError(
            f"subtree solve would visit {n_edges} edges, budget is {visit_budget}"
        )

    w = sqrt_upper(p)
    phase = 2j * w
    K, N, L, lam, dist, seed = spec.K, spec.depth, spec.L, dm.lam, dm.dist, dm.master_seed
    path = list(addr.path)
    frames = [[0, 0j]]  # [next_child, zeta accumulator]
    m_root = None
    while frames:
        fr = frames[-1]
        g = len(path)
        if g == N or fr[0] == K:
            if g == N:
                m_far = seed_m
            else:
                den = fr[1] + 1.0
                if den == 0:
                    raise SingularMergeError("vertex merge hit the singular total zeta = -1")
                m_far = (fr[1] - 1.0) / den
            u = uniform01(hash_words(seed, DOMAIN_EDGE, replica, g, *path))
            le = L * math.exp(lam * omega_from_uniform(dist, u))
            m_near = cmath.exp(phase * le) * m_far
            frames.pop()
            if not frames:
                m_root = m_near
                break
            path.pop()
            den = 1.0 - m_near
            if den == 0:
                raise SingularMergeError("vertex merge received a child at m = 1")
            frames[-1][1] += (1.0 + m_near) / den
        else:
            d = fr[0]
            fr[0] = d + 1
            path.append(d)
            frames.append([0, 0j])

    R = r_from_m(m_root, p)
    if not (R.imag > 0.0 and math.isfinite(R.real) and math.isfinite(R.imag)):
        raise NumericalDegeneracyError(f"root WT value left the upper half plane: {R}")
    return R


def solve_root_R(
    spec: TreeSpec,
    dm: DisorderModel,
    z,
    seed_m: complex = 0j,
    replica: int = 0,
    visit_budget: int = VISIT_BUDGET,
) -> complex:
    """WT value at the near end of the root edge; see :func:`solve_edge_R`."""
    return solve_edge_R(spec, dm, z, ROOT_EDGE, seed_m, replica, visit_budget)


@dataclass
class BatchCapture:
    """Per-generation arrays captured during a batch solve.

    ``m_near[g]`` and ``lengths[g]`` have shape ``(S, K**g)`` and hold the
    near-end disk values and edge lengths of generation ``g``.
    """

    m_near: list
    lengths: list


def solve_root_R_batch(
    spec: TreeSpec,
    dm: DisorderModel,
    z,
    seed_m=0j,
    replicas=None,
    capture: bool = False,
    visit_budget: int = VISIT_BUDGET,
    chunk_elems: int = 2**20,
):
    """Vectorized root solves across disorder replicas.

    Runs the same backward recursion as :func:`solve_root_R`, one
    generation at a time, over a batch of replicas.  Lengths are drawn
    through the same address-based counter stream, so each batch entry
    matches its scalar counterpart to floating-point reordering.

    Parameters
    ----------
    spec, dm : TreeSpec, DisorderModel
    z : complex, HalfPlanePoint, or np.ndarray
        Spectral parameter(s) with eta > 0; an array gives one point per
        replica.
    seed_m : complex or np.ndarray
        Far-end disk seed, scalar or one value per replica.
    replicas : array_like of int
        Replica indices; defaults to ``[0]``.
    capture : bool
        Also return per-generation near-end values and lengths.
    chunk_elems : int
        Target working-set size (array elements) used to chunk the batch.

    Returns
    -------
    np.ndarray or (np.ndarray, BatchCapture)
        Root WT values, shape ``(len(replicas),)``.
    """
    if not spec.vertex_bc.is_kirchhoff:
        raise ValidationError(
            "the recursion merges Kirchhoff vertices; apply symmetric_tilde to "
            "reduce symmetric conditions first"
        )
    if replicas is None:
        replicas = np.asarray([0], dtype=np.int64)
    replicas = np.asarray(replicas, dtype=np.uint64).ravel()
    S = replicas.size

    if isinstance(z, np.ndarray):
        z_arr = np.asarray(z, dtype=np.complex128).ravel()
        if z_arr.size != S:
            raise ValidationError("per-replica z array must match the replica count")
        if not np.all(z_arr.imag > 0.0):
            raise ValidationError("direct recursion requires eta > 0 at every point")
        w_all = np.sqrt(z_arr)
    else:
        p = as_point(z)
        if p.boundary_mode:
            raise ValidationError("direct recursion requires eta > 0; boundary values need extrapolation")
        w_all = np.full(S, sqrt_upper(p), dtype=np.complex128)

    if isinstance(seed_m, np.ndarray):
        seed_arr = np.asarray(seed_m, dtype=np.complex128).ravel()
        if seed_arr.size != S:
            raise ValidationError("per-replica seed array must match the replica count")
        if np.any(np.abs(seed_arr) > 1.0 + 1e-12) or np.any(seed_arr == 1.0):
            raise ValidationError("truncation seeds must satisfy |m| <= 1, m != 1")
    else:
        seed_arr = np.full(S, _check_seed_m(seed_m), dtype=np.complex128)

    K, N, L, lam = spec.K, spec.depth, spec.L, dm.lam
    n_edges = _subtree_edge_count(K, N)
    if n_edges > visit_budget:
        raise BudgetExceededError(
            f"tree solve would visit {n_edges} edges, budget is {visit_budget}"
        )

    leaves = K**N
    chunk = max(1, int(chunk_elems) // max(leaves, 1))
    out = np.empty(S, dtype=np.complex128)
    cap_m = [[] for _ in range(N + 1)] if capture else None
    cap_len = [[] for _ in range(N + 1)] if capture else None

    for lo in range(0, S, chunk):
        hi = min(lo + chunk, S)
        reps = replicas[lo:hi].reshape(-1, 1)
        w = w_all[lo:hi].reshape(-1, 1)
        m = np.broadcast_to(seed_arr[lo:hi].reshape(-1, 1), (hi - lo, leaves)).copy()
        for g in range(N, -1, -1):
            if g < N:
                h = (1.0 + m) / (1.0 - m)
                zeta = h.reshape(hi - lo, K**g, K).sum(axis=2)
                m = (zeta - 1.0) / (zeta + 1.0)
            om = omega_for_generation(dm, K, g, reps)
            le = L * np.exp(lam * om)
            m = np.exp((2j * w) * le) * m
            if capture:
                cap_m[g].append(m.copy())
                cap_len[g].append(le)
        out[lo:hi] = 1j * w[:, 0] * (1.0 + m[:, 0]) / (1.0 - m[:, 0])

    if not np.all(np.isfinite(out.view(np.float64))):
        raise NumericalDegeneracyError("batch solve produced non-finite WT values")
    if not np.all(out.imag > 0.0):
        raise NumericalDegeneracyError("batch solve left the upper half plane")
    if capture:
        cap = BatchCapture(
            m_near=[np.concatenate(blocks, axis=0) for blocks in cap_m],
            lengths=[np.concatenate(blocks, axis=0) for blocks in cap_len],
        )
        return out, cap
    return out


def solve_R_minus(
    spec: TreeSpec,
    dm: DisorderModel,
    z,
    target: EdgeAddress = ROOT_EDGE,
    position: float = 0.0,
    replica: int = 0,
    seed_m: complex = 0j,
    visit_budget: int = VISIT_BUDGET,
) -> complex:
    """Backward WT function R^- at a point of the tree.

    R^- = -psi'/psi of the solution determined by the root condition and
    by the sibling subtrees passed on the walk from the root to
    ``target``.  The pair (psi, psi') is propagated projectively, so the
    Dirichlet root value (alpha = 0, R^- infinite) is handled exactly;
    at the root near end itself that case returns :data:`WT_INFINITY`.

    Crossing a vertex into child f adds every sibling's forward WT value
    to psi'/psi; sibling values come from subtree solves.

    Raises
    ------
    ValidationError
        For boundary-mode z, out-of-range positions, or non-Kirchhoff
        vertex conditions (use the tilde rotation to reduce those).
    """
    p = as_point(z)
    if p.boundary_mode:
        raise ValidationError("direct recursion requires eta > 0; boundary values need extrapolation")
    if not spec.vertex_bc.is_kirchhoff:
        raise ValidationError(
            "R-minus propagation is defined for Kirchhoff vertex conditions; "
            "apply symmetric_tilde to reduce symmetric conditions first"
        )
    if target.generation > spec.depth:
        raise ValidationError("target edge lies beyond the tree depth")
    w = sqrt_upper(p)

    alpha = spec.alpha
    if alpha == 0.0 and target.generation == 0 and position == 0.0:
        return WT_INFINITY

    u = complex(math.sin(alpha))
    up = complex(math.cos(alpha))

    def _propagate(uv, upv, length):
        c, s = cos_sin(w, length)
        return uv * c + upv * s / w, -uv * w * s + upv * c

    prefix = ()
    for g, d in enumerate(target.path):
        le = _edge_length_fast(spec, dm, prefix, replica)
        u, up = _propagate(u, up, le)
        sib_sum = 0j
        for j in range(spec.K):
            if j == d:
                continue
            sib_sum += solve_edge_R(
                spec, dm, p, EdgeAddress(prefix + (j,)), seed_m, replica, visit_budget
            )
        up = up - sib_sum * u
        prefix = prefix + (d,)

    le_target = _edge_length_fast(spec, dm, prefix, replica)
    if not 0.0 <= position <= le_target:
        raise ValidationError(
            f"position {position} outside the target edge of length {le_target}"
        )
    u, up = _propagate(u, up, position)
    if u == 0 or not (cmath.isfinite(u) and cmath.isfinite(up)):
        raise NumericalDegeneracyError("backward solution degenerated while propagating")
    out = -up / u
    if not cmath.isfinite(out):
        raise NumericalDegeneracyError("backward WT value is non-finite")
    return out


def _edge_length_fast(spec: TreeSpec, dm: DisorderModel, path: tuple, replica: int) -> float:
    u = uniform01(hash_words(dm.master_seed, DOMAIN_EDGE, replica, len(path), *path))
    return spec.L * math.exp(dm.lam * omega_from_uniform(dm.dist, u))


def boundary_extrapolate(fn, E: float, etas=DEFAULT_ETA_LADDER):
    """Boundary value at E + i0 via a linear fit over a decreasing eta ladder.

    Parameters
    ----------
    fn : callable
        Maps a complex z (eta > 0) to a complex or float value.
    E : float
        Real energy.
    etas : sequence of float
        Strictly positive ladder; the fit value at eta = 0 is returned.

    Returns
    -------
    complex
        Extrapolated boundary value.
    """
    etas = [float(t) for t in etas]
    if len(etas) < 2 or any(t <= 0 for t in etas):
        raise ValidationError("eta ladder needs at least two positive entries")
    vals = np.asarray([complex(fn(complex(E, t))) for t in etas])
    coeffs = np.polyfit(np.asarray(etas, dtype=float), vals, 1)
    return complex(coeffs[1])
