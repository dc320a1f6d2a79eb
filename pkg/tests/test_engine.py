import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtree import (
    BoundaryPointError,
    BudgetExceededError,
    DisorderModel,
    EdgeAddress,
    HalfPlanePoint,
    MoebiusPoleError,
    ROOT_EDGE,
    SingularMergeError,
    SingularTransformError,
    TreeSpec,
    ValidationError,
    VertexBC,
    WT_INFINITY,
    as_point,
    boundary_extrapolate,
    cut_seed_disk,
    edge_length,
    edge_step_R,
    edge_step_m,
    fixed_point_R,
    m_from_r,
    r_from_m,
    solve_R_minus,
    solve_edge_R,
    solve_root_R,
    solve_root_R_batch,
    sqrt_upper,
    symmetric_tilde,
    symmetric_tilde_inverse,
    vertex_merge_m,
)
from wtree.engine import cos_sin
from wtree.errors import NumericalDegeneracyError


def test_sqrt_upper_interior():
    w = sqrt_upper(complex(0.0, 2.0))
    assert abs(w - complex(1.0, 1.0)) < 1e-14
    assert sqrt_upper(complex(-4.0, 0.0004)).imag > 1.9


def test_sqrt_upper_boundary():
    assert abs(sqrt_upper(complex(4.0, 0.0)) - 2.0) < 1e-15
    with pytest.raises(BoundaryPointError):
        sqrt_upper(complex(-1.0, 0.0))
    with pytest.raises(BoundaryPointError):
        sqrt_upper(complex(0.0, 0.0))


def test_as_point():
    p = as_point(complex(2.0, 0.01))
    assert isinstance(p, HalfPlanePoint)
    assert p.z == complex(2.0, 0.01)
    assert not p.boundary_mode
    q = as_point(HalfPlanePoint(E=3.0))
    assert q.boundary_mode and q.z == complex(3.0, 0.0)
    with pytest.raises(ValidationError):
        as_point(complex(2.0, -0.01))


def test_disk_transform_round_trip():
    z = complex(2.0, 0.1)
    for r in [complex(0.3, 0.8), complex(-2.0, 0.05), complex(0.0, 5.0)]:
        m = m_from_r(r, z)
        assert abs(m) < 1.0
        assert abs(r_from_m(m, z) - r) < 1e-12


def test_disk_transform_poles():
    z = complex(2.0, 0.1)
    w = sqrt_upper(z)
    with pytest.raises(SingularTransformError):
        m_from_r(-1j * w, z)
    with pytest.raises(SingularTransformError):
        r_from_m(complex(1.0, 0.0), z)


def test_edge_step_m_contraction_and_semigroup():
    z = complex(2.0, 0.3)
    w = sqrt_upper(z)
    m = complex(0.4, -0.2)
    out = edge_step_m(m, 1.7, z)
    assert abs(abs(out) - abs(m) * math.exp(-2 * 1.7 * w.imag)) < 1e-14
    two = edge_step_m(edge_step_m(m, 0.6, z), 1.1, z)
    assert abs(two - out) < 1e-14
    assert edge_step_m(m, 0.0, z) == m


def test_vertex_merge_m_examples():
    # all children at m = 0 (R = iw): zeta = K, m = (K-1)/(K+1)
    z = complex(2.0, 0.1)
    assert abs(vertex_merge_m([0j, 0j], z) - (1.0 / 3.0)) < 1e-15
    assert abs(vertex_merge_m([0j, 0j, 0j], z) - 0.5) < 1e-15


def test_vertex_merge_matches_additive_R():
    z = complex(1.7, 0.21)
    rs = [complex(0.3, 0.5), complex(-1.2, 0.8), complex(0.1, 0.02)]
    m = vertex_merge_m([m_from_r(r, z) for r in rs], z)
    assert abs(r_from_m(m, z) - sum(rs)) < 1e-12


def test_vertex_merge_singular():
    with pytest.raises(SingularMergeError):
        vertex_merge_m([complex(1.0, 0.0), 0j], complex(2.0, 0.1))


def test_cos_sin_overflow_guard():
    with pytest.raises(NumericalDegeneracyError):
        cos_sin(complex(0.0, 400.0), 1.0)


def test_edge_step_R_basics():
    z = complex(2.0, 0.5)
    w = sqrt_upper(z)
    r0 = complex(0.7, 1.1)
    assert edge_step_R(r0, 0.0, z) == r0
    # iw is the fixed point of the flow
    assert abs(edge_step_R(1j * w, 2.3, z) - 1j * w) < 1e-12
    # semigroup property
    a = edge_step_R(edge_step_R(r0, 0.4, z), 0.9, z)
    b = edge_step_R(r0, 1.3, z)
    assert abs(a - b) < 1e-10


def test_edge_step_R_pole():
    z = complex(2.0, 0.0)  # boundary keeps the trig factors real
    with pytest.raises(MoebiusPoleError):
        # R0 = -w*cot(w*l) makes the denominator c + R0*s/w vanish at l
        w = sqrt_upper(z)
        l = 0.8
        c, s_ = cmath.cos(w * l), cmath.sin(w * l)
        edge_step_R(-w * c / s_, l, z)


@settings(max_examples=60, deadline=None)
@given(
    e=st.floats(0.2, 8.0),
    eta=st.floats(0.01, 2.0),
    le=st.floats(0.05, 3.0),
    rre=st.floats(-3.0, 3.0),
    rim=st.floats(0.05, 3.0),
)
def test_edge_step_routes_agree(e, eta, le, rre, rim):
    # the disk step pulls a far-end value to the near end; the Moebius
    # flow pushes a near-end value forward, so the two must invert
    z = complex(e, eta)
    r_far = complex(rre, rim)
    r_near = r_from_m(edge_step_m(m_from_r(r_far, z), le, z), z)
    back = edge_step_R(r_near, le, z)
    assert abs(back - r_far) < 1e-9 * max(1.0, abs(r_far), abs(r_near))


def test_symmetric_tilde():
    r = complex(0.0, 1.0)
    assert symmetric_tilde(r, 0.0) == r
    assert abs(symmetric_tilde(r, math.pi / 2) - (-1.0 / r)) < 1e-15
    assert abs(symmetric_tilde(r, math.pi / 4) - (-1.0 / (1.0 + r))) < 1e-15
    for beta in [0.3, 1.0, 1.5]:
        rt = symmetric_tilde(r, beta)
        assert abs(symmetric_tilde_inverse(rt, beta) - r) < 1e-12
    ct = math.cos(0.7) / math.sin(0.7)
    with pytest.raises(SingularTransformError):
        symmetric_tilde(complex(-ct, 0.0), 0.7)
    with pytest.raises(ValidationError):
        symmetric_tilde(r, -0.1)


def test_solve_depth0_seed_is_exact():
    spec = TreeSpec(K=2, L=1.0, depth=0)
    dm = DisorderModel()
    z = complex(2.0, 0.3)
    w = sqrt_upper(z)
    # seed m = 0 means the cut edge carries R = iw at its far end
    r = solve_root_R(spec, dm, z, seed_m=0j)
    expect = edge_step_R(1j * w, 1.0, z)
    assert abs(r - expect) < 1e-12


def test_clean_tree_reproduces_fixed_point():
    dm = DisorderModel(lam=0.0)
    z = complex(2.0, 0.05)
    for K, depth in [(2, 4), (2, 9), (3, 6)]:
        spec = TreeSpec(K=K, L=1.0, depth=depth)
        phi = fixed_point_R(z, K, 1.0).phi
        r = solve_root_R(spec, dm, z, seed_m=cut_seed_disk(z, K, 1.0))
        assert abs(r - phi) < 1e-12


def test_clean_tree_zero_seed_converges_with_depth():
    dm = DisorderModel(lam=0.0)
    z = complex(2.0, 0.4)
    spec10 = TreeSpec(K=2, L=1.0, depth=10)
    phi = fixed_point_R(z, 2, 1.0).phi
    errs = []
    for depth in (2, 6, 10):
        spec = TreeSpec(K=2, L=1.0, depth=depth)
        errs.append(abs(solve_root_R(spec, dm, z) - phi))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.02


def test_scalar_vs_batch():
    spec = TreeSpec(K=2, L=1.0, depth=6)
    dm = DisorderModel(lam=0.15, dist="uniform", master_seed=11)
    z = complex(3.1, 0.07)
    batch = solve_root_R_batch(spec, dm, z, replicas=range(5))
    for i in range(5):
        r = solve_root_R(spec, dm, z, replica=i)
        assert abs(batch[i] - r) < 1e-12


def test_batch_per_replica_z_and_seed():
    spec = TreeSpec(K=2, L=1.0, depth=5)
    dm = DisorderModel(lam=0.1, master_seed=2)
    zs = np.array([complex(2.0, 0.1), complex(2.5, 0.2), complex(3.0, 0.4)])
    seeds = np.array([0j, complex(0.2, 0.1), complex(-0.1, 0.3)])
    batch = solve_root_R_batch(spec, dm, zs, seed_m=seeds, replicas=range(3))
    for i in range(3):
        r = solve_root_R(spec, dm, complex(zs[i]), seed_m=complex(seeds[i]), replica=i)
        assert abs(batch[i] - r) < 1e-12
    bad = np.array([complex(2.0, 0.1), complex(2.0, 0.0)])
    with pytest.raises(ValidationError):
        solve_root_R_batch(spec, dm, bad, replicas=range(2))


def test_batch_capture_consistent_with_addresses():
    spec = TreeSpec(K=2, L=1.0, depth=2)
    dm = DisorderModel(lam=0.2, master_seed=5)
    z = complex(2.2, 0.3)
    R, cap = solve_root_R_batch(spec, dm, z, replicas=[3], capture=True)
    assert [arr.shape[1] for arr in cap.lengths] == [1, 2, 4]
    for g in range(3):
        for i in range(2**g):
            path = [(i >> (g - 1 - j)) & 1 for j in range(g)]
            le = edge_length(spec, dm, EdgeAddress(path), replica=3)
            assert abs(cap.lengths[g][0, i] - le) < 1e-15
    root_r = r_from_m(complex(cap.m_near[0][0, 0]), z)
    assert abs(root_r - R[0]) < 1e-12


def test_visit_budget():
    spec = TreeSpec(K=2, L=1.0, depth=30)
    dm = DisorderModel()
    with pytest.raises(BudgetExceededError):
        solve_root_R(spec, dm, complex(2.0, 0.5))
    with pytest.raises(BudgetExceededError):
        solve_root_R_batch(spec, dm, complex(2.0, 0.5))


def test_seed_validation():
    spec = TreeSpec(K=2, L=1.0, depth=2)
    dm = DisorderModel()
    with pytest.raises(ValidationError):
        solve_root_R(spec, dm, complex(2.0, 0.5), seed_m=complex(1.2, 0.0))
    with pytest.raises(ValidationError):
        solve_root_R(spec, dm, complex(2.0, 0.5), seed_m=complex(1.0, 0.0))


def test_randomized_solves_are_herglotz_and_bounded():
    rng = np.random.default_rng(123)
    for trial in range(50):
        K = int(rng.integers(1, 4))
        depth = int(rng.integers(0, 7))
        lam = float(rng.uniform(0.0, 0.2))
        eta = float(10 ** rng.uniform(-3, 0))
        e = float(rng.uniform(0.2, 7.5))
        spec = TreeSpec(K=K, L=1.0, depth=depth)
        dm = DisorderModel(lam=lam, dist="uniform", master_seed=trial + 1)
        z = complex(e, eta)
        r = solve_root_R(spec, dm, z, seed_m=cut_seed_disk(z, K, 1.0))
        assert r.imag > 0.0
        le = edge_length(spec, dm, ROOT_EDGE)
        w = sqrt_upper(z)
        bound = 2.0 * abs(w) / (1.0 - math.exp(-2.0 * le * w.imag))
        assert abs(r) <= bound * (1.0 + 1e-12)


def test_symmetric_bc_zero_beta_matches_kirchhoff():
    z = complex(2.0, 0.2)
    dm = DisorderModel(lam=0.1, master_seed=9)
    plain = TreeSpec(K=2, L=1.0, depth=5)
    tagged = TreeSpec(
        K=2, L=1.0, depth=5, vertex_bc=VertexBC(kind="symmetric", beta_v=0.0)
    )
    assert solve_root_R(plain, dm, z) == solve_root_R(tagged, dm, z)
    a = solve_root_R_batch(plain, dm, z, replicas=range(3))
    b = solve_root_R_batch(tagged, dm, z, replicas=range(3))
    assert np.array_equal(a, b)


def test_non_kirchhoff_rejected_by_solvers():
    spec = TreeSpec(
        K=2, L=1.0, depth=3, vertex_bc=VertexBC(kind="symmetric", beta_v=0.3)
    )
    dm = DisorderModel()
    z = complex(2.0, 0.2)
    with pytest.raises(ValidationError):
        solve_edge_R(spec, dm, z)
    with pytest.raises(ValidationError):
        solve_root_R_batch(spec, dm, z)
    with pytest.raises(ValidationError):
        solve_R_minus(spec, dm, z)


def test_solve_R_minus_root_values():
    dm = DisorderModel()
    z = complex(2.0, 0.3)
    spec = TreeSpec(K=2, L=1.0, depth=3, alpha=math.pi / 2)
    assert abs(solve_R_minus(spec, dm, z)) < 1e-15
    spec45 = TreeSpec(K=2, L=1.0, depth=3, alpha=math.pi / 4)
    assert abs(solve_R_minus(spec45, dm, z) - (-1.0)) < 1e-14
    spec0 = TreeSpec(K=2, L=1.0, depth=3, alpha=0.0)
    assert solve_R_minus(spec0, dm, z) == WT_INFINITY


def test_solve_R_minus_dirichlet_oracle():
    # alpha = 0 forces psi(0) = 0 on the root edge, so the backward value
    # at position t is -w*cot(w*t) seen from the far side
    dm = DisorderModel(lam=0.0)
    spec = TreeSpec(K=2, L=1.0, depth=4, alpha=0.0)
    z = complex(2.0, 0.3)
    w = sqrt_upper(z)
    for t in (0.25, 0.6, 0.95):
        got = solve_R_minus(spec, dm, z, position=t)
        expect = -w * cmath.cos(w * t) / cmath.sin(w * t)
        assert abs(got - expect) < 1e-10


def test_solve_R_minus_crossing_rule():
    spec = TreeSpec(K=2, L=1.0, depth=4, alpha=1.1)
    dm = DisorderModel(lam=0.2, master_seed=6)
    z = complex(2.4, 0.15)
    l0 = edge_length(spec, dm, ROOT_EDGE)
    r_minus_end = solve_R_minus(spec, dm, z, position=l0)
    child0 = EdgeAddress((0,))
    sib_plus = solve_edge_R(spec, dm, z, addr=EdgeAddress((1,)))
    got = solve_R_minus(spec, dm, z, target=child0, position=0.0)
    assert abs(got - (r_minus_end + sib_plus)) < 1e-10


def test_solve_R_minus_herglotz_sum():
    spec = TreeSpec(K=2, L=1.0, depth=5, alpha=1.3)
    dm = DisorderModel(lam=0.15, master_seed=8)
    z = complex(2.0, 0.05)
    for target, pos in [(ROOT_EDGE, 0.5), (EdgeAddress((0,)), 0.3), (EdgeAddress((1, 0)), 0.7)]:
        rm = solve_R_minus(spec, dm, z, target=target, position=pos)
        rp = solve_edge_R(spec, dm, z, addr=target)
        # propagate the forward value to the evaluation point
        le = edge_length(spec, dm, target)
        rp_at = edge_step_R(rp, le - pos, z) if pos < le else rp
        assert (rp_at + rm).imag > 0.0


def test_solve_R_minus_position_validation():
    spec = TreeSpec(K=2, L=1.0, depth=2)
    dm = DisorderModel()
    with pytest.raises(ValidationError):
        solve_R_minus(spec, dm, complex(2.0, 0.1), position=5.0)
    with pytest.raises(ValidationError):
        solve_R_minus(spec, dm, complex(2.0, 0.1), position=-0.1)


def test_boundary_extrapolate():
    def fn(z):
        return complex(2.0 + 3.0 * z.imag, 1.0 - 0.5 * z.imag)

    got = boundary_extrapolate(fn, 1.0, etas=(0.2, 0.1, 0.05))
    assert abs(got - complex(2.0, 1.0)) < 1e-12
    with pytest.raises(ValidationError):
        boundary_extrapolate(fn, 1.0, etas=(0.1,))
    with pytest.raises(ValidationError):
        boundary_extrapolate(fn, 1.0, etas=(0.1, -0.2))
