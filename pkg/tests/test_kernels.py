import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seabalance import kernels
from seabalance.centroidal import centroidal_transform
from seabalance.multibody import compute_dynamics
from seabalance.randmodel import random_model

from conftest import random_state

BACKENDS = kernels.available_backends()


def _kkt_case(rng, N=9, k=4):
    A = rng.normal(size=(N, N))
    M = A @ A.T + N * np.eye(N)
    return M, rng.normal(size=N), rng.normal(size=(k, N)), rng.normal(size=k)


def test_backend_flag():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_kkt_solution_satisfies_blocks(backend, seed):
    rng = np.random.default_rng(seed)
    M, Q, J, rhs = _kkt_case(rng, N=int(rng.integers(6, 20)), k=int(rng.integers(0, 6)))
    status, nud, f = kernels.kkt_solve(M, Q, J, rhs, backend)
    assert status == 0
    assert np.abs(M @ nud - J.T @ f - Q).max() < 1e-9 * max(1.0, np.abs(Q).max())
    assert np.abs(J @ nud - rhs).max(initial=0.0) < 1e-9 * max(1.0, np.abs(rhs).max(initial=0.0))


@pytest.mark.parametrize("backend", BACKENDS)
def test_kkt_status_codes(backend, rng):
    M, Q, J, rhs = _kkt_case(rng)
    assert kernels.kkt_solve(-M, Q, J, rhs, backend)[0] == 1
    J2 = J.copy()
    J2[2] = 2.0 * J2[1]
    assert kernels.kkt_solve(M, Q, J2, rhs, backend)[0] == 2


def test_kkt_backends_agree(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    for _ in range(10):
        case = _kkt_case(rng, N=17, k=12)
        a = kernels.kkt_solve(*case, "python")
        b = kernels.kkt_solve(*case, "cython")
        np.testing.assert_allclose(a[1], b[1], atol=1e-11)
        np.testing.assert_allclose(a[2], b[2], atol=1e-11)


def test_locked_inertia_rate_backends_agree(rng):
    m = random_model(rng, n=6, nc=1)
    for _ in range(5):
        st_ = random_state(m, rng)
        dyn = compute_dynamics(m, st_)
        cq = centroidal_transform(m, st_, dyn)
        ref = kernels.locked_inertia_rate(m.kernel, dyn.kin, cq.p_c, cq.v_B[:3], "python")
        for b in BACKENDS:
            np.testing.assert_allclose(kernels.locked_inertia_rate(m.kernel, dyn.kin, cq.p_c, cq.v_B[:3], b),
                                       ref, atol=1e-12)
        # symmetric, as the derivative of a symmetric matrix
        np.testing.assert_allclose(ref, ref.T, atol=1e-12)


def test_locked_inertia_rate_fd(rng):
    """Matches a finite difference of the locked inertia along the motion."""
    m = random_model(rng, n=5, nc=0)
    st_ = random_state(m, rng)

    def locked(s2):
        dyn = compute_dynamics(m, s2)
        return centroidal_transform(m, s2, dyn).M_b[3:, 3:]

    from seabalance.multibody import integrate_quat
    h = 1e-6

    def moved(sign):
        nu = st_.nu
        return st_.copy(p=st_.p + sign * h * nu[:3], quat=integrate_quat(st_.quat, nu[3:6], sign * h),
                        s=st_.s + sign * h * nu[6:])

    fd = (locked(moved(1)) - locked(moved(-1))) / (2 * h)
    dyn = compute_dynamics(m, st_)
    cq = centroidal_transform(m, st_, dyn)
    an = kernels.locked_inertia_rate(m.kernel, dyn.kin, cq.p_c, cq.v_B[:3])
    np.testing.assert_allclose(an, fd, atol=1e-6 * max(1.0, np.abs(fd).max()))
