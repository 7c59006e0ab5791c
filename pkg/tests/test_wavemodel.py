import numpy as np
import pytest

from xfwi import (
    Acquisition,
    Dataset,
    HelmholtzModel1D,
    MediumModel,
    adjoint_F,
    assemble_A,
    dA_dm,
    dense_forward_matrix,
    dot_test,
    forward_F,
    forward_operator,
    kernel_k,
    kernel_matrix,
)
from xfwi.errors import (
    DimensionMismatchError,
    RejectedInputError,
    SingularGeometryError,
)


def line_acquisition(distances, nt, dt):
    rec = np.zeros((len(distances), 3))
    rec[:, 0] = distances
    return Acquisition(np.zeros(3), rec, nt=nt, dt=dt)


class TestAssembly:
    def test_three_point_stencil_oracle(self):
        model = HelmholtzModel1D(n=3, h=1.0, omega=1.0, boundary="dirichlet")
        A = assemble_A(model, [1.0, 1.0, 1.0]).matrix
        expected = np.array(
            [[3.0, -1.0, 0.0], [-1.0, 3.0, -1.0], [0.0, -1.0, 3.0]]
        )
        assert np.array_equal(A.real, expected)
        assert np.array_equal(A.imag, np.zeros((3, 3)))

    def test_vanishing_frequency_leaves_laplacian(self):
        n, h = 5, 0.5
        model = HelmholtzModel1D(n=n, h=h, omega=1e-12, boundary="dirichlet")
        A = assemble_A(model, np.full(n, 0.3)).matrix
        L = (
            2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
        ) / h**2
        assert np.array_equal(A.real, L)

    def test_mass_term_is_linear(self):
        # dyadic values make the perturbation identity exact in floats
        model = HelmholtzModel1D(n=4, h=1.0, omega=2.0, boundary="dirichlet")
        m = np.full(4, 0.25)
        delta = 0.5
        A0 = assemble_A(model, m).matrix
        for k in range(4):
            mp = m.copy()
            mp[k] += delta
            diff = assemble_A(model, mp).matrix - A0
            expected = np.zeros((4, 4))
            expected[k, k] = model.omega**2 * delta
            assert np.array_equal(diff, expected)

    def test_medium_model_wrapper(self):
        model = HelmholtzModel1D(n=4, h=1.0, omega=2.0)
        m = MediumModel(np.full(4, 0.25))
        assert np.array_equal(assemble_A(model, m).matrix, assemble_A(model, m.values).matrix)

    def test_rejects_bad_medium(self):
        model = HelmholtzModel1D(n=3, h=1.0, omega=1.0)
        with pytest.raises(RejectedInputError):
            assemble_A(model, [1.0, np.nan, 1.0])
        with pytest.raises(DimensionMismatchError):
            assemble_A(model, [1.0, 1.0])

    def test_boundary_symmetry(self):
        m = np.full(8, 0.3)
        A_d = assemble_A(HelmholtzModel1D(8, 0.1, 10.0, "dirichlet"), m).matrix
        assert np.array_equal(A_d, A_d.T)
        assert np.array_equal(A_d, A_d.conj().T)
        A_s = assemble_A(HelmholtzModel1D(8, 0.1, 10.0, "sommerfeld"), m).matrix
        assert np.array_equal(A_s, A_s.T)
        assert not np.allclose(A_s, A_s.conj().T)


class TestDerivative:
    def test_rank_one_oracle(self):
        model = HelmholtzModel1D(n=3, h=1.0, omega=1.0)
        D = dA_dm(model, 0).matrix
        assert np.array_equal(D, np.diag([1.0, 0.0, 0.0]))

    def test_finite_difference_oracle(self):
        model = HelmholtzModel1D(n=5, h=1.0, omega=1.0)
        m = np.full(5, 0.3)
        A0 = assemble_A(model, m).matrix
        for k in range(5):
            mp = m.copy()
            mp[k] += 1e-6
            fd = (assemble_A(model, mp).matrix - A0) / 1e-6
            assert np.max(np.abs(fd - dA_dm(model, k).matrix)) <= 1e-8

    def test_reassembly_identity(self):
        model = HelmholtzModel1D(n=6, h=0.2, omega=7.0)
        m = np.linspace(0.2, 0.4, 6)
        total = sum(m[k] * dA_dm(model, k).matrix for k in range(6))
        assert np.allclose(total, model.omega**2 * np.diag(m), rtol=1e-14)

    def test_index_out_of_range(self):
        model = HelmholtzModel1D(n=3, h=1.0, omega=1.0)
        with pytest.raises(RejectedInputError):
            dA_dm(model, 3)


class TestForward:
    def test_spike_delay_and_amplitude(self):
        acq = line_acquisition([1.0], nt=256, dt=0.004)
        q = np.zeros(256)
        q[0] = 1.0
        trace = forward_F(2.0, acq, q).values[0]
        # delay 0.5 s = 125 samples exactly; unit amplitude at r = 1
        assert np.argmax(np.abs(trace)) == 125
        assert trace[125] == pytest.approx(1.0, abs=1e-12)

    def test_spreading_halves_amplitude(self):
        nt, dt = 400, 0.004
        q = np.zeros(nt)
        q[0] = 1.0
        near = forward_F(2.0, line_acquisition([1.0], nt, dt), q).values[0]
        far = forward_F(2.0, line_acquisition([2.0], nt, dt), q).values[0]
        assert np.argmax(np.abs(far)) == 2 * np.argmax(np.abs(near))
        assert far[250] == pytest.approx(0.5 * near[125], rel=1e-12)

    def test_paper_geometry_arrivals(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=512, dt=0.004)
        q = np.zeros(512)
        q[0] = 1.0
        data = forward_F(2.0, acq, q)
        peaks = np.argmax(np.abs(data.values), axis=1) * acq.dt
        assert np.allclose(peaks, [0.4, 0.5, 0.6])

    def test_linearity(self):
        acq = line_acquisition([0.8, 1.2], nt=128, dt=0.008)
        rng = np.random.default_rng(0)
        q1, q2 = rng.standard_normal(128), rng.standard_normal(128)
        a, b = 1.7, -0.4
        combo = forward_F(1.9, acq, a * q1 + b * q2).values
        parts = a * forward_F(1.9, acq, q1).values + b * forward_F(1.9, acq, q2).values
        assert np.linalg.norm(combo - parts) <= 1e-12 * np.linalg.norm(parts)

    def test_receiver_at_source_rejected(self):
        with pytest.raises(SingularGeometryError):
            line_acquisition([0.0, 1.0], nt=64, dt=0.01)

    def test_bad_source_rejected(self):
        acq = line_acquisition([1.0], nt=64, dt=0.01)
        with pytest.raises(RejectedInputError):
            forward_F(2.0, acq, np.full(64, np.inf))
        with pytest.raises(RejectedInputError):
            forward_F(-1.0, acq, np.zeros(64))


class TestAdjoint:
    def test_dot_test(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=128, dt=0.008)
        assert dot_test(forward_operator(2.1, acq), trials=10, seed=4) <= 1e-10

    def test_round_trip_peaks_at_zero(self):
        acq = line_acquisition([1.0], nt=128, dt=0.008)
        q = np.zeros(128)
        q[0] = 1.0
        data = forward_F(2.0, acq, q)
        back = adjoint_F(2.0, acq, data)
        assert np.argmax(np.abs(back)) == 0

    def test_zero_data(self):
        acq = line_acquisition([1.0, 2.0], nt=64, dt=0.01)
        out = adjoint_F(2.0, acq, Dataset(np.zeros((2, 64))))
        assert np.array_equal(out, np.zeros(64))


class TestKernel:
    def test_diagonal_panels(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=256, dt=0.004)
        panels = kernel_k(2.0, acq)
        zero = int(np.argmin(np.abs(panels.lags)))
        for i, r in enumerate([0.8, 1.0, 1.2]):
            trace = panels.traces[i, i]
            assert np.argmax(np.abs(trace)) == zero
            assert trace[zero] == pytest.approx(1.0 / r**2, rel=1e-10)

    def test_off_diagonal_event(self):
        acq = line_acquisition([0.8, 1.2], nt=256, dt=0.004)
        panels = kernel_k(2.0, acq)
        trace = panels.traces[1, 0]  # lag (1.2 - 0.8)/2 = 0.2 s
        peak = np.argmax(np.abs(trace))
        assert panels.lags[peak] == pytest.approx(0.2, abs=acq.dt)
        assert trace[peak] == pytest.approx(1.0 / (0.8 * 1.2), rel=1e-10)

    def test_flip_symmetry(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=128, dt=0.008)
        panels = kernel_k(2.0, acq)
        zero = int(np.argmin(np.abs(panels.lags)))
        ks = np.arange(-30, 31)
        for i in range(3):
            for j in range(3):
                assert np.allclose(
                    panels.traces[i, j, zero + ks],
                    panels.traces[j, i, zero - ks],
                    atol=1e-12,
                )

    def test_peak_lag_off_grid_velocity(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=256, dt=0.004)
        panels = kernel_k(1.9, acq)
        dists = acq.distances()
        for i in range(3):
            for j in range(3):
                expected = (dists[i] - dists[j]) / 1.9
                peak = panels.lags[np.argmax(np.abs(panels.traces[i, j]))]
                assert abs(peak - expected) <= acq.dt

    def test_kernel_matrix_is_psd(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=96, dt=0.008)
        K = kernel_matrix(2.0, acq)
        rng = np.random.default_rng(8)
        for _ in range(5):
            d = rng.standard_normal(K.shape[0])
            assert d @ K @ d >= -1e-10 * (d @ d)

    def test_dense_matrix_matches_columns(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=96, dt=0.008)
        F = dense_forward_matrix(1.85, acq)
        rng = np.random.default_rng(3)
        for k in rng.integers(0, 96, size=6):
            e = np.zeros(96)
            e[k] = 1.0
            col = forward_F(1.85, acq, e).values.ravel()
            assert np.linalg.norm(F[:, k] - col) <= 1e-12

    def test_kernel_matrix_matches_operator_round_trip(self):
        acq = line_acquisition([0.8, 1.0, 1.2], nt=96, dt=0.008)
        K = kernel_matrix(2.0, acq)
        rng = np.random.default_rng(5)
        for k in rng.integers(0, K.shape[0], size=5):
            e = np.zeros(K.shape[0])
            e[k] = 1.0
            col = forward_F(
                2.0, acq, adjoint_F(2.0, acq, e.reshape(3, 96))
            ).values.ravel()
            assert np.linalg.norm(K[:, k] - col) <= 1e-10 * max(
                1.0, np.linalg.norm(col)
            )
