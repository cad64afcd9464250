import csv

import numpy as np
import pytest

from takagi_scan import (
    COMPLETED,
    HALTED,
    ContinuationControls,
    ContinuationState,
    StepFloor,
    TakagiPair,
    continue_path,
    field_from_seed,
    ode_rhs,
    pc_step,
    predict,
    reversed_path,
    takagi_factor,
    takagi_svd,
    verify_takagi,
    write_trace_csv,
)


def one_by_one_circle(t):
    return np.array([[np.exp(2j * np.pi * t)]])


def one_by_one_arc(t):
    return np.array([[np.exp(1j * t)]])


class ConstantPath:
    def __init__(self, A):
        self.A = A

    def __call__(self, t):
        return self.A


class SegmentPath:
    """Trigonometric field restricted to a straight segment."""

    def __init__(self, field, p0, p1):
        self.field = field
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)

    def __call__(self, t):
        x, y = self.p0 + t * (self.p1 - self.p0)
        return self.field(x, y)

    def derivative(self, t):
        x, y = self.p0 + t * (self.p1 - self.p0)
        dx, dy = self.p1 - self.p0
        return self.field.partial_x(x, y) * dx + self.field.partial_y(x, y) * dy


def branch_step(pair, path, t, t_target):
    """Exact branch value at t_target via one forced predictor-corrector step.

    Reparametrizes so the step also works backward (t_target < t).
    """

    def local(s):
        return path(t + s * (t_target - t))

    controls = ContinuationControls(tolstep=1e6)  # accept regardless of rho
    state = ContinuationState(0.0, pair, 1.0, controls)
    result = pc_step(state, local)
    assert result.accepted
    return result.state.pair


class TestOdeRhs:
    def test_zero_motion(self):
        pair = takagi_svd(np.diag([2.0, 1.0]).astype(complex))
        Sdot, H = ode_rhs(np.zeros((2, 2)), pair)
        np.testing.assert_array_equal(Sdot, 0.0)
        np.testing.assert_array_equal(H, 0.0)

    def test_diagonal_growth(self):
        # A(t) = diag(2 + t, 1) at t=0 with U = I
        pair = TakagiPair(np.eye(2, dtype=complex), np.array([2.0, 1.0]))
        Sdot, H = ode_rhs(np.diag([1.0, 0.0]), pair)
        np.testing.assert_allclose(Sdot, [1.0, 0.0])
        np.testing.assert_allclose(H, 0.0, atol=1e-15)

    def test_skew_hermitian_structure(self):
        field = field_from_seed(6, 21)
        path = SegmentPath(field, (0.2, 0.5), (1.1, 1.4))
        pair = takagi_svd(path(0.4))
        _, H = ode_rhs(path.derivative(0.4), pair)
        assert np.linalg.norm(H + H.conj().T) <= 1e-13 * np.linalg.norm(H)
        np.testing.assert_allclose(np.diagonal(H).real, 0.0, atol=1e-15)

    def test_central_difference_oracle(self):
        # derivative of the continued branch vs the analytic right-hand side
        field = field_from_seed(5, 22)
        path = SegmentPath(field, (0.1, 0.9), (0.9, 0.2))
        t0 = 0.37
        pair = takagi_svd(path(t0))
        Sdot, H = ode_rhs(path.derivative(t0), pair)
        Udot_exact = pair.U @ H
        errs = []
        for h in (1e-2, 1e-3, 1e-4):
            plus = branch_step(pair, path, t0, t0 + h)
            minus = branch_step(pair, path, t0, t0 - h)
            s_fd = (plus.S - minus.S) / (2 * h)
            u_fd = (plus.U - minus.U) / (2 * h)
            errs.append(
                max(
                    np.max(np.abs(s_fd - Sdot)),
                    np.linalg.norm(u_fd - Udot_exact),
                )
            )
        order = np.polyfit(np.log([1e-2, 1e-3, 1e-4]), np.log(errs), 1)[0]
        assert order >= 1.9


class TestPredict:
    def test_zero_motion_fixed_point(self):
        A = np.diag([3.0, 1.5]).astype(complex)
        pair = takagi_svd(A)
        Upred, Spred = predict(pair, A)
        np.testing.assert_allclose(Upred, pair.U, atol=1e-12)
        np.testing.assert_allclose(Spred, pair.S, atol=1e-12)

    def test_one_by_one_closed_form(self):
        pair = TakagiPair(np.array([[1.0 + 0j]]), np.array([1.0]))
        h = 0.3
        Upred, Spred = predict(pair, np.array([[np.exp(1j * h)]]))
        np.testing.assert_allclose(Upred, [[1.0 + 0.5j * np.sin(h)]], atol=1e-15)
        np.testing.assert_allclose(Spred, [np.cos(h)], atol=1e-15)

    def test_second_order_accuracy(self):
        field = field_from_seed(6, 23)
        path = SegmentPath(field, (0.4, 0.1), (1.3, 0.8))
        t0 = 0.25
        pair = takagi_svd(path(t0))
        errs = []
        for h in (2e-3, 1e-3, 5e-4):
            exact = branch_step(pair, path, t0, t0 + h)
            Upred, Spred = predict(pair, path(t0 + h))
            errs.append(np.linalg.norm(Upred - exact.U))
        # halving h divides the error by about four
        assert 3.3 <= errs[0] / errs[1] <= 4.7
        assert 3.3 <= errs[1] / errs[2] <= 4.7


class TestPcStep:
    def test_constant_path_exact(self):
        A = field_from_seed(4, 24)(0.3, 0.4)
        pair = takagi_factor(A)
        controls = ContinuationControls()
        state = ContinuationState(0.0, pair, 0.5, controls)
        result = pc_step(state, ConstantPath(A))
        assert result.accepted
        assert result.rho <= 1e-12  # zero up to predictor roundoff
        np.testing.assert_array_equal(result.state.pair.U, pair.U)
        # a vanishing rho grows the step, capped by the growth factor and h_max
        assert result.state.h == min(2 * 0.5, controls.h_max)

    def test_one_by_one_smooth_branch(self):
        pair = TakagiPair(np.array([[1.0 + 0j]]), np.array([1.0]))
        state = ContinuationState(0.0, pair, 0.1, ContinuationControls())
        result = pc_step(state, one_by_one_arc)
        assert result.accepted
        np.testing.assert_allclose(
            result.state.pair.U, [[np.exp(0.05j)]], atol=1e-12
        )

    def test_step_size_law(self):
        # generic path far from crossings, so only the rho update acts
        field = field_from_seed(4, 31)
        path = SegmentPath(field, (0.5, 0.2), (1.0, 0.9))
        pair = takagi_factor(path(0.0))
        controls = ContinuationControls()
        h = 0.02
        state = ContinuationState(0.0, pair, h, controls)
        result = pc_step(state, path)
        assert result.accepted
        assert result.rho > 0.0
        expected = min(
            h * controls.tolstep / max(result.rho_sigma, result.rho_u),
            controls.growth * h,
            controls.h_max,
        )
        np.testing.assert_allclose(result.state.h, expected, rtol=1e-12)

    def test_clips_to_path_end(self):
        A = field_from_seed(3, 25)(0.1, 0.2)
        pair = takagi_factor(A)
        state = ContinuationState(0.95, pair, 0.5, ContinuationControls())
        result = pc_step(state, ConstantPath(A))
        assert result.accepted
        assert result.state.t == 1.0

    def test_step_floor_raised(self):
        A = field_from_seed(3, 25)(0.1, 0.2)
        pair = takagi_factor(A)
        controls = ContinuationControls()
        state = ContinuationState(0.5, pair, controls.h_min / 2, controls)
        with pytest.raises(StepFloor):
            pc_step(state, ConstantPath(A))

    def test_sign_correction_idempotent(self):
        # re-matching a corrected factor against the same prediction gives
        # all positive overlaps, so a second pass changes nothing
        field = field_from_seed(5, 26)
        path = SegmentPath(field, (0.0, 0.3), (0.7, 1.1))
        pair = takagi_factor(path(0.0))
        state = ContinuationState(0.0, pair, 1e-2, ContinuationControls())
        result = pc_step(state, path)
        assert result.accepted
        Upred, _ = predict(pair, path(result.state.t))
        d = np.real(np.einsum("ij,ij->j", np.conj(result.state.pair.U), Upred))
        assert np.all(d > 0.0)


class TestNearCoalescence:
    def path(self, t):
        return np.array([[1.0 + t - 0.5, 0.01], [0.01, 1.0 - t + 0.5]], dtype=complex)

    def test_step_sizes_dip_and_recover(self):
        result = continue_path(self.path)
        assert result.status == COMPLETED
        ts = np.array([p.t for p in result.trace])
        hs = np.array([p.h for p in result.trace])
        i_min = hs.argmin()
        # the minimum gap (0.02 at t=1/2) pinches the step size there
        assert abs(ts[i_min] - 0.5) < 0.05
        assert hs[i_min] < 5e-3
        assert hs[-1] > 10 * hs[i_min]
        # the step-size envelope decreases on approach (individual steps
        # oscillate between secant cuts and rho-driven regrowth)
        windows = [(0.1, 0.38), (0.38, 0.45), (0.45, 0.5)]
        envel = [hs[(ts >= a) & (ts < b)].max() for a, b in windows]
        assert envel[0] > envel[1] > envel[2]

    def test_exact_crossing_halts(self):
        def crossing(t):
            return np.array([[1.0 + t - 0.5, 0.0], [0.0, 1.0 - t + 0.5]], dtype=complex)

        result = continue_path(crossing)
        assert result.status == HALTED
        assert abs(result.t_end - 0.5) < 0.01


class TestContinuePath:
    def test_constant_path(self):
        A = field_from_seed(4, 27)(1.0, 2.0)
        initial = takagi_factor(A)
        result = continue_path(ConstantPath(A), initial)
        assert result.status == COMPLETED
        np.testing.assert_array_equal(result.final.U, initial.U)
        # h ramps to the cap: 1/64 start, doubling, then 0.1 steps
        assert len(result.trace) <= 16

    def test_full_loop_flips_phase(self):
        result = continue_path(one_by_one_circle)
        assert result.status == COMPLETED
        initial_u = 1.0  # takagi of [1] at t=0
        np.testing.assert_allclose(result.final.U, [[-initial_u]], atol=1e-12)

    def test_every_accepted_node_is_exact(self):
        field = field_from_seed(10, 28)
        path = SegmentPath(field, (0.2, 0.2), (1.9, 1.1))
        controls = ContinuationControls()
        state = ContinuationState(0.0, takagi_factor(path(0.0)), controls.h_init, controls)
        seen = 0
        while state.t < 1.0:
            result = pc_step(state, path)
            state = result.state
            if result.accepted:
                check = verify_takagi(path(state.t), state.pair)
                assert check.residual <= 1e-11
                assert check.unitarity_defect <= 1e-12 * np.sqrt(10)
                seen += 1
        assert seen >= 10

    def test_final_agrees_with_direct_factorization(self):
        field = field_from_seed(10, 29)
        path = SegmentPath(field, (0.3, 0.6), (1.2, 2.0))
        result = continue_path(path)
        assert result.status == COMPLETED
        direct = takagi_factor(path(1.0))
        overlaps = np.abs(np.einsum("ij,ij->j", np.conj(direct.U), result.final.U))
        np.testing.assert_allclose(overlaps, 1.0, atol=1e-9)

    def test_reversibility(self):
        field = field_from_seed(6, 30)
        path = SegmentPath(field, (0.1, 0.4), (1.5, 0.9))
        initial = takagi_factor(path(0.0))
        there = continue_path(path, initial)
        back = continue_path(reversed_path(path), there.final)
        assert back.status == COMPLETED
        assert np.max(np.abs(back.final.U - initial.U)) <= 1e-8

    def test_trace_csv(self, tmp_path):
        result = continue_path(one_by_one_arc)
        out = tmp_path / "trace.csv"
        write_trace_csv(out, result.trace)
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "sigma1", "h", "rho"]
        assert len(rows) == len(result.trace) + 1
        assert float(rows[-1][0]) == 1.0
