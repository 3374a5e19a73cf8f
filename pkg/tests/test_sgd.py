import numpy as np
import pytest

from odyn import kernels, sgd
from odyn._purepy import overlap_update, weight_update
from odyn.activations import Activation
from odyn.config import ExperimentConfig
from odyn.drifts import psi_gf, psi_m, psi_var
from odyn.errors import BoundednessViolation, DivergenceError
from odyn.linalg import pivoted_cholesky
from odyn.overlaps import OverlapState, WeightState, overlaps_of
from odyn.sgd import overlap_step, run_sgd, setup_run, sgd_step, step_count

from conftest import random_state

ERF, SQUARE = Activation.erf(), Activation.square()


def cfg(**kw):
    base = dict(d=20, p=3, k=2, gamma=0.5, activation="erf", T=0.5, seed=4)
    base.update(kw)
    return ExperimentConfig(**base)


class TestSingleSteps:
    @pytest.mark.parametrize("mode", ["weight", "overlap"])
    def test_zero_learning_rate(self, mode):
        run = setup_run(cfg(gamma=0.0), mode=mode)
        nxt = sgd_step(run) if mode == "weight" else overlap_step(run)
        assert nxt.step_index == 1
        assert np.array_equal(nxt.overlaps().omega(), run.overlaps().omega())

    def test_student_equals_teacher(self):
        c = cfg(p=1, k=1, activation="square")
        run = setup_run(c, mode="weight")
        run = run.__class__(**{**run.__dict__, "state": WeightState(run.Wt.copy())})
        after = sgd_step(sgd_step(run))
        assert np.array_equal(after.state.W, run.Wt)

    def test_perfect_learning_in_overlap_space(self):
        c = cfg(p=2, k=2, activation="square")
        run = setup_run(c, init_state=OverlapState(np.eye(2), np.eye(2), np.eye(2)), mode="overlap")
        after = overlap_step(overlap_step(run))
        np.testing.assert_allclose(after.state.omega(), run.state.omega(), atol=1e-15)

    def test_steps_do_not_mutate_input(self):
        run = setup_run(cfg(), mode="weight")
        W0 = np.array(run.state.W)
        sgd_step(run)
        assert np.array_equal(run.state.W, W0) and run.step_index == 0

    def test_cross_mode_single_step(self, rng):
        d, gamma = 8, 0.7
        W, Wt = rng.standard_normal((2, d)), rng.standard_normal((1, d))
        x, z = rng.standard_normal(d) / np.sqrt(d), 0.3
        st = overlaps_of(W, Wt)
        Q, M = np.array(st.Q), np.array(st.M)
        lam, lamt = W @ x, Wt @ x
        overlap_update(Q, M, lam, lamt, d * (x @ x), z, gamma, 0.2, d, ERF, ERF)
        weight_update(W, Wt, x, z, gamma, 0.2, ERF, ERF)
        after = overlaps_of(W, Wt)
        np.testing.assert_allclose(Q, after.Q, atol=1e-12)
        np.testing.assert_allclose(M, after.M, atol=1e-12)


@pytest.mark.parametrize("act", [ERF, SQUARE])
def test_driven_mode_equivalence(act):
    """Overlap-space updates fed the weight-space samples reproduce its overlaps."""
    rng = np.random.default_rng(0)
    d, p, k, gamma, delta = 12, 3, 2, 0.4, 0.05
    W, Wt = 0.5 * rng.standard_normal((p, d)), rng.standard_normal((k, d))
    st = overlaps_of(W, Wt)
    Q, M, P = np.array(st.Q), np.array(st.M), st.P
    for _ in range(1000):
        x, z = rng.standard_normal(d) / np.sqrt(d), rng.standard_normal()
        overlap_update(Q, M, W @ x, Wt @ x, d * (x @ x), z, gamma, delta, d, act, act)
        weight_update(W, Wt, x, z, gamma, delta, act, act)
    final = overlaps_of(W, Wt, P)
    np.testing.assert_allclose(Q, final.Q, atol=1e-10)
    np.testing.assert_allclose(M, final.M, atol=1e-10)


@pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernel not built")
class TestKernelParity:
    @pytest.mark.parametrize("name", ["erf", "square", "square-clip3"])
    def test_weight_kernel(self, name):
        act = Activation.from_name(name)
        rng = np.random.default_rng(1)
        W, Wt = 0.3 * rng.standard_normal((4, 30)), rng.standard_normal((2, 30))
        X, z = rng.standard_normal((500, 30)) / np.sqrt(30), rng.standard_normal(500)
        W1, W2 = W.copy(), W.copy()
        assert kernels.weight_steps(W1, Wt, X, z, 0.3, 0.1, act, act, backend="compiled") == (0, 500)
        assert kernels.weight_steps(W2, Wt, X, z, 0.3, 0.1, act, act, backend="python") == (0, 500)
        np.testing.assert_allclose(W1, W2, atol=1e-12)

    @pytest.mark.parametrize("name", ["erf", "square", "square-clip3"])
    @pytest.mark.parametrize("d", [4, 40])
    def test_overlap_kernel(self, name, d):
        act = Activation.from_name(name)
        rng = np.random.default_rng(2)
        st = random_state(rng, p=4, k=2, d=d, spread=(0.2, 0.5))
        n = 300
        G = rng.standard_normal((n, 6))
        chi = rng.chisquare(d - 6, n) if d > 6 else np.zeros(n)
        z = rng.standard_normal(n)
        out = []
        for backend in ("compiled", "python"):
            Q, M = np.array(st.Q), np.array(st.M)
            assert kernels.overlap_steps(Q, M, st.P, G, chi, z, 0.2, 0.05, d, act, act,
                                         backend=backend) == (0, n)
            out.append((Q, M))
        np.testing.assert_allclose(out[0][0], out[1][0], atol=1e-11)
        np.testing.assert_allclose(out[0][1], out[1][1], atol=1e-11)


def _pre_activations(state, G):
    """Pre-activations and ``d |x|^2`` (sampled subspace only) for many draws from one state."""
    p = state.p
    L = pivoted_cholesky(state.omega())
    lam_all = G[:, :L.shape[1]] @ L.T
    lam, lamt = lam_all[:, :p], lam_all[:, p:]
    s = np.sum(G * G, axis=1)
    return lam, lamt, s


def test_batched_increment_helper_matches_kernel(rng):
    st = random_state(rng)
    G, z = rng.standard_normal((5, 5)), rng.standard_normal(5)
    d, gamma, delta = 10**5, 0.5, 0.1
    lam, lamt, s = _pre_activations(st, G)
    for t in range(5):
        Q1, M1 = np.array(st.Q), np.array(st.M)
        kernels.overlap_steps(Q1, M1, st.P, G[t:t + 1], np.array([0.0]), z[t:t + 1], gamma, delta, d,
                              ERF, ERF, backend="python")
        Q2, M2 = np.array(st.Q), np.array(st.M)
        overlap_update(Q2, M2, lam[t], lamt[t], s[t], z[t], gamma, delta, d, ERF, ERF)
        np.testing.assert_allclose(Q1, Q2, atol=1e-14)
        np.testing.assert_allclose(M1, M2, atol=1e-14)


@pytest.mark.slow
def test_one_step_drift_consistency():
    """Averaged one-step increments over the time step equal the drifts."""
    d, gamma, delta, n = 10**5, 0.5, 0.1, 1_000_000
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(40 + seed)
        st = random_state(rng)
        p = st.p
        G, z = rng.standard_normal((n, p + st.k)), rng.standard_normal(n)
        lam, lamt, s = _pre_activations(st, G)
        s = s + rng.chisquare(d - p - st.k, n)
        err = ERF.sigma(lamt).mean(1) - ERF.sigma(lam).mean(1) + np.sqrt(delta) * z
        dse = ERF.dsigma(lam) * err[:, None]
        # increments divided by dt = gamma / (p d)
        dM = dse[:, :, None] * lamt[:, None, :]
        cross = dse[:, :, None] * lam[:, None, :]
        dQ = cross + cross.transpose(0, 2, 1) + (gamma / p) * (s / d)[:, None, None] * (
            dse[:, :, None] * dse[:, None, :])
        want_m = psi_m(st, ERF)
        want_q = psi_gf(st, ERF) + (gamma / p) * psi_var(st, ERF, delta=delta)
        for samples, want in ((dM, want_m), (dQ, want_q)):
            mean = samples.mean(0)
            se = samples.std(0, ddof=1) / np.sqrt(n)
            z_scores = np.abs(mean - want) / se
            worst = max(worst, float(z_scores.max()))
    assert worst < 3.0, worst


class TestRunSgd:
    def test_zero_horizon(self):
        tr = run_sgd(cfg(T=0.0))
        assert len(tr) == 1 and tr.times[0] == 0.0 and tr.meta["steps"] == 0

    def test_step_count(self):
        assert step_count(1.0, 0.05, 10, 100) == 20_000
        assert step_count(0.3, 0.1, 1, 1) == 3

    @pytest.mark.parametrize("mode", ["weight", "overlap"])
    def test_reproducible(self, mode):
        a = run_sgd(cfg(mode=mode))
        b = run_sgd(cfg(mode=mode))
        assert np.array_equal(a.risks, b.risks)
        c = run_sgd(cfg(mode=mode, seed=5))
        assert not np.array_equal(a.risks, c.risks)

    @pytest.mark.parametrize("mode", ["weight", "overlap"])
    def test_chunking_does_not_change_results(self, mode, monkeypatch):
        a = run_sgd(cfg(mode=mode))
        monkeypatch.setattr(sgd, "_CHUNK_ELEMS", 7)
        b = run_sgd(cfg(mode=mode))
        assert np.array_equal(a.risks, b.risks)
        assert all(np.array_equal(x.omega(), y.omega()) for x, y in zip(a.snapshots, b.snapshots))

    def test_backends_agree(self):
        a = run_sgd(cfg(mode="overlap"), backend="python")
        b = run_sgd(cfg(mode="overlap"))
        np.testing.assert_allclose(a.risks, b.risks, atol=1e-10)

    def test_budget_truncation(self):
        tr = run_sgd(cfg(T=5.0, step_budget=100))
        assert tr.meta["truncated"] and tr.meta["steps"] == 100
        assert tr.times[-1] == pytest.approx(100 * 0.5 / 60)

    def test_record_times(self):
        tr = run_sgd(cfg(T=1.0), record_times=[0.25, 0.5, 1.0])
        np.testing.assert_allclose(tr.times, [0.0, 0.25, 0.5, 1.0])

    def test_boundedness_violation(self):
        with pytest.raises(BoundednessViolation) as info:
            run_sgd(cfg(bound_K=0.5).replace(**{"init.sigma0": 1.0}))
        assert len(info.value.partial) >= 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self):
        c = cfg(activation="square", gamma=50.0, T=200.0, d=5, p=2, k=1, mode="weight",
                bound_K=float("inf"))
        with pytest.raises(DivergenceError) as info:
            run_sgd(c)
        assert info.value.t is not None and info.value.partial is not None

    def test_max_q_monitor(self):
        tr = run_sgd(cfg())
        qmax = [float(np.max(np.diag(s.Q))) for s in tr.snapshots]
        np.testing.assert_allclose(tr.extra["max_Q_diag"], qmax)

    def test_risk_decreases_in_specialization_setup(self):
        tr = run_sgd(ExperimentConfig(k=2, p=10, d=100, gamma=0.05, activation="erf", T=10.0, seed=1))
        assert tr.risks[-1] < tr.risks[0]

    def test_noise_raises_the_floor(self):
        risks = []
        for delta in (1e-3, 1e-1):
            tr = run_sgd(cfg(delta=delta, T=5.0, p=2, k=1))
            risks.append(tr.risks[-1])
            assert np.all(tr.risks > delta / 2)
        assert risks[0] < risks[1]
