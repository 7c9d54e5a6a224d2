"""End-to-end acceptance suite.

Each test prints a single machine-greppable pass/fail line before its
assertions.  Heavy training runs are shared through session fixtures;
everything is deterministic, so reruns reproduce the same numbers.
Full paper-scale forward bands run only when RUN_FULL=1 is set.
"""
import math
import os

import numpy as np
import pytest

from diffsmib import autodiff as ad
from diffsmib import bench, dpident, lqr, mlp, node, pinn
from diffsmib.integrate import IntegratorConfig, TimeGrid, integrate, rk4_step
from diffsmib.smib import (
    LinearModel,
    SmibParams,
    State,
    equilibrium,
    linearize,
    swing_field,
    vector_field,
)

OSC = bench.SCENARIOS["oscillatory"]
STABLE = bench.SCENARIOS["stable"]
CRIT5_SEEDS = (0, 1, 2)
THETA_TOL = 1e-2


def report(num: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}")


def _rel_close(g, fd, rel=1e-4, abs_tol=1e-7) -> bool:
    return abs(g - fd) <= max(rel * abs(fd), abs_tol)


# ---------------------------------------------------------------- criterion 1


def test_criterion_01_gradient_fidelity():
    rng = np.random.default_rng(20260826)
    checks = []

    # scalar tape over random composite expressions (60 cases)
    for _ in range(60):
        v = float(rng.uniform(-1.5, 1.5))
        tape = ad.Tape()
        x = tape.variable(v)
        y = ad.sin(x * 1.3) * ad.exp(-x * x) + ad.softplus(x) / (2.0 + ad.cos(x))
        g = ad.backward(tape, y)[x]
        h = 1e-6

        def f(z):
            softplus = math.log1p(math.exp(-abs(z))) + max(z, 0.0)
            return math.sin(z * 1.3) * math.exp(-z * z) \
                + softplus / (2.0 + math.cos(z))

        fd = (f(v + h) - f(v - h)) / (2 * h)
        checks.append(_rel_close(g, fd))

    # reverse-over-forward through the swing dynamics RK4 step (40 cases)
    for _ in range(40):
        m_v = float(rng.uniform(0.05, 0.5))
        x0 = (float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5)))
        tape = ad.Tape()
        m = tape.variable(m_v)
        step = rk4_step(lambda t, x, u: swing_field(m, 0.01, 1.0, x, u),
                        0.0, x0, 0.02, 0.5)
        d_dt = swing_field(m, 0.01, 1.0,
                           (ad.Dual(x0[0], 1.0), x0[1]), 0.5)[1]
        out = step[1] + d_dt.tangent if isinstance(d_dt, ad.Dual) else step[1]
        g = ad.backward(tape, out)[m]
        h = 1e-6

        def f(mv):
            s = rk4_step(lambda t, x, u: swing_field(mv, 0.01, 1.0, x, u),
                         0.0, x0, 0.02, 0.5)
            d = swing_field(mv, 0.01, 1.0, (ad.Dual(x0[0], 1.0), x0[1]), 0.5)[1]
            return s[1] + d.tangent

        fd = (f(m_v + h) - f(m_v - h)) / (2 * h)
        checks.append(_rel_close(g, fd))

    # batched MLP VJP coordinates (40 cases)
    cfg = mlp.MlpConfig(2, 2, hidden=(6, 5))
    params = mlp.init(cfg, seed=0)
    X = rng.standard_normal((5, 2))
    GY = rng.standard_normal((5, 2))
    _, hs = mlp.forward_batch(params, X)
    gWs, gbs, _ = mlp.vjp_batch(params, hs, GY)
    flat_g = mlp.MlpParams(cfg, gWs, gbs).flatten()
    flat0 = params.flatten()

    def mlp_scalar(flat):
        Y, _ = mlp.forward_batch(mlp.MlpParams.from_flat(cfg, flat), X)
        return float(np.sum(Y * GY))

    for i in rng.choice(flat0.size, size=40, replace=False):
        e = np.zeros_like(flat0)
        e[i] = 1e-6
        fd = (mlp_scalar(flat0 + e) - mlp_scalar(flat0 - e)) / 2e-6
        checks.append(_rel_close(flat_g[i], fd))

    # NODE three-step rollout BPTT coordinates (30 cases)
    ncfg = mlp.MlpConfig(2, 2, hidden=(8,))
    nparams = mlp.init(ncfg, seed=1)
    X0 = rng.standard_normal((3, 2)) * 0.3
    targets = rng.standard_normal((3, 3, 2)) * 0.3
    _, g_node = node.loss_and_grad(nparams, X0, None, targets, 0.05)
    nflat0 = nparams.flatten()

    def node_scalar(flat):
        preds, _ = node.rollout_batch(mlp.MlpParams.from_flat(ncfg, flat),
                                      X0, None, 3, 0.05)
        return node.segment_loss(preds, targets)

    for i in rng.choice(nflat0.size, size=30, replace=False):
        e = np.zeros_like(nflat0)
        e[i] = 1e-6
        fd = (node_scalar(nflat0 + e) - node_scalar(nflat0 - e)) / 2e-6
        checks.append(_rel_close(g_node[i], fd))

    # DP identification loss (10 cases x 2 parameters)
    data = bench.reference_trajectory(OSC).window(0.0, 2.0)
    for _ in range(10):
        raw = rng.uniform(-1.0, 1.0, 2)
        starts = rng.integers(0, len(data) - 6, size=4)
        mdl = dpident.DpModel(raw[0], raw[1], OSC.params.E, OSC.params.Vinf,
                              OSC.params.X, OSC.params.Pm)
        _, g = dpident.loss_and_grad(mdl, data, starts, 5, 0.02)
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1e-6
            lp, _ = dpident.loss_and_grad(
                dpident.DpModel(*(raw + e), OSC.params.E, OSC.params.Vinf,
                                OSC.params.X, OSC.params.Pm),
                data, starts, 5, 0.02)
            lm, _ = dpident.loss_and_grad(
                dpident.DpModel(*(raw - e), OSC.params.E, OSC.params.Vinf,
                                OSC.params.X, OSC.params.Pm),
                data, starts, 5, 0.02)
            checks.append(_rel_close(g[k], (lp - lm) / 2e-6))

    # PINN total loss coordinates (30 net params + both raw thetas x 5)
    pcfg_net = mlp.MlpConfig(1, 2, hidden=(5, 4))
    pparams = mlp.init(pcfg_net, seed=2)
    ts = rng.uniform(0.0, 10.0, size=10)
    pcfg = pinn.PinnConfig(lambda_d=1.0, lambda_i=2.0, epochs=1)
    x0 = State(0.1, 0.1)
    raw = np.array([0.2, -0.3])
    model = pinn.PinnModel(pparams.copy(), theta_m_raw=raw[0], theta_d_raw=raw[1])
    _, g_net, g_raw = pinn.total_loss_and_grad(model, OSC.params, ts, data, x0, pcfg)
    pflat0 = pparams.flatten()

    def pinn_scalar(flat, rw):
        m = pinn.PinnModel(mlp.MlpParams.from_flat(pcfg_net, flat),
                           theta_m_raw=rw[0], theta_d_raw=rw[1])
        return pinn.total_loss(m, OSC.params, ts, data, x0, pcfg)

    for i in rng.choice(pflat0.size, size=30, replace=False):
        e = np.zeros_like(pflat0)
        e[i] = 1e-6
        fd = (pinn_scalar(pflat0 + e, raw) - pinn_scalar(pflat0 - e, raw)) / 2e-6
        checks.append(_rel_close(g_net[i], fd))
    for k in range(2):
        for _ in range(5):
            e = np.zeros(2)
            e[k] = 1e-6
            fd = (pinn_scalar(pflat0, raw + e) - pinn_scalar(pflat0, raw - e)) / 2e-6
            checks.append(_rel_close(g_raw[k], fd))

    n_ok = sum(checks)
    ok = n_ok == len(checks) and len(checks) >= 200
    report(1, ok, f"gradient fidelity {n_ok}/{len(checks)} cases within 1e-4")
    assert len(checks) >= 200
    assert n_ok == len(checks)


# ---------------------------------------------------------------- criterion 2


def test_criterion_02_integrator_suite():
    def endpoint_error(h):
        n = int(round(1.0 / h))
        x = (1.0,)
        for i in range(n):
            x = rk4_step(lambda t, xx, u: (-xx[0],), i * h, x, h)
        return abs(x[0] - math.exp(-1.0))

    hs = [0.1, 0.05, 0.025, 0.0125]
    errs = [endpoint_error(h) for h in hs]
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])

    max_gap = 0.0
    for sc in (STABLE, OSC):
        f = lambda t, x, u: vector_field(sc.params, x)
        adaptive = integrate(f, sc.x0.as_tuple(), sc.grid,
                             IntegratorConfig(rtol=1e-7, atol=1e-9))
        fixed = integrate(f, sc.x0.as_tuple(), sc.grid,
                          IntegratorConfig(method="rk4", dt_init=1e-4))
        for comp in range(2):
            gap = bench.rel_l2(fixed.states[:, comp], adaptive.states[:, comp])
            max_gap = max(max_gap, gap)

    ok = abs(slope - 4.0) <= 0.2 and max_gap <= 1e-6
    report(2, ok, f"rk4 slope {slope:.3f}, dopri5-vs-rk4 gap {max_gap:.3g}")
    assert abs(slope - 4.0) <= 0.2
    assert max_gap <= 1e-6


# ---------------------------------------------------------------- criterion 3


@pytest.fixture(scope="session")
def dp_noisy_runs():
    """DP identification at sigma=0.05 for five seeds (shared with c9)."""
    cfg = dpident.DpTrainConfig(epochs=4000, lr=1e-2, m=10, dt=0.02)
    runs = {}
    for seed in range(5):
        errs, res = bench._identify_dp_trial(OSC, 0.05, seed, cfg, None)
        runs[seed] = (errs, res.model)
    return runs


def test_criterion_03_dp_identification(dp_noisy_runs):
    cfg = dpident.DpTrainConfig(epochs=4000, lr=1e-2, m=10, dt=0.02)
    errs0, _ = bench._identify_dp_trial(OSC, 0.0, 0, cfg, None)
    m_noise = float(np.mean([dp_noisy_runs[s][0]["theta_M"] for s in range(5)]))
    d_noise = float(np.mean([dp_noisy_runs[s][0]["theta_D"] for s in range(5)]))
    ok = (errs0["theta_M"] <= 1e-3 and errs0["theta_D"] <= 5e-2
          and m_noise <= 1e-2 and d_noise <= 1.0)
    report(3, ok,
           f"noiseless theta_M {errs0['theta_M']:.3g} theta_D "
           f"{errs0['theta_D']:.3g}; sigma=0.05 means {m_noise:.3g}/{d_noise:.3g}")
    assert errs0["theta_M"] <= 1e-3
    assert errs0["theta_D"] <= 5e-2
    assert m_noise <= 1e-2
    assert d_noise <= 1.0


# ------------------------------------------------------------- criteria 4 & 5


def _sustained_epoch(theta_hist, true_val, cap):
    """First epoch after which the relative error stays within tolerance."""
    err = np.abs(np.asarray(theta_hist[:cap]) - true_val) / true_val
    bad = np.where(err > THETA_TOL)[0]
    return int(bad[-1] + 1) if len(bad) else 0


@pytest.fixture(scope="session")
def pinn_inverse_runs():
    """Inverse-PINN runs at lr=1e-3, lambda_d=1: seed 0 full-length for c4,
    seeds 1-2 shorter for the c5 convergence comparison."""
    ref = bench.reference_trajectory(OSC)
    train = ref.window(*OSC.train_window)
    runs = {}
    for seed, epochs in ((0, 20000), (1, 8000), (2, 8000)):
        cfg = pinn.PinnConfig(n_c=1000, lambda_d=1.0, lambda_i=2.0,
                              epochs=epochs, lr=1e-3,
                              t_domain=OSC.train_window)
        runs[seed] = pinn.train_pinn(
            OSC.params, train, OSC.x0, cfg,
            int(bench._train_seed(seed).generate_state(1)[0]),
            identify=True, net_cfg=bench.desk_net(1))
    return runs


def test_criterion_04_inverse_pinn(pinn_inverse_runs):
    res = pinn_inverse_runs[0]
    em = abs(res.model.theta_m - OSC.params.M) / OSC.params.M
    ed = abs(res.model.theta_d - OSC.params.D) / OSC.params.D
    ok = em <= 2e-2 and ed <= 2e-1
    report(4, ok, f"inverse-PINN theta_M err {em:.3g}, theta_D err {ed:.3g}")
    assert em <= 2e-2
    assert ed <= 2e-1


def test_criterion_05_convergence_speed(pinn_inverse_runs):
    ref = bench.reference_trajectory(OSC)
    train = ref.window(*OSC.train_window)
    cap = 8000
    pairs = []
    for seed in CRIT5_SEEDS:
        # both identifiers start from the same parameter guess softplus(0)
        init = dpident.DpModel.initial(OSC.params, m0=math.log(2.0),
                                       d0=math.log(2.0))
        cfg = dpident.DpTrainConfig(epochs=6000, lr=1e-3, m=10, dt=0.02)
        dres = dpident.identify(train, OSC.params, cfg,
                                int(bench._train_seed(seed).generate_state(1)[0]),
                                initial=init)
        dp_epoch = _sustained_epoch(dres.theta_m_history, OSC.params.M, cap)
        pinn_epoch = _sustained_epoch(pinn_inverse_runs[seed].theta_m_history,
                                      OSC.params.M, cap)
        pairs.append((seed, dp_epoch, pinn_epoch))
    ok = all(d < p for _, d, p in pairs)
    report(5, ok, "epochs-to-converged (DP vs PINN) " +
           ", ".join(f"seed {s}: {d} < {p}" for s, d, p in pairs))
    for s, d, p in pairs:
        assert d < p, f"seed {s}: DP {d} not faster than PINN {p}"


# ---------------------------------------------------------------- criterion 6


@pytest.fixture(scope="session")
def forward_runs():
    """NODE and reduced-epoch PINN forward errors, 3 seeds, both scenarios."""
    out = {}
    for sc, node_epochs in ((STABLE, 1000), (OSC, 2000)):
        for seed in range(3):
            n_errs, _ = bench._node_forward_trial(
                sc, 0.0, seed, node_epochs, 10, 1e-3, bench.desk_net(2), None)
            p_errs, _ = bench._pinn_forward_trial(
                sc, seed, 3000, 1e-3, 0.0, bench.desk_net(1), None)
            out[(sc.name, seed)] = (n_errs, p_errs)
    return out


def test_criterion_06_forward_ordering(forward_runs):
    lines = []
    ok = True
    for (name, seed), (n_errs, p_errs) in forward_runs.items():
        for comp in ("delta", "omega"):
            if not n_errs[comp] < p_errs[comp]:
                ok = False
        band = 3e-2 if name == "stable" else 1.5e-1
        if not n_errs["delta"] <= band:
            ok = False
        lines.append(f"{name}/s{seed} node {n_errs['delta']:.3g} "
                     f"pinn {p_errs['delta']:.3g}")
    report(6, ok, "; ".join(lines))
    for (name, seed), (n_errs, p_errs) in forward_runs.items():
        for comp in ("delta", "omega"):
            assert n_errs[comp] < p_errs[comp], (name, seed, comp)
        assert n_errs["delta"] <= (3e-2 if name == "stable" else 1.5e-1)


@pytest.mark.skipif(os.environ.get("RUN_FULL") != "1",
                    reason="paper-scale forward bands need RUN_FULL=1 (hours)")
def test_criterion_06_full_scale_bands():
    paper_avg = {"stable": 4.614e-3, "oscillatory": 4.282e-2}
    for name, target in paper_avg.items():
        man = bench.run_experiment("forward-node", list(range(10)),
                                   {"scenario": name}, full=True)
        avg = man["aggregates"]["delta"]["average"]
        report(6, avg <= 3 * target, f"full-scale {name} avg {avg:.3g}")
        assert avg <= 3 * target


# ---------------------------------------------------------------- criterion 7


def test_criterion_07_noise_robustness():
    means = {}
    for sigma in (0.0, 0.01, 0.05):
        errs = [
            bench._node_forward_trial(OSC, sigma, seed, 1000, 10, 1e-3,
                                      bench.desk_net(2), None)[0]["delta"]
            for seed in range(5)
        ]
        means[sigma] = float(np.mean(errs))
    ok = (means[0.0] < means[0.01] < means[0.05] and means[0.05] <= 2.5e-1)
    report(7, ok, "mean delta errors " +
           ", ".join(f"sigma={s:g}: {m:.3g}" for s, m in means.items()))
    assert means[0.0] < means[0.01] < means[0.05]
    assert means[0.05] <= 2.5e-1


# ---------------------------------------------------------------- criterion 8


def test_criterion_08_lqr_synthesis():
    cfg = lqr.LqrConfig()
    worst_res = 0.0
    for p in (OSC.params, STABLE.params, bench.SCENARIOS["control-node"].params):
        lm = linearize(p, equilibrium(p))
        sol = lqr.solve_care(lm, cfg)
        worst_res = max(worst_res,
                        lqr.riccati_residual(lm.A, lm.B, cfg.Q, cfg.R, sol.P))
        assert np.allclose(sol.P, sol.P.T)
        assert np.all(np.linalg.eigvalsh(sol.P) > 0)
        assert np.all(np.linalg.eigvals(lm.A - np.outer(lm.B, sol.K)).real < 0)

    di = LinearModel(np.array([[0.0, 1.0], [0.0, 0.0]]),
                     np.array([0.0, 1.0]), State(0.0, 0.0))
    sol = lqr.solve_care(di, lqr.LqrConfig(Q=np.eye(2), R=1.0),
                         k_seed=np.array([1.0, 1.0]))
    k_err = float(np.max(np.abs(sol.K - [1.0, math.sqrt(3.0)])))
    ok = worst_res <= 1e-8 and k_err <= 1e-10
    report(8, ok, f"worst residual {worst_res:.3g}, analytic gain err {k_err:.3g}")
    assert worst_res <= 1e-8
    assert k_err <= 1e-10


# ---------------------------------------------------------------- criterion 9


def test_criterion_09_dp_closed_loop(dp_noisy_runs):
    result, _, _ = bench.run_lqr_dp(0.1003, 0.0124)
    d1, w1 = result["delta_discrepancy"], result["omega_discrepancy"]

    model = dp_noisy_runs[0][1]
    result2, _, _ = bench.run_lqr_dp(model.theta_m, model.theta_d)
    d2, w2 = result2["delta_discrepancy"], result2["omega_discrepancy"]

    ok = d1 <= 0.01 and w1 <= 0.06 and d2 <= 0.02 and w2 <= 0.1
    report(9, ok, f"paper values {d1:.3g}/{w1:.3g}; "
                  f"pipeline values {d2:.3g}/{w2:.3g}")
    assert d1 <= 0.01 and w1 <= 0.06
    assert d2 <= 0.02 and w2 <= 0.1


# --------------------------------------------------------------- criterion 10


def test_criterion_10_node_closed_loop():
    result, _, lm_node, _ = bench.run_lqr_node(seed=0, epochs=2000)
    ok = (result["A_error"] <= 0.15
          and result["B_error_rel"] <= 0.15
          and result["max_deviation_after_t4"] < 0.01)
    report(10, ok, f"A err {result['A_error']:.3g}, "
                   f"B rel err {result['B_error_rel']:.3g}, "
                   f"max dev t>=4 {result['max_deviation_after_t4']:.3g}, "
                   f"settles by t={result['settling_time_0p01']:.2f}")
    assert result["A_error"] <= 0.15
    assert result["B_error_rel"] <= 0.15
    assert result["max_deviation_after_t4"] < 0.01


# --------------------------------------------------------------- criterion 11


def test_criterion_11_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    overrides = {"epochs": 50, "scenario": "stable"}
    bench.run_experiment("forward-node", [0, 1], overrides, out_dir=a)
    bench.run_experiment("forward-node", [0, 1], overrides, out_dir=b)
    names = sorted(p.name for p in a.glob("*.csv"))
    identical = bool(names) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    report(11, identical, f"{len(names)} CSV artifacts byte-identical on rerun")
    assert identical
