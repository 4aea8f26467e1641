"""Acceptance suite: one test per release criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (run with ``-s`` or
``-rA`` to see them) and asserts the same condition.  Heavy artifacts
(benchmark runs, particle truths) are computed once in session fixtures.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats as scipy_stats
from scipy.linalg import cholesky, eigh

from hgmm import (
    EngineConfig,
    NO_NOISE,
    Gaussian,
    HybridMixand,
    HybridMixture,
    ReductionConfig,
    anticipate,
    assess_linearity,
    apply_split,
    isd_terms,
    mixture_moments,
    normalize,
    reduce_mixture,
)
from hgmm.benchmark import run_benchmark
from hgmm.evaluation import (
    TrackObservations,
    eote,
    log_likelihood,
    mixture_pdf_points,
    nll,
    propagate_particles,
    sample_particles,
)
from hgmm.models import BicycleModel, builtin_network
from hgmm.sigma import generate_sigma_points
from hgmm.splitting import qp_kkt_residual, qp_matrices, simplex_qp

from test_linearity import lstsq_residual
from test_splitting import objective, projected_gradient_qp

BENCH_SEED = 7
BENCH_SAMPLES = 100


def check(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    print(line)
    assert ok, line


def single(gaussian, alpha, w=1.0):
    return HybridMixture((HybridMixand(w, alpha, gaussian),))


# ---------------------------------------------------------------------------
# shared heavy artifacts
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def ungm_no_split():
    t0 = time.perf_counter()
    res = run_benchmark("ungm", BENCH_SAMPLES, BENCH_SEED, None)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cubic_no_split():
    return run_benchmark("cubic", BENCH_SAMPLES, BENCH_SEED, None)


def scenario_config(e_res_max, horizon=3.5, cap=10):
    return EngineConfig(
        e_res_max=e_res_max,
        split_n=5,
        split_sigma=0.3,
        max_split_depth=2,
        reduction=ReductionConfig(cap),
        dt=0.1,
        horizon=horizon,
        normalization="raw",
    )


SCENARIOS = {
    "straight": ("main", [20.0, 0.0, 9.0, 0.0], [0.5, 0.3, 0.4, 0.01]),
    "turn": ("approach", [20.0, 0.0, 9.0, 0.0], [2.0, 2.0, 2.0, 0.1]),
    "intersection": ("approach", [20.0, 0.0, 9.0, 0.0], [2.0, 2.0, 2.0, 0.1]),
}


def scenario_initial(name):
    alpha, mean, var = SCENARIOS[name]
    return single(Gaussian(np.array(mean), np.diag(var)), alpha)


@pytest.fixture(scope="session")
def scenario_nll(lib):
    """Per-scenario NLL curves at e_res_max 0.1 and infinity vs particle truth."""
    t0 = time.perf_counter()
    out = {}
    for name in SCENARIOS:
        model = BicycleModel(builtin_network(name))
        initial = scenario_initial(name)
        frames = {
            key: anticipate(initial, model, scenario_config(e), lib)
            for key, e in (("tight", 0.1), ("loose", np.inf))
        }
        ps = sample_particles(initial, 100_000, seed=11)
        particle_frames = propagate_particles(ps, model, 35, seed=12)
        curves = {k: nll(f, particle_frames) for k, f in frames.items()}
        # Paired per-particle standard error of the mean NLL difference.
        diffs = np.zeros(ps.count)
        for f_t, f_l, pf in zip(frames["tight"], frames["loose"], particle_frames):
            lt = np.log(np.clip(mixture_pdf_points(f_t, pf.states), 1e-300, None))
            ll = np.log(np.clip(mixture_pdf_points(f_l, pf.states), 1e-300, None))
            diffs += (ll - lt) / len(particle_frames)
        se = float(diffs.std(ddof=1) / math.sqrt(ps.count))
        out[name] = {"curves": curves, "se": se, "frames": frames}
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# criteria 1-4: univariate benchmark
# ---------------------------------------------------------------------------

def test_criterion_01_ungm_no_split_kld(ungm_no_split):
    res, elapsed = ungm_no_split
    mean = float(res.no_split_kld.mean())
    ok = 0.45 <= mean <= 0.75 and elapsed < 30.0
    check(1, ok, f"UNGM no-split mean KLD {mean:.4f} in [0.45, 0.75], {elapsed:.1f} s < 30 s")


def test_criterion_02_cubic_no_split_kld(cubic_no_split):
    mean = float(cubic_no_split.no_split_kld.mean())
    check(2, 1.0 <= mean <= 2.0, f"cubic no-split mean KLD {mean:.4f} in [1.0, 2.0]")


def test_criterion_03_splitting_benefit(lib):
    moderate = run_benchmark("ungm", BENCH_SAMPLES, BENCH_SEED, lib,
                             split_n=5, split_sigma=0.5)
    aggressive = run_benchmark("ungm", BENCH_SAMPLES, BENCH_SEED, lib,
                               split_n=9, split_sigma=0.2)
    r_mod = float(moderate.split_kld.mean() / moderate.no_split_kld.mean())
    r_agg = float(aggressive.split_kld.mean() / aggressive.no_split_kld.mean())
    ok = r_mod <= 0.6 and r_agg <= 0.25
    check(3, ok, f"split/no-split KLD ratio {r_mod:.3f} <= 0.6 (sigma 0.5), "
                 f"{r_agg:.3f} <= 0.25 (N=9, sigma 0.2)")


def test_criterion_04_residual_kld_correlation(ungm_no_split, cubic_no_split):
    r_ungm = ungm_no_split[0].correlation
    r_cubic = cubic_no_split.correlation
    ok = r_ungm >= 0.6 and r_cubic >= 0.35
    check(4, ok, f"pearson(e_res, KLD) ungm {r_ungm:.3f} >= 0.6, cubic {r_cubic:.3f} >= 0.35")


# ---------------------------------------------------------------------------
# criterion 5: linearity metric exactness
# ---------------------------------------------------------------------------

def test_criterion_05_linearity_exactness():
    rng = np.random.default_rng(41)
    worst_affine = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        a = rng.normal(size=(n, n))
        b = rng.normal(size=n)
        g = Gaussian(rng.normal(size=n), np.diag(rng.uniform(0.5, 2.0, n)))
        pts = generate_sigma_points(g, NO_NOISE).state_points
        rep = assess_linearity(pts, pts @ a.T + b, normalization="raw")
        worst_affine = max(worst_affine, rep.e_res)
    worst_gap = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        pre = rng.normal(size=(2 * n + 1, n))
        post = np.tanh(pre) + 0.3 * pre**2
        rep = assess_linearity(pre, post, normalization="raw")
        worst_gap = max(worst_gap, abs(rep.e_res - lstsq_residual(pre, post)))
    ok = worst_affine < 1e-9 and worst_gap < 1e-8
    check(5, ok, f"affine e_res max {worst_affine:.2e} < 1e-9, "
                 f"LQ vs normal-equations gap {worst_gap:.2e} < 1e-8")


# ---------------------------------------------------------------------------
# criterion 6: split application correctness
# ---------------------------------------------------------------------------

def test_criterion_06_split_correctness(lib, random_spd):
    rng = np.random.default_rng(43)
    split = lib.get(5, 0.3)
    worst_ratio, worst_var, exact_weights = 0.0, 0.0, True
    for _ in range(1000):
        cov = random_spd(rng, 2)
        parent = HybridMixand(1.0, "s", Gaussian(rng.normal(size=2), cov))
        axis = rng.normal(size=2)
        axis /= np.linalg.norm(axis)
        children = apply_split(parent, axis, split)
        exact_weights &= sum(c.weight for c in children) == parent.weight
        va = float(axis @ cov @ axis)
        for c in children:
            ratio = float(axis @ c.gaussian.cov @ axis) / va
            worst_var = max(worst_var, abs(ratio - split.sigma**2))
        _, _, _, j = isd_terms(parent.gaussian, [(c.weight, c.gaussian) for c in children])
        worst_ratio = max(worst_ratio, j / split.isd)
    ok = worst_ratio <= 3.0 and exact_weights and worst_var < 1e-9
    check(6, ok, f"1000 splits: ISD/stored max {worst_ratio:.3f} <= 3, weights exact, "
                 f"axis-variance factor error {worst_var:.2e} < 1e-9")


# ---------------------------------------------------------------------------
# criterion 7: QP solver quality on all library entries
# ---------------------------------------------------------------------------

def test_criterion_07_qp_quality(lib):
    worst_kkt, worst_obj = 0.0, 0.0
    for split in lib.entries.values():
        offsets = split.offsets()
        h, f = qp_matrices(offsets, split.sigma)
        w = simplex_qp(h, f)
        worst_kkt = max(worst_kkt, qp_kkt_residual(h, f, w))
        w_ref = projected_gradient_qp(h, f)
        worst_obj = max(worst_obj, objective(h, f, w) - objective(h, f, w_ref))
    ok = worst_kkt < 1e-8 and worst_obj < 1e-9
    check(7, ok, f"library QP: KKT max {worst_kkt:.2e} < 1e-8, "
                 f"objective excess over oracle {worst_obj:.2e} < 1e-9")


# ---------------------------------------------------------------------------
# criterion 8: engine degeneracy vs hand-rolled unscented predictor
# ---------------------------------------------------------------------------

def _reference_unscented_moments(g, alpha, model, lam):
    n_x, n_v = model.n_x, model.n_v
    n = n_x + n_v
    gamma = math.sqrt(n + lam)
    s_x = cholesky(0.5 * (g.cov + g.cov.T), lower=True)
    count = 1 + 2 * n
    chi = np.tile(g.mean, (count, 1))
    ups = np.zeros((count, n_v))
    for j in range(n_x):
        chi[1 + j] = g.mean + gamma * s_x[:, j]
        chi[1 + n_x + j] = g.mean - gamma * s_x[:, j]
    if n_v:
        ncov = model.process_noise.cov
        s_v = cholesky(0.5 * (ncov + ncov.T), lower=True)
        for j in range(n_v):
            ups[1 + 2 * n_x + j] = gamma * s_v[:, j]
            ups[1 + 2 * n_x + n_v + j] = -gamma * s_v[:, j]
    pts = np.asarray(model.f_c_batch(alpha, chi, ups), dtype=float)
    wm = np.full(count, 1.0 / (2.0 * (lam + n)))
    wm[0] = lam / (lam + n)
    wc = wm.copy()
    wc[0] = lam / (lam + n) + 2.0
    mean = wm @ pts
    d = pts - mean
    cov = (d * wc[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov).min() < 0.0:
        w_, v_ = eigh(cov)
        cov = (v_ * np.clip(w_, 0.0, None)) @ v_.T
        cov = 0.5 * (cov + cov.T)
    return mean, cov


def _reference_predict(mix, model, steps, lam):
    frames = []
    current = list(mix.mixands)
    for _ in range(steps):
        fanned = []
        for m in current:
            for alpha, p in model.discrete_successors(m.discrete, m.gaussian):
                if p > 0.0:
                    fanned.append((m.weight * p, alpha, m.gaussian))
        propagated = []
        for w, alpha, g in fanned:
            mean, cov = _reference_unscented_moments(g, alpha, model, lam)
            propagated.append(HybridMixand(w, alpha, Gaussian(mean, cov)))
        total = sum(m.weight for m in propagated)
        current = [
            HybridMixand(m.weight / total, m.discrete, m.gaussian) for m in propagated
        ]
        frames.append(current)
    return frames


def test_criterion_08_engine_degeneracy():
    model = BicycleModel(builtin_network("intersection"))
    initial = single(Gaussian(np.array([30.0, 0.0, 9.0, 0.0]),
                              np.diag([1.0, 1.0, 1.0, 0.05])), "approach")
    cfg = EngineConfig(
        e_res_max=np.inf, reduction=ReductionConfig(1000), dt=0.1, horizon=2.0,
        normalization="raw",
    )
    lam = 3.0 - (model.n_x + model.n_v)
    got = anticipate(initial, model, cfg)
    ref = _reference_predict(initial, model, cfg.n_steps, lam)
    worst = 0.0
    branched = False
    for frame, ref_frame in zip(got, ref):
        assert len(frame.mixands) == len(ref_frame)
        branched |= len(ref_frame) >= 3
        for a, b in zip(frame.mixands, ref_frame):
            assert a.discrete == b.discrete
            worst = max(
                worst,
                abs(a.weight - b.weight),
                float(np.abs(a.gaussian.mean - b.gaussian.mean).max()),
                float(np.abs(a.gaussian.cov - b.gaussian.cov).max()),
            )
    ok = worst < 1e-12 and branched
    check(8, ok, f"e_res_max=inf vs reference unscented predictor: "
                 f"max deviation {worst:.2e} < 1e-12 over {len(got)} frames")


# ---------------------------------------------------------------------------
# criterion 9: scenario NLL trends vs particle truth
# ---------------------------------------------------------------------------

def test_criterion_09_scenario_trends(scenario_nll):
    results, elapsed = scenario_nll
    turn = results["turn"]["curves"]
    inter = results["intersection"]["curves"]
    straight = results["straight"]
    d_turn = float(turn["loose"].mean() - turn["tight"].mean())
    d_inter = float(inter["loose"].mean() - inter["tight"].mean())
    d_straight = float(
        straight["curves"]["loose"].mean() - straight["curves"]["tight"].mean()
    )
    hyp_max = max(
        len(f.mixands) for f in scenario_nll[0]["intersection"]["frames"]["tight"]
    )
    branch_ok = any(
        len({m.discrete for m in f.mixands}) >= 3
        for f in scenario_nll[0]["intersection"]["frames"]["tight"]
    )
    ok = (
        d_turn > 0.0
        and d_inter > 0.0
        and abs(d_straight) <= 2.0 * straight["se"]
        and branch_ok
        and elapsed < 300.0
    )
    check(9, ok, f"NLL(inf)-NLL(0.1): turn {d_turn:+.4f} > 0, intersection {d_inter:+.4f} > 0, "
                 f"straight |{d_straight:+.5f}| <= 2*SE ({2 * straight['se']:.5f}); "
                 f"intersection max {hyp_max} mixands (>= 3 hypotheses); {elapsed:.0f} s < 300 s")


# ---------------------------------------------------------------------------
# criterion 10: reduction invariants
# ---------------------------------------------------------------------------

def test_criterion_10_reduction_invariants(random_spd):
    rng = np.random.default_rng(47)
    weights = rng.dirichlet(np.ones(100))
    alphas = ("a", "b", "c")
    mixands = [
        HybridMixand(
            float(w),
            alphas[rng.integers(3)],
            Gaussian(rng.normal(size=2), random_spd(rng, 2)),
        )
        for w in weights
    ]
    mix = normalize(mixands)
    out = reduce_mixture(mix, ReductionConfig(10))
    m0, c0 = mixture_moments(mix)
    m1, c1 = mixture_moments(out)
    moment_err = max(float(np.abs(m0 - m1).max()), float(np.abs(c0 - c1).max()))
    label_ok = True
    for alpha in alphas:
        w_in = sum(m.weight for m in mix.mixands if m.discrete == alpha)
        w_out = sum(m.weight for m in out.mixands if m.discrete == alpha)
        label_ok &= abs(w_in - w_out) < 1e-9
    ok = len(out) == 10 and moment_err < 1e-9 and label_ok
    check(10, ok, f"100 -> 10 reduction: moment error {moment_err:.2e} < 1e-9, "
                  f"per-hypothesis weight conserved")


# ---------------------------------------------------------------------------
# criterion 11: performance
# ---------------------------------------------------------------------------

def test_criterion_11_performance(lib):
    model = BicycleModel(builtin_network("turn"))
    initial = single(
        Gaussian(np.array([20.0, 0.0, 9.0, 0.0]), np.diag([1.0, 1.0, 1.0, 0.05])),
        "approach",
    )

    def run_once(e_res_max, cap):
        cfg = scenario_config(e_res_max, horizon=4.5, cap=cap)
        t0 = time.perf_counter()
        anticipate(initial, model, cfg, lib)
        return time.perf_counter() - t0

    run_once(0.1, 10)                       # warm-up (JIT-free, but caches page in)
    elapsed = min(run_once(0.1, 10) for _ in range(3))
    print("\ntime vs (e_res_max, cap) grid, 4.5 s horizon, split depth 2:")
    print(f"{'e_res_max':>10} {'cap=5':>9} {'cap=10':>9} {'cap=20':>9}")
    for e in (np.inf, 0.2, 0.1, 0.05):
        cells = [run_once(e, cap) for cap in (5, 10, 20)]
        print(f"{e:>10} " + " ".join(f"{1e3 * c:>7.1f}ms" for c in cells))
    check(11, elapsed < 0.333,
          f"4.5 s horizon anticipation in {1e3 * elapsed:.1f} ms < 333 ms")


# ---------------------------------------------------------------------------
# criterion 12: self-consistency on synthetic tracks
# ---------------------------------------------------------------------------

def test_criterion_12_synthetic_track_consistency(lib):
    model = BicycleModel(builtin_network("turn"))
    # Wider than the criterion-9 prior so that nonlinearity still trips the
    # intermediate 0.2 residual threshold.
    initial = single(
        Gaussian(np.array([20.0, 0.0, 9.0, 0.0]), np.diag([2.0, 2.0, 4.0, 0.15])),
        "approach",
    )
    frames = {
        e: anticipate(initial, model, scenario_config(e), lib) for e in (0.1, 0.2, 1.0)
    }
    times = 0.1 * np.arange(1, 36)
    ll = {0.1: [], 1.0: []}
    for track in range(40):
        ps = sample_particles(initial, 1, seed=100 + track)
        track_frames = propagate_particles(ps, model, 35, seed=500 + track)
        obs = TrackObservations(times, np.array([f.states[0, :2] for f in track_frames]))
        for e in (0.1, 1.0):
            ll[e].append(log_likelihood(frames[e], obs, dt=0.1))
    t_stat, p = scipy_stats.ttest_rel(ll[0.1], ll[1.0], alternative="greater")
    eotes = {
        e: eote(frames[e], model.network, ["approach", "turn", "exit"], seed=21)
        for e in frames
    }
    ok = p < 0.05 and eotes[0.1] < eotes[1.0] and eotes[0.2] < eotes[1.0]
    check(12, ok, f"40 tracks: mean LL {np.mean(ll[0.1]):.2f} vs {np.mean(ll[1.0]):.2f}, "
                  f"one-sided p={p:.2e} < 0.05; EOTE {eotes[0.1]:.2f} / {eotes[0.2]:.2f} "
                  f"(e_res_max 0.1 / 0.2) < {eotes[1.0]:.2f} (1.0)")
