"""End-to-end acceptance checks, one test per criterion.

Criteria 3-6, 9 and 10 train the full desk configuration (``configs/desk.json``)
twice; expect about 25 minutes on one CPU core.  Each test records a
PASS/FAIL line that is printed in the terminal summary.
"""
import filecmp
from pathlib import Path

import numpy as np
import pytest
from scipy.special import log_softmax, logsumexp
from test_calibration import calibrated_set, grid_oracle
from test_metrics import brute_brier_decomposition, quantized_forecasts
from test_nn import gradient_check
from test_ood import exhaustive_best_f1, records

from desot.calibration import fit_temperature
from desot.data import load_dataset
from desot.fusion import CostCounter, de_probs, desot_probs, mc_dropout_probs, round_robin_schedule, sm_probs
from desot.metrics import brier, ece, entropy
from desot.nn import forward, init_model, predict_logits
from desot.ood import fit_threshold
from desot.pipeline import TEMPERATURE_KEY, Manifest, RunConfig, load_run, read_csv, run_all

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.json"
RESULTS = {}


def verdict(number, ok, detail):
    RESULTS[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def random_setup(n=1000, T=11, M=5, d=12, C=7, seed=0):
    rng = np.random.default_rng(seed)
    models = [init_model([d, 16, 8, C], dropout_rate=0.2, seed=seed + m) for m in range(M)]
    frames = rng.normal(size=(n, T, d))
    return models, frames


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    cfgs = []
    for name in ("run_a", "run_b"):
        cfg = RunConfig.load(DESK, out_dir=str(tmp_path_factory.mktemp(name)))
        run_all(cfg)
        cfgs.append(cfg)
    return cfgs


@pytest.fixture(scope="session")
def desk(desk_runs):
    return desk_runs[0]


def numeric_rows(path):
    def convert(value):
        try:
            return float(value)
        except ValueError:
            return value
    return [{k: convert(v) if k not in ("seed", "temp_scaled") else v for k, v in r.items()}
            for r in read_csv(path)]


def mean_rows(path, **match):
    out = {}
    for r in numeric_rows(path):
        if r["seed"] == "mean" and all(r[k] == v for k, v in match.items()):
            out[r["strategy"]] = r
    return out


def test_criterion_1_single_member_equivalence():
    models, frames = random_setup()
    sm = sm_probs(models[0], frames)
    de1 = de_probs(models[:1], frames)
    desot1 = desot_probs(models[:1], frames, round_robin_schedule(frames.shape[1], 1))
    worst = max(np.abs(sm - de1).max(), np.abs(sm - desot1).max())
    verdict(1, worst <= 1e-12, f"max |diff| = {worst:.2e} over {len(frames)} sequences")


def test_criterion_2_forward_pass_counts():
    models, frames = random_setup()
    n = len(frames)
    counts = {}
    for name, run in {
        "sm": lambda c: sm_probs(models[0], frames, c),
        "desot": lambda c: desot_probs(models, frames, round_robin_schedule(11, 5), c),
        "de": lambda c: de_probs(models, frames, c),
        "mcdropout": lambda c: mc_dropout_probs(models[0], frames, [(0, i) for i in range(n)], c),
    }.items():
        counter = CostCounter()
        run(counter)
        counts[name] = counter.forward_passes
    expected = {"sm": 11 * n, "desot": 11 * n, "de": 55 * n, "mcdropout": 11 * n}
    verdict(2, counts == expected, f"counts {counts}, expected {expected}")


def trend_rows(desk, dataset, field):
    """Mean-over-seeds values keyed by strategy, for temp on (judged) and off (reported)."""
    return {scaled: {k: r[field] for k, r in
                     mean_rows(desk.out / "metrics.csv", dataset=dataset, temp_scaled=scaled).items()}
            for scaled in ("on", "off")}


def fmt(values):
    return ", ".join(f"{k} {v:.2f}" for k, v in values.items())


@pytest.mark.slow
def test_criterion_3_accuracy_trend(desk):
    rows = trend_rows(desk, "test", "accuracy")
    acc, base = rows["on"], rows["on"]["sm_single_frame"]
    failures = []
    if not acc["desot"] >= acc["sm"] - 0.1:
        failures.append(f"desot {acc['desot']:.2f} < sm {acc['sm']:.2f} - 0.1")
    if not abs(acc["desot"] - acc["de"]) <= 0.5:
        failures.append(f"|desot - de| = {abs(acc['desot'] - acc['de']):.2f}")
    for s in ("sm", "de", "desot", "mcdropout"):
        if not acc[s] >= base + 1:
            failures.append(f"{s} {acc[s]:.2f} < single frame {base:.2f} + 1")
    detail = f"accuracy +T: {fmt(acc)} | without T: {fmt(rows['off'])}"
    verdict(3, not failures, "; ".join(failures + [detail]))


@pytest.mark.slow
def test_criterion_4_minority_f1(desk):
    rows = trend_rows(desk, "test_minority", "macro_f1")
    f1 = rows["on"]
    detail = (f"minority macro-F1 +T: desot {f1['desot']:.2f} vs sm {f1['sm']:.2f} "
              f"(de {f1['de']:.2f}) | without T: desot {rows['off']['desot']:.2f} vs sm {rows['off']['sm']:.2f}")
    verdict(4, f1["desot"] >= f1["sm"], detail)


def ood_means(desk, scaled="off"):
    rows = [r for r in numeric_rows(desk.out / "ood.csv") if r["temp_scaled"] == scaled]
    out = {}
    for s in {r["strategy"] for r in rows}:
        sel = [r for r in rows if r["strategy"] == s]
        out[s] = {k: float(np.mean([r[k] for r in sel]))
                  for k in ("f1", "mean_entropy_in", "mean_entropy_ood")}
    return out


@pytest.mark.slow
def test_criterion_5_ood_entropy(desk):
    m = ood_means(desk)
    failures = []
    if not m["desot"]["mean_entropy_ood"] > m["sm"]["mean_entropy_ood"]:
        failures.append("desot OOD entropy not above sm")
    failures += [f"{s}: OOD {v['mean_entropy_ood']:.3f} <= in {v['mean_entropy_in']:.3f}"
                 for s, v in m.items() if not v["mean_entropy_ood"] > v["mean_entropy_in"]]
    detail = ", ".join(f"{s} in {v['mean_entropy_in']:.3f}/ood {v['mean_entropy_ood']:.3f}"
                       for s, v in sorted(m.items()))
    verdict(5, not failures, "; ".join(failures) or detail)


@pytest.mark.slow
def test_criterion_6_ood_detection(desk):
    m = ood_means(desk)
    f1 = {s: v["f1"] for s, v in m.items()}
    ok = f1["desot"] >= f1["sm"] and abs(f1["desot"] - f1["de"]) <= 0.02
    verdict(6, ok, f"F1 desot {f1['desot']:.4f}, sm {f1['sm']:.4f}, de {f1['de']:.4f}")


def validation_nll(logit_sets, labels, temp):
    """Mean NLL of the averaged member softmax, written with scipy."""
    logp = log_softmax(np.asarray(logit_sets) / temp, axis=-1)
    fused = logsumexp(logp, axis=0) - np.log(len(logp))
    return -fused[np.arange(len(labels)), labels].mean()


@pytest.mark.slow
def test_criterion_7_calibration(desk):
    manifest = Manifest(desk.out / "manifest.json")
    val = load_dataset(desk.out / "data" / "val.dset")
    X, y = val.features(), val.labels
    failures = []
    for seed in desk.seeds:
        run = load_run(desk, seed, manifest)
        logits = {"sm": [predict_logits(run.members[0], X)],
                  "ensemble": [predict_logits(m, X) for m in run.members],
                  "mcdropout": [predict_logits(run.mc, X)]}
        for strategy in desk.strategies:
            key = TEMPERATURE_KEY[strategy]
            t = manifest["temperatures"][str(seed)][key]["value"]
            fitted, one = validation_nll(logits[key], y, t), validation_nll(logits[key], y, 1.0)
            if not fitted <= one + 1e-9:
                failures.append(f"seed {seed} {strategy}: {fitted:.6f} > {one:.6f}")
    z, labels = calibrated_set(n=20_000, scale=3.0)
    oracle = grid_oracle(z[None], labels)
    value = fit_temperature(z, labels).value
    if not (abs(value - 3) <= 0.05 and abs(oracle - 3) <= 0.05):
        failures.append(f"scale-3 recovery: fit {value:.4f}, grid {oracle:.4f}")
    verdict(7, not failures, "; ".join(failures) or f"NLL reduced everywhere; T(3x) = {value:.4f}, grid {oracle:.4f}")


def test_criterion_8_metric_oracles():
    failures = []
    rng = np.random.default_rng(0)
    m = init_model([5, 7, 4, 3], dropout_rate=0.3, seed=1)
    for b in m.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    X, yy = rng.normal(size=(8, 5)), rng.integers(0, 3, 8)
    _, cache = forward(m, X, "train_with_dropout", rng_seed=3)
    worst = max(gradient_check(m, X, yy), gradient_check(m, X, yy, cache["masks"]))
    if worst > 1e-5:
        failures.append(f"gradient rel err {worst:.2e}")

    for C in (2, 4, 6):
        p = quantized_forecasts(rng, 300, C)
        labels = rng.integers(0, C, 300)
        b = brier(p, labels)
        gap = abs(b.reliability - b.resolution + b.uncertainty - b.score)
        score = brute_brier_decomposition(p, labels, 10)[0]
        if gap > 1e-9 or abs(score - b.score) > 1e-12:
            failures.append(f"brier identity gap {gap:.2e} (C={C})")

    probs, labels = [], []
    for conf, n, n_correct in [(0.7, 10, 7), (0.9, 20, 18), (0.55, 20, 11)]:
        probs += [[conf, 1 - conf]] * n
        labels += [0] * n_correct + [1] * (n - n_correct)
    e = ece(np.array(probs), labels)
    if e > 1e-12:
        failures.append(f"ECE on calibrated set {e:.2e}")

    for C in (2, 20, 1000):
        if abs(entropy(np.full(C, 1.0 / C)) - np.log(C)) > 1e-12:
            failures.append(f"uniform entropy C={C}")

    ood_rng = np.random.default_rng(42)
    for _ in range(100):
        n_in, n_ood = ood_rng.integers(1, 30, size=2)
        h_in = np.round(ood_rng.gamma(2.0, 0.3, n_in), ood_rng.integers(1, 4))
        h_ood = np.round(ood_rng.gamma(3.0, 0.35, n_ood), ood_rng.integers(1, 4))
        split = records(h_in, h_ood, "fit")
        if fit_threshold(split).f1 != exhaustive_best_f1(split.entropies, split.is_ood):
            failures.append("threshold search differs from exhaustive search")
            break
    verdict(8, not failures, "; ".join(failures) or f"all oracles agree (grad rel err {worst:.1e})")


@pytest.mark.slow
def test_criterion_9_noise_sweep(desk):
    rows = [r for r in numeric_rows(desk.out / "sweep.csv") if r["kind"] == "gaussian_noise"]
    top = max(r["severity"] for r in rows)
    failures, parts = [], []
    for s in desk.sweep_strategies:
        lo = next(r for r in rows if r["strategy"] == s and r["severity"] == 0)
        hi = next(r for r in rows if r["strategy"] == s and r["severity"] == top)
        parts.append(f"{s} acc {lo['accuracy']:.1f}->{hi['accuracy']:.1f} "
                     f"H {lo['mean_entropy']:.3f}->{hi['mean_entropy']:.3f}")
        if not (hi["accuracy"] < lo["accuracy"] and hi["mean_entropy"] > lo["mean_entropy"]):
            failures.append(parts[-1])
    verdict(9, not failures, "; ".join(failures) or "; ".join(parts))


@pytest.mark.slow
def test_criterion_10_reproducible(desk_runs):
    a, b = desk_runs
    names = ("metrics.csv", "ood.csv", "sweep.csv")
    same = {n: filecmp.cmp(a.out / n, b.out / n, shallow=False) for n in names}
    verdict(10, all(same.values()), f"byte-identical: {same}")
