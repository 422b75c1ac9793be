"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The shared benchmark is the default three-lane scenario at seed 11: 5000
frames, detector at p_miss 0.05 / sigma 0.01 (clean) and p_miss 0.15
(noisy), predictor trained with the stock hyperparameters on the 70% split,
and every sequence length evaluated on one aligned held-out window set.
"""
from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest

from beamid.channel import ArrayConfig, NoiseConfig, best_beam, dft_codebook, los_channel, receive_power
from beamid.detect import DetectorConfig
from beamid.evaluate import (
    SplitSpec,
    build_report,
    nested_subset,
    paired_test_windows,
    split_into_episodes,
    train_predictor,
)
from beamid.identify import associate, select_nearest
from beamid.predictor import GridSpec, TrainConfig, loss_and_grad, MlpParams
from beamid.scene import default_scenario, six_lane_scenario, two_lane_scenario
from beamid.simulate import default_sim_config, generate_frames

BENCH_SEED = 11
SPLIT_SEED = 0
R_VALUES = (1, 3, 5)
FRAMES = 5000


def check(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def build_cell(scenario, p_miss: float, tag: str, frames: int = FRAMES):
    sim = default_sim_config(scenario, tag=tag, detector=DetectorConfig(p_miss=p_miss))
    records = generate_frames(sim, frames, scenario.seed)
    episodes = split_into_episodes(records, tag, sim.fingerprint())
    windows = paired_test_windows(episodes, R_VALUES, SplitSpec(seed=SPLIT_SEED))
    return sim, windows


@pytest.fixture(scope="session")
def benchmark():
    t0 = time.monotonic()
    scenario = default_scenario(seed=BENCH_SEED)
    sim, (train_w, test_clean) = build_cell(scenario, 0.05, "bench")
    predictor = train_predictor(train_w, TrainConfig(seed=0), GridSpec(), sim.beams, "bench")
    report_clean, _ = build_report(
        test_clean, predictor,
        scenario_train="bench", scenario_test="bench",
        train_fraction=1.0, seed=SPLIT_SEED, train_samples=len(train_w),
    )
    clean_runtime = time.monotonic() - t0

    _, (_, test_noisy) = build_cell(scenario, 0.15, "bench")
    report_noisy, _ = build_report(
        test_noisy, predictor,
        scenario_train="bench", scenario_test="bench",
        train_fraction=1.0, seed=SPLIT_SEED, train_samples=len(train_w),
    )
    return {
        "scenario": scenario,
        "sim": sim,
        "train_windows": train_w,
        "test_clean": test_clean,
        "predictor": predictor,
        "clean": report_clean,
        "noisy": report_noisy,
        "clean_runtime": clean_runtime,
    }


def test_criterion_1_beam_sweep_oracle():
    start = time.monotonic()
    array = ArrayConfig(m=16, fov_deg=110.0)
    codebook = dft_codebook(array, 64)
    cfg = NoiseConfig(noise_variance=0.0)
    rng = np.random.default_rng(1001)
    beam_sins = np.sin(codebook.beam_angles)
    half = math.radians(110.0) / 2.0
    hits = 0
    for _ in range(100):
        azimuth = rng.uniform(-half, half)
        xy = (20.0 * math.sin(azimuth), 20.0 * math.cos(azimuth))
        h = los_channel(xy, array, cfg, rng)
        swept = best_beam(receive_power(h, codebook, cfg, rng))
        nearest = int(np.argmin(np.abs(beam_sins - math.sin(azimuth))))
        hits += swept == nearest
    elapsed = time.monotonic() - start
    check(
        "criterion 1 (beam-sweep oracle)",
        hits == 100 and elapsed < 5.0,
        f"{hits}/100 sin-nearest matches in {elapsed:.2f}s",
    )


def test_criterion_2_gradient_check():
    start = time.monotonic()
    rng = np.random.default_rng(1002)
    worst = 0.0
    for _ in range(20):
        params = MlpParams(
            w1=rng.normal(0, 1, (3, 4)),
            b1=rng.normal(0, 1, 3),
            w2=rng.normal(0, 1, (4, 3)),
            b2=rng.normal(0, 1, 4),
        )
        x = rng.normal(0, 1, (4, 4))
        y = rng.integers(0, 4, 4)
        _, analytic = loss_and_grad(params, x, y)
        step = 1e-5
        for name, grad_arr in analytic.leaves():
            src = getattr(params, name)
            flat = src.ravel()
            gflat = grad_arr.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up, _ = loss_and_grad(params, x, y)
                flat[i] = orig - step
                down, _ = loss_and_grad(params, x, y)
                flat[i] = orig
                numeric = (up - down) / (2 * step)
                scale = max(abs(numeric), 1e-3)
                worst = max(worst, abs(gflat[i] - numeric) / scale)
    elapsed = time.monotonic() - start
    check(
        "criterion 2 (gradient check)",
        worst < 1e-4 and elapsed < 10.0,
        f"max relative error {worst:.2e} in {elapsed:.2f}s",
    )


def test_criterion_3_association_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(1003)
    agreements = 0
    total = 1000
    done = 0
    while done < total:
        n = int(rng.integers(2, 6))
        prev = rng.random((n, 2))
        min_sep = min(
            float(np.linalg.norm(prev[i] - prev[j]))
            for i in range(n)
            for j in range(i + 1, n)
        )
        if min_sep < 1e-3:
            continue
        disp = rng.uniform(-1, 1, (n, 2))
        disp *= (min_sep / 2.0 * 0.95) / np.sqrt(2.0)
        nxt = prev + disp
        ids, _ = associate(prev, list(range(n)), nxt, n, gate_radius=10.0)
        best_cost, best_assignment = None, None
        for perm in itertools.permutations(range(n)):
            cost = sum(float(np.linalg.norm(prev[perm[j]] - nxt[j])) for j in range(n))
            if best_cost is None or cost < best_cost:
                best_cost, best_assignment = cost, list(perm)
        agreements += ids == best_assignment
        done += 1
    elapsed = time.monotonic() - start
    check(
        "criterion 3 (association oracle)",
        agreements == total and elapsed < 10.0,
        f"{agreements}/{total} optimal matches in {elapsed:.2f}s",
    )


def test_criterion_4_nearest_neighbor_equivalence():
    rng = np.random.default_rng(1004)
    agreements = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 9))
        b = rng.random((n, 2))
        target = tuple(rng.random(2))
        best, best_d = 0, float("inf")
        for i in range(n):
            d = math.hypot(b[i, 0] - target[0], b[i, 1] - target[1])
            if d < best_d:
                best, best_d = i, d
        agreements += select_nearest(b, target) == best
    check(
        "criterion 4 (nearest-neighbor equivalence)",
        agreements == 10_000,
        f"{agreements}/10000 exhaustive-argmin matches",
    )


def test_criterion_5_end_to_end_clean_benchmark(benchmark):
    acc = benchmark["clean"].top1[1]
    runtime = benchmark["clean_runtime"]
    check(
        "criterion 5 (clean benchmark)",
        acc >= 0.90 and runtime < 900.0,
        f"top-1 at r=1 is {acc:.4f} (threshold 0.90), pipeline took {runtime:.0f}s",
    )


def test_criterion_6_sequence_benefit(benchmark):
    noisy_gain = benchmark["noisy"].top1[5] - benchmark["noisy"].top1[1]
    clean_drop = benchmark["clean"].top1[1] - benchmark["clean"].top1[5]
    check(
        "criterion 6 (sequence benefit)",
        noisy_gain >= 0.02 and clean_drop <= 0.005,
        f"noisy r5-r1 = {noisy_gain:+.4f} (need >= +0.02), "
        f"clean r1-r5 = {clean_drop:+.4f} (allowed <= +0.005)",
    )


def test_criterion_7_object_count_trend(benchmark):
    by_count_1 = benchmark["noisy"].by_object_count[1]
    by_count_5 = benchmark["noisy"].by_object_count[5]
    gap_1 = by_count_5[1] - by_count_1[1]
    gap_3 = by_count_5[3] - by_count_1[3]
    check(
        "criterion 7 (object-count trend)",
        gap_3 >= gap_1,
        f"noisy r5-r1 gap moves {gap_1:+.4f} (1 object) -> {gap_3:+.4f} (3 objects)",
    )


def test_criterion_8_training_fraction_plateau(benchmark):
    subset = nested_subset(benchmark["train_windows"], 0.3, SPLIT_SEED)
    predictor30 = train_predictor(
        subset, TrainConfig(seed=0), GridSpec(), benchmark["sim"].beams, "bench"
    )
    report30, _ = build_report(
        {1: benchmark["test_clean"][1]},
        predictor30,
        scenario_train="bench", scenario_test="bench",
        train_fraction=0.3, seed=SPLIT_SEED, train_samples=len(subset),
    )
    full = benchmark["clean"].top1[1]
    partial = report30.top1[1]
    check(
        "criterion 8 (training-fraction plateau)",
        full - partial <= 0.03,
        f"30% of training windows: {partial:.4f} vs 100%: {full:.4f} "
        f"(gap {full - partial:+.4f}, allowed 0.03)",
    )


def test_criterion_9_association_accuracy(benchmark):
    assoc = benchmark["clean"].association
    check(
        "criterion 9 (association accuracy)",
        assoc[3] == 1.0 and assoc[5] >= 0.99,
        f"clean association r=3: {assoc[3]:.4f} (need 1.0), r=5: {assoc[5]:.4f} (need >= 0.99)",
    )


def test_criterion_10_determinism(benchmark):
    scenario = default_scenario(seed=BENCH_SEED)
    sim, (train_w, test_clean) = build_cell(scenario, 0.05, "bench")
    predictor = train_predictor(train_w, TrainConfig(seed=0), GridSpec(), sim.beams, "bench")
    report, _ = build_report(
        test_clean, predictor,
        scenario_train="bench", scenario_test="bench",
        train_fraction=1.0, seed=SPLIT_SEED, train_samples=len(train_w),
    )
    identical = report.to_dict() == benchmark["clean"].to_dict()
    check(
        "criterion 10 (determinism)",
        identical,
        "regenerated benchmark reproduces every reported metric bit-identically"
        if identical
        else "regenerated benchmark diverged from the first run",
    )


def test_criterion_11_cross_scenario_harness():
    t0 = time.monotonic()
    frames = 4000
    six = six_lane_scenario(seed=41)
    two = two_lane_scenario(seed=42)
    sims = {}
    windows = {}
    for tag, scenario in (("six", six), ("two", two)):
        sim, win = build_cell(scenario, 0.05, tag, frames=frames)
        sims[tag] = sim
        windows[tag] = win
    results = {}
    for train_tag, test_tag in (("two", "two"), ("six", "two")):
        train_w, _ = windows[train_tag]
        predictor = train_predictor(
            train_w, TrainConfig(seed=0), GridSpec(), sims[train_tag].beams, train_tag
        )
        _, test_by_r = windows[test_tag]
        report, _ = build_report(
            test_by_r, predictor,
            scenario_train=train_tag, scenario_test=test_tag,
            train_fraction=1.0, seed=SPLIT_SEED, train_samples=len(train_w),
        )
        results[(train_tag, test_tag)] = report.top1[1]
    baseline = results[("two", "two")]
    transferred = results[("six", "two")]
    ok = math.isfinite(transferred) and math.isfinite(baseline) and baseline > transferred
    check(
        "criterion 11 (cross-scenario harness)",
        ok,
        f"baseline two->two {baseline:.4f} vs transferred six->two {transferred:.4f} "
        f"({time.monotonic() - t0:.0f}s)",
    )
