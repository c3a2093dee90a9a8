"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed as the tests run (visible with ``-s``) and collected
into an "acceptance criteria" section of the pytest terminal summary.
The toy-training criteria share one session-scoped corpus and cache their
runs, so the n=3 seed-0 model trains once and serves criteria 6, 7 and 10.
"""
import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from ferretnet.cli import EXIT_OK, run
from ferretnet.corpus import gen_toy_corpus
from ferretnet.data import PerturbationSpec, eval_transform, load_dataset, perturb
from ferretnet.lpd import NeighborhoodSpec, lpd_map, reconstruct
from ferretnet.metrics import average_precision
from ferretnet.model import VARIANTS, build_ferretnet, describe_model, flops_count, param_count
from ferretnet.nn import Conv2d, Tensor
from ferretnet.training import TrainConfig, evaluate, save_trained, train
from ferretnet.verification import LAYER_TOLERANCE, MODEL_TOLERANCE, run_gradcheck_suite
from oracles import average_precision_enumeration, lpd_reconstruct_bruteforce
from test_model import closed_form_params

REPORT = []

ALL_SPECS = [NeighborhoodSpec(n, c, s) for n, c, s in
             itertools.product((3, 5, 7), ("mask", "exclude", "retain"), ("median", "max", "min", "avg"))]

TOY_TRAIN_PER_CLASS = 500
TOY_TEST_PER_CLASS = 100
TOY_EPOCHS = 5
TOY_TRAIN_SEED = 11
TOY_TEST_SEED = 12


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {number}: {title} | {detail}"
    REPORT.append(line)
    print(line)
    assert ok, line


def random_images(rng, count, max_c=3, max_hw=16):
    return [rng.random((int(rng.integers(1, max_c + 1)), int(rng.integers(1, max_hw + 1)),
                        int(rng.integers(1, max_hw + 1)))) for _ in range(count)]


def cli_json(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    assert code == EXIT_OK, err
    return json.loads(out)


# --- 1 ---------------------------------------------------------------------------------

def test_criterion_01_lpd_oracle_equivalence():
    rng = np.random.default_rng(2024)
    images = random_images(rng, 200)
    start = time.perf_counter()
    worst_avg, exact_failures = 0.0, 0
    for spec in ALL_SPECS:
        for img in images:
            got = reconstruct(img, spec)
            want = lpd_reconstruct_bruteforce(img, spec.size, spec.center.value, spec.statistic.value)
            if spec.statistic.value == "avg":
                worst_avg = max(worst_avg, float(np.abs(got - want).max()))
            elif not np.array_equal(got, want):
                exact_failures += 1
    seconds = time.perf_counter() - start
    ok = exact_failures == 0 and worst_avg <= 1e-12 and seconds < 30
    record(1, "LPD oracle equivalence", ok,
           f"{len(images)} images x {len(ALL_SPECS)} configs, exact mismatches={exact_failures}, "
           f"max avg error={worst_avg:.2e}, {seconds:.1f}s (< 30s)")


# --- 2 ---------------------------------------------------------------------------------

def test_criterion_02_lpd_symmetry_and_range():
    rng = np.random.default_rng(7)
    images = random_images(rng, 100)
    failures = []
    for idx, img in enumerate(images):
        for spec in ALL_SPECS:
            rec = reconstruct(img, spec)
            lpd = lpd_map(img, spec)
            checks = {
                "hflip": np.array_equal(lpd_map(img[:, :, ::-1], spec), lpd[:, :, ::-1]),
                "vflip": np.array_equal(lpd_map(img[:, ::-1, :], spec), lpd[:, ::-1, :]),
                "range": rec.min() >= 0 and rec.max() <= 1 and lpd.min() >= -1 and lpd.max() <= 1,
            }
            for k in (1, 2, 3):
                checks[f"rot{90 * k}"] = np.array_equal(lpd_map(np.rot90(img, k, axes=(1, 2)), spec),
                                                        np.rot90(lpd, k, axes=(1, 2)))
            failures += [(idx, spec, name) for name, passed in checks.items() if not passed]
    record(2, "LPD symmetry and range", not failures,
           f"100 images x {len(ALL_SPECS)} configs x (2 flips, 3 rotations, range), violations={len(failures)}")


# --- 3 ---------------------------------------------------------------------------------

def test_criterion_03_gradient_checks():
    start = time.perf_counter()
    results = run_gradcheck_suite(seed=0, include_model=True)
    seconds = time.perf_counter() - start
    layers = [r for r in results if r["name"] != "ferretnet_s"]
    model = [r for r in results if r["name"] == "ferretnet_s"][0]
    worst_layer = max(layers, key=lambda r: r["max_rel_error"])
    ok = (all(r["max_rel_error"] < LAYER_TOLERANCE for r in layers)
          and model["max_rel_error"] < MODEL_TOLERANCE and seconds < 120)
    record(3, "gradient checks", ok,
           f"{len(layers)} layer checks, worst {worst_layer['name']}={worst_layer['max_rel_error']:.2e} (< 1e-4); "
           f"FerretNet-S={model['max_rel_error']:.2e} (< 1e-3); {seconds:.1f}s (< 120s)")


# --- 4 ---------------------------------------------------------------------------------

def test_criterion_04_dilated_equals_sparse_5x5():
    rng = np.random.default_rng(99)
    mismatches = 0
    for case in range(50):
        c = int(rng.integers(1, 17))
        dtype = np.float32 if case % 2 == 0 else np.float64
        x = rng.standard_normal((int(rng.integers(1, 4)), c, int(rng.integers(3, 25)),
                                 int(rng.integers(3, 25)))).astype(dtype)
        dilated = Conv2d(c, c, 3, padding=2, dilation=2, groups=c, bias=False, rng=rng)
        dilated.weight.data = dilated.weight.data.astype(dtype)
        sparse = Conv2d(c, c, 5, padding=2, groups=c, bias=False)
        w5 = np.zeros((c, 1, 5, 5), dtype=dtype)
        w5[:, :, ::2, ::2] = dilated.weight.data
        sparse.weight.data = w5
        a, b = dilated(Tensor(x)).data, sparse(Tensor(x)).data
        mismatches += not (a.dtype == b.dtype and np.array_equal(a, b))
    record(4, "dilated 3x3 == sparse 5x5", mismatches == 0, f"50 random cases, bitwise mismatches={mismatches}")


# --- 5 ---------------------------------------------------------------------------------

def test_criterion_05_architecture_accounting():
    rows, ok = [], True
    counts = {}
    for name in "SBL":
        v = VARIANTS[name]
        model = build_ferretnet(name)
        enumerated = sum(p.data.size for p in model.parameters())
        analytic = param_count(model)
        described = describe_model(model, (1, 3, 256, 256)).parameter_count
        closed = closed_form_params(v.stage_channels, v.stage_blocks)
        ok &= enumerated == analytic == described == closed
        counts[name] = analytic
        rows.append(f"{name}={analytic:,}")
    flops_b = flops_count(build_ferretnet("B"), (1, 3, 256, 256))
    ok &= counts["S"] < counts["B"] < counts["L"]
    ok &= 0.8e6 <= counts["B"] <= 1.3e6 and 1.8e9 <= flops_b <= 3.0e9
    record(5, "architecture accounting", ok,
           f"params {' '.join(rows)} (analytic == enumerated == closed form); S < B < L; "
           f"B FLOPs@256={flops_b / 1e9:.2f}G in [1.8G, 3.0G], B params in [0.8M, 1.3M]")


# --- 6, 7: toy-scale training --------------------------------------------------------------

class ToyRuns:
    def __init__(self, root):
        start = time.perf_counter()
        self.train_root = gen_toy_corpus(root / "train", TOY_TRAIN_PER_CLASS, 256, TOY_TRAIN_SEED)
        self.test_root = gen_toy_corpus(root / "test", TOY_TEST_PER_CLASS, 256, TOY_TEST_SEED)
        self.train_set = load_dataset(self.train_root)
        self.test_set = load_dataset(self.test_root)
        self.corpus_seconds = time.perf_counter() - start
        self.results = {}
        self.models = {}

    def get(self, mode, seed):
        """mode is a window size (LPD input) or "raw"; returns the held-out metrics."""
        key = (mode, seed)
        if key not in self.results:
            spec = None if mode == "raw" else NeighborhoodSpec(mode)
            start = time.perf_counter()
            model = build_ferretnet("S", seed=seed)
            train(model, self.train_set, TrainConfig(epochs=TOY_EPOCHS, seed=seed), spec)
            res = evaluate(model, self.test_set, spec)
            res["seconds"] = time.perf_counter() - start
            self.results[key] = res
            self.models[key] = (model, spec)
            print(f"toy run {key}: acc={res['acc']:.3f} ap={res['ap']:.3f} {res['seconds']:.0f}s")
        return self.results[key]


@pytest.fixture(scope="session")
def toy(tmp_path_factory):
    return ToyRuns(tmp_path_factory.mktemp("toy"))


def test_criterion_06_lpd_beats_raw_input(toy):
    lpd = toy.get(3, 0)
    raw = toy.get("raw", 0)
    seconds = toy.corpus_seconds + lpd["seconds"] + raw["seconds"]
    gap = lpd["acc"] - raw["acc"]
    ok = lpd["acc"] >= 0.90 and gap >= 0.05 and seconds < 900
    record(6, "toy ablation: LPD vs raw input", ok,
           f"LPD acc={lpd['acc']:.3f} (>= 0.90), raw acc={raw['acc']:.3f}, gap={100 * gap:.1f}pp (>= 5pp); "
           f"corpus + both runs {seconds / 60:.1f} min (< 15 min)")


def test_criterion_07_small_window_beats_large(toy):
    seeds = (0, 1, 2)
    n3 = [toy.get(3, s)["acc"] for s in seeds]
    n7 = [toy.get(7, s)["acc"] for s in seeds]
    ok = np.mean(n3) > np.mean(n7)
    record(7, "toy ablation: n=3 vs n=7", ok,
           f"n=3 acc {['%.3f' % a for a in n3]} mean={np.mean(n3):.4f} > "
           f"n=7 acc {['%.3f' % a for a in n7]} mean={np.mean(n7):.4f}")


# --- 8 ---------------------------------------------------------------------------------

def test_criterion_08_metric_oracles():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        labels = rng.integers(0, 2, n)
        labels[rng.integers(0, n)] = 1
        scores = rng.integers(0, 8, n) / 7 if rng.random() < 0.5 else rng.random(n)
        worst = max(worst, abs(average_precision(scores, labels)
                               - average_precision_enumeration(list(scores), list(labels))))
    example = average_precision([0.9, 0.8, 0.3], [1, 0, 1])
    # (1/1 + 2/3) / 2 = 0.8333...
    ok = worst <= 1e-12 and abs(example - 5 / 6) <= 1e-6
    record(8, "metric oracles", ok,
           f"1000 batches, max |AP - enumeration|={worst:.1e}; AP(0.9,0.8,0.3 | 1,0,1)={example:.6f} (5/6 +- 1e-6)")


# --- 9 ---------------------------------------------------------------------------------

def test_criterion_09_determinism(tmp_path, capsys):
    mismatched = []

    def both(tag, argv_for):
        outs = []
        for run_id in ("a", "b"):
            outs.append(cli_json(capsys, *argv_for(run_id)))
        return outs

    # gen-corpus: byte-identical trees
    both("gen-corpus", lambda r: ["gen-corpus", tmp_path / f"corpus_{r}", "--count", "4", "--size", "64",
                                   "--seed", "5"])
    files = sorted(p.relative_to(tmp_path / "corpus_a") for p in (tmp_path / "corpus_a").rglob("*") if p.is_file())
    if any((tmp_path / "corpus_a" / f).read_bytes() != (tmp_path / "corpus_b" / f).read_bytes() for f in files):
        mismatched.append("gen-corpus")
    data = tmp_path / "corpus_a"

    # train: byte-identical checkpoints and manifests
    outs = both("train", lambda r: ["train", data, "--out", tmp_path / f"m_{r}.npz", "--variant", "S",
                                    "--epochs", "2", "--batch-size", "4", "--seed", "3"])
    if (tmp_path / "m_a.npz").read_bytes() != (tmp_path / "m_b.npz").read_bytes():
        mismatched.append("train checkpoint")
    if (tmp_path / "m_a.npz.json").read_bytes() != (tmp_path / "m_b.npz.json").read_bytes():
        mismatched.append("train manifest")
    if {k: v for k, v in outs[0].items() if k != "checkpoint"} != {k: v for k, v in outs[1].items()
                                                                   if k != "checkpoint"}:
        mismatched.append("train output")
    ckpt = tmp_path / "m_a.npz"

    a, b = both("eval", lambda r: ["eval", data, "--ckpt", ckpt, "--perturb", "rotate", "--seed", "4"])
    if a != b:
        mismatched.append("eval")
    a, b = both("detect", lambda r: ["detect", data / "fake" / "00001.png", "--ckpt", ckpt, "--seed", "4"])
    if a != b:
        mismatched.append("detect")

    both("extract-lpd", lambda r: ["extract-lpd", data / "real" / "00000.png", tmp_path / f"lpd_{r}.png",
                                   "--seed", "1"])
    if (tmp_path / "lpd_a.png").read_bytes() != (tmp_path / "lpd_b.png").read_bytes():
        mismatched.append("extract-lpd")

    a, b = both("gradcheck", lambda r: ["gradcheck", "--skip-model", "--seed", "2"])
    if a != b:
        mismatched.append("gradcheck")

    # bench: timings are measurements; everything else must repeat
    a, b = both("bench", lambda r: ["bench", "--variant", "S", "--batch", "2", "--size", "32", "--secs", "0.2",
                                    "--warmup", "1", "--seed", "6"])
    timing = {"fps", "images", "batches", "seconds", "latency_ms"}
    if {k: v for k, v in a.items() if k not in timing} != {k: v for k, v in b.items() if k not in timing}:
        mismatched.append("bench")

    record(9, "determinism", not mismatched,
           "gen-corpus, train (checkpoint + manifest bytes), eval, detect, extract-lpd, gradcheck, bench "
           f"repeated under fixed --seed; mismatches={mismatched or 'none'}")


# --- 10 --------------------------------------------------------------------------------

def test_criterion_10_robustness_harness(toy, tmp_path, capsys):
    toy.get(3, 0)
    model, spec = toy.models[(3, 0)]
    ckpt = tmp_path / "toy_n3.npz"
    save_trained(ckpt, model, TrainConfig(epochs=TOY_EPOCHS, seed=0), spec, [])
    reports = []
    for p in ("jpeg:75", "resize:0.75", "rotate"):
        res = cli_json(capsys, "eval", toy.test_root, "--ckpt", ckpt, "--perturb", p)
        assert {"acc", "ap"} <= set(res) and res["n"] == 2 * TOY_TEST_PER_CLASS
        reports.append(f"{res['perturbation']}: acc={res['acc']:.3f} ap={res['ap']:.3f}")
    img = toy.test_set.image(0)
    assert img.shape == (3, 256, 256)
    small = perturb(img, PerturbationSpec.parse("resize:0.75"))
    large = perturb(img, PerturbationSpec.parse("resize:1.25"))
    ok = small.shape == (3, 192, 192) and large.shape == (3, 320, 320)
    ok &= eval_transform(small).shape == eval_transform(large).shape == (3, 256, 256)
    record(10, "robustness harness", ok,
           f"{'; '.join(reports)}; resize 0.75 -> {small.shape[1]}x{small.shape[2]}, "
           f"1.25 -> {large.shape[1]}x{large.shape[2]}")


# --- 11 --------------------------------------------------------------------------------

def bench_process(*argv):
    # a fresh interpreter per run, as when `ferretnet bench` is invoked from a shell
    proc = subprocess.run([sys.executable, "-m", "ferretnet", "bench", *map(str, argv)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == EXIT_OK, proc.stderr
    return json.loads(proc.stdout)


def test_criterion_11_benchmark_stability():
    common = ["--variant", "S", "--batch", "8", "--threads", "1", "--seed", "0"]
    short = bench_process(*common, "--secs", "10")
    long = bench_process(*common, "--secs", "20")
    no_lpd = bench_process(*common, "--secs", "10", "--no-lpd")
    drift = abs(short["fps"] - long["fps"]) / long["fps"]
    ok = drift < 0.10 and short["fps"] <= no_lpd["fps"]
    record(11, "benchmark stability", ok,
           f"FerretNet-S batch 8 @256: 10s fps={short['fps']:.2f}, 20s fps={long['fps']:.2f}, "
           f"drift={100 * drift:.1f}% (< 10%); no-LPD fps={no_lpd['fps']:.2f} >= full pipeline")
