"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` (or
``python tests/test_acceptance.py``); the summary lines are also repeated at
the end of any pytest session that collected this file.
"""

import contextlib
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from grad_cases import CASES, TOLERANCE
from pipeline import chain_set, harmonised, overfit_set
from qtsim.attention import AttentionConfig
from qtsim.chains import ChainConfig, bin_label, build_chains, extract_chains, legs_from_batch, group_sort
from qtsim.cli import main as cli
from qtsim.gradcheck import gradient_check
from qtsim.harmonise import UNK_ID, Vocabulary
from qtsim.metrics import report_from_confusion
from qtsim.models import ModelConfig, build_model
from qtsim.queue import QueueConfig, residual_delay, utilisation
from qtsim.recurrent import LSTMConfig
from qtsim.tensor import Tensor, precision
from qtsim.train import TrainConfig, evaluate, predict_logits, train, transfer_evaluate

RESULTS: dict[int, list[tuple[bool, str]]] = {}

# smallest conv widths at which each kind clears the overfit bar; everything else is the default
OVERFIT_WIDTHS = {
    "cbam_cnn": (32, 64),
    "simam_cnn_lstm": (16, 32),
    "qtsim": (16, 32),
    "qtsim_bidir": (16, 32),
}


def summary_lines() -> list[str]:
    """One line per criterion; a criterion with several parts passes only if all of them do."""
    lines = []
    for number in sorted(RESULTS):
        parts = RESULTS[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        if len(parts) > 1:
            detail = "; ".join(f"[{'ok' if ok else 'FAIL'}] {text}" for ok, text in parts)
        else:
            detail = parts[0][1]
        lines.append(f"criterion {number:2d} {status}  {detail}")
    return lines


@contextlib.contextmanager
def criterion(number, title):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        detail = str(exc).splitlines()[0][:160] if str(exc) else type(exc).__name__
        RESULTS.setdefault(number, []).append((False, f"{title} ({detail})"))
        print(f"criterion {number:2d} FAIL  {title} ({detail})")
        raise
    RESULTS.setdefault(number, []).append((True, title))
    print(f"criterion {number:2d} PASS  {title} [{time.perf_counter() - start:.1f}s]")


def test_c01_gradient_suite():
    with criterion(1, "every differentiable op and model matches central differences"):
        start = time.perf_counter()
        worst = {}
        with precision("float64"):
            for name, build in sorted(CASES.items()):
                fn, inputs, max_entries = build(np.random.default_rng(sum(map(ord, name))))
                worst[name] = gradient_check(fn, inputs, h=1e-5, max_entries=max_entries)
        elapsed = time.perf_counter() - start
        bad = {k: v for k, v in worst.items() if not v <= TOLERANCE}
        assert not bad, f"relative error above {TOLERANCE}: {bad}"
        assert elapsed <= 120, f"gradient suite took {elapsed:.1f}s"


def test_c02_queue_oracle():
    with criterion(2, "residual delay layer agrees with a scalar oracle on 1000 chains"):
        rng = np.random.default_rng(2)
        x = np.zeros((1000, 3, 2))
        x[:, :, 0] = rng.uniform(0, 6000, (1000, 3))
        x[:, :, 1] = rng.uniform(1, 900, (1000, 3))
        with precision("float64"):
            q = residual_delay(Tensor(x), 0, 1, QueueConfig())
            _, _, rho = utilisation(Tensor(x[:, :, :1]), Tensor(x[:, :, 1:]), QueueConfig())
        for i, chain in enumerate(x):
            w, l = oracles.queue_proxies(chain[:, 0].tolist(), chain[:, 1].tolist())
            assert np.abs(q.W_n.data[i, :, 0] - w).max() <= 1e-6
            assert np.abs(q.L_n.data[i, :, 0] - l).max() <= 1e-6
        for arr in (q.W_n.data, q.L_n.data):
            assert 0.0 <= arr.min() and arr.max() <= 1.0
        assert rho.data.max() <= 0.99


def test_c03_chain_oracle():
    with criterion(3, "chain extraction equals brute-force window enumeration"):
        batch = harmonised(seed=30, aircraft=25, days=4, violation_rate=0.3)
        batch = Vocabulary.fit(batch).encode(batch)
        assert len({(r["tail_number"], r["flight_date"]) for r in batch.rows}) == 100
        expected = oracles.brute_force_chains(batch.rows)
        got = build_chains(batch)
        assert set(got.provenance) == set(expected)
        assert {p: int(y) for p, y in zip(got.provenance, got.y)} == expected
        # one block of five legs with feasible turnarounds
        blocks = group_sort(legs_from_batch(batch, got.feature_names))
        block = next(b for b in blocks.values() if len(b) == 5 and
                     all(15 <= n.dep - p.arr <= 720 for p, n in zip(b, b[1:])))
        assert len(extract_chains(block, ChainConfig())) == 3


def test_c04_binning():
    with criterion(4, "delay boundary vector maps to the expected labels"):
        delays = (-30, 15, 16, 60, 61, 120, 121, 240, 241)
        assert tuple(bin_label(t) for t in delays) == (0, 0, 1, 1, 2, 2, 3, 3, 4)


def test_c05_reduction_oracle():
    with criterion(5, "queue-free qtsim is bit-equal to simam_cnn_lstm"):
        from grad_cases import FEATURES

        small = dict(channels=(8, 16), lstm=LSTMConfig(hidden_size=16, layers=2, dropout=0.2), init_seed=5)
        base = build_model(ModelConfig(kind="simam_cnn_lstm", **small), FEATURES)
        reduced = build_model(ModelConfig(kind="qtsim", queue_bias=False, mogrify=False,
                                          attention=AttentionConfig(qt_eps=0.0), **small), FEATURES)
        reduced.load_state_dict(base.state_dict())
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = rng.standard_normal((int(rng.integers(1, 17)), 3, len(FEATURES))) * 50
            x[:, :, FEATURES.index("distance")] = rng.uniform(100, 4000, x.shape[:2])
            x[:, :, FEATURES.index("scheduled_estimated_time")] = rng.uniform(40, 400, x.shape[:2])
            assert np.array_equal(reduced(x).logits.data, base(x).logits.data)


def test_c06_metrics_oracle():
    with criterion(6, "hand-worked confusion fixture and trace/n accuracy"):
        from fractions import Fraction

        fixture = json.loads((Path(__file__).parent / "assets" / "metrics_fixture.json").read_text())
        r = report_from_confusion(fixture["confusion"])
        exact = lambda xs: [float(Fraction(v)) for v in xs]  # noqa: E731
        assert r.precision == exact(fixture["precision"])
        assert r.recall == exact(fixture["recall"])
        assert r.f1 == exact(fixture["f1"])
        for avg in ("macro", "weighted"):
            assert getattr(r, avg) == {k: float(Fraction(v)) for k, v in fixture[avg].items()}
        assert r.accuracy == float(Fraction(fixture["accuracy"]))
        # trace/n on real evaluation runs
        chains, _ = chain_set(harmonised(seed=6, aircraft=20, days=2))
        for kind in ("cbam_cnn", "qtsim"):
            model = build_model(ModelConfig(kind=kind, channels=(4,), lstm=LSTMConfig(hidden_size=4)), chains.feature_names)
            model.fit_normaliser(chains.X)
            rep = evaluate(model, chains)
            cm = np.array(rep.confusion)
            assert rep.accuracy == float(Fraction(int(np.trace(cm)), int(cm.sum())))
            assert rep.accuracy == float(Fraction(int((predict_logits(model, chains.X).argmax(1) == chains.y).sum()), len(chains)))


def smoothed_rises(losses, window=10, after=20):
    """(epoch, rise) wherever the next ``window``-epoch mean exceeds the current one past ``after``."""
    losses = np.asarray(losses, dtype=np.float64)
    out = []
    for k in range(after, len(losses) - window + 1):
        rise = losses[k:k + window].mean() - losses[k - window:k].mean()
        if rise > 0:
            out.append((k, float(rise)))
    return out


@pytest.mark.parametrize("kind", list(OVERFIT_WIDTHS))
def test_c07_overfit(kind):
    data = overfit_set()
    cfg = ModelConfig(kind=kind, channels=OVERFIT_WIDTHS[kind], lstm=LSTMConfig(), init_seed=0)
    model = build_model(cfg, data.feature_names)
    result = train(model, data, data.subset([]), TrainConfig(max_epochs=200, seed=0))
    losses = [row["train_loss"] for row in result.history]
    acc = [row["train_acc"] for row in result.history]
    rises = smoothed_rises(losses)
    with criterion(7, f"{kind} overfits the separable set (max train acc {max(acc):.4f})"):
        assert max(acc) >= 0.95
        assert not rises, f"smoothed loss rises at {len(rises)} points, worst {max(r for _, r in rises):.4f}"


def test_c08_transfer_shape():
    with criterion(8, "cross-region transfer protocol"):
        for keep_weather in (False, True):
            a = harmonised("us", seed=81, aircraft=30, days=3, keep_weather=keep_weather)
            b = harmonised("eu", seed=82, aircraft=30, days=3, delay_shift=20.0, keep_weather=keep_weather)
            src, vocab = chain_set(a)
            tgt, _ = chain_set(b, vocab=vocab)
            assert (tgt.X[:, :, tgt.feature_names.index("airline")] == UNK_ID).all()
            assert (tgt.X[:, :, tgt.feature_names.index("depart_from_iata")] == UNK_ID).all()
            model = build_model(ModelConfig(kind="qtsim_bidir", channels=(8, 16),
                                            lstm=LSTMConfig(hidden_size=16)), src.feature_names)
            train(model, src, src.subset([]), TrainConfig(max_epochs=2, lr=1e-3, seed=0))
            report = transfer_evaluate(model, tgt)
            assert report.n == len(tgt)
            assert report.tags["feature_set"] == ("with_weather" if keep_weather else "without_weather")
            same = transfer_evaluate(model, src, "A", "A")
            home = evaluate(model, src)
            assert same.confusion == home.confusion and same.loss == home.loss
            assert same.precision == home.precision and same.f1 == home.f1


def _pipeline(workdir: Path):
    old = os.getcwd()
    os.chdir(workdir)
    try:
        steps = [
            ["synth", "--seed", "1", "--aircraft", "20", "--days", "2", "--region", "us", "--out", "a.csv"],
            ["synth", "--seed", "2", "--aircraft", "20", "--days", "2", "--region", "eu", "--delay-shift", "15",
             "--out", "b.csv"],
            ["harmonise", "--in", "a.csv", "--shared-with", "b.csv.schema.json", "--out", "ah.csv"],
            ["harmonise", "--in", "b.csv", "--shared-with", "a.csv.schema.json", "--vocab", "ah.csv.vocab.json",
             "--out", "bh.csv"],
            ["chains", "--in", "ah.csv", "--seed", "0", "--out", "a.qtc"],
            ["chains", "--in", "bh.csv", "--seed", "0", "--out", "b.qtc"],
            ["train", "--model", "qtsim_bidir", "--chains", "a.qtc", "--seed", "0", "--epochs", "3",
             "--channels", "8,16", "--hidden-size", "32", "--out", "run"],
            ["eval", "--checkpoint", "run/checkpoint.qtm", "--chains", "a.qtc", "--out", "ev"],
            ["transfer", "--checkpoint", "run/checkpoint.qtm", "--chains", "b.qtc", "--out", "tr"],
        ]
        for argv in steps:
            assert cli(argv) == 0, argv
    finally:
        os.chdir(old)
    return {str(p.relative_to(workdir)): p.read_bytes() for p in sorted(workdir.rglob("*")) if p.is_file()}


def test_c09_determinism(tmp_path):
    with criterion(9, "two seeded pipeline runs are byte-identical"):
        (tmp_path / "one").mkdir()
        (tmp_path / "two").mkdir()
        first, second = _pipeline(tmp_path / "one"), _pipeline(tmp_path / "two")
        for name in ("run/checkpoint.qtm", "run/final.qtm", "run/history.csv", "ev/report.json", "tr/report.json"):
            assert name in first
        assert first.keys() == second.keys()
        differ = [k for k in first if first[k] != second[k]]
        assert not differ, f"files differ: {differ}"


def test_c10_end_to_end_smoke(tmp_path):
    with criterion(10, "synth to transfer at default widths, five epochs, one core, under five minutes"):
        env = dict(os.environ, QTSIM_THREADS="1", OPENBLAS_NUM_THREADS="1", OMP_NUM_THREADS="1", MKL_NUM_THREADS="1")
        steps = [
            ["synth", "--seed", "1", "--region", "us", "--out", "a.csv"],
            ["synth", "--seed", "2", "--region", "eu", "--delay-shift", "15", "--out", "b.csv"],
            ["harmonise", "--in", "a.csv", "--region", "us", "--shared-with", "b.csv.schema.json", "--out", "ah.csv"],
            ["harmonise", "--in", "b.csv", "--region", "eu", "--shared-with", "a.csv.schema.json",
             "--vocab", "ah.csv.vocab.json", "--out", "bh.csv"],
            ["chains", "--in", "ah.csv", "--seed", "0", "--out", "a.qtc"],
            ["chains", "--in", "bh.csv", "--seed", "0", "--out", "b.qtc"],
            ["train", "--model", "qtsim_bidir", "--chains", "a.qtc", "--seed", "0", "--epochs", "5", "--out", "run"],
            ["eval", "--checkpoint", "run/checkpoint.qtm", "--chains", "a.qtc", "--out", "ev"],
            ["transfer", "--checkpoint", "run/checkpoint.qtm", "--chains", "b.qtc", "--out", "tr"],
        ]
        start = time.perf_counter()
        for argv in steps:
            proc = subprocess.run([sys.executable, "-m", "qtsim.cli", *argv], cwd=tmp_path, env=env,
                                  capture_output=True, text=True)
            assert proc.returncode == 0, (argv, proc.stderr)
        elapsed = time.perf_counter() - start
        assert len((tmp_path / "run" / "history.csv").read_text().splitlines()) == 6
        assert json.loads((tmp_path / "tr" / "report.json").read_text())["tags"]["protocol"] == "transfer"
        assert elapsed < 300, f"pipeline took {elapsed:.1f}s"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
