"""Acceptance suite: one PASS/FAIL line per criterion, at the agreed tolerances.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines; they
are also printed when output is captured.
"""

import time

import numpy as np
import pytest

from oracles import inner_product_loops, n_mode_product_loops
from trnet import io
from trnet.cli import main
from trnet.experiment import SynthExperiment, run_synth
from trnet.gradcheck import gradcheck_suite
from trnet.params import regenerate_tables
from trnet.tensor import fold, generalized_inner_product, kronecker, n_mode_product, unfold, vectorize
from trnet.training import SyntheticSpec
from trnet.tucker import TuckerTensor, hooi, hosvd, tucker_reconstruct


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def rel(a, b):
    return np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(np.ravel(b)), 1e-300)


def test_criterion_1_tables(report, capsys):
    t0 = time.perf_counter()
    code = main(["tables", "--verify"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    rows = [r for r in regenerate_tables() if r["match"] is not None]
    bad = [f"{r['label']} got {r['savings_percent']} vs {r['printed']}" for r in rows if not r["match"]]
    ok = code == 0 and not bad and elapsed < 1.0
    report("criterion 1 table reproduction", ok,
           f"{len(rows) - len(bad)}/{len(rows)} rows match, {elapsed:.2f}s" + (f"; {'; '.join(bad)}" if bad else ""))
    assert "verify:" in out


def test_criterion_2_gradients(report):
    t0 = time.perf_counter()
    errors = gradcheck_suite(n_instances=100, seed=0, max_dim=6)
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    ok = all(e <= 1e-5 for e in errors.values()) and elapsed < 120
    report("criterion 2 gradient suite", ok,
           f"max rel error {errors[worst]:.2e} ({worst}) over 100 instances, {elapsed:.1f}s")


def test_criterion_3_tucker(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 6, 4, 3))
    full_err = rel(tucker_reconstruct(hosvd(x, x.shape)), x)

    factors = [np.linalg.qr(rng.standard_normal((d, r)))[0] for d, r in zip((7, 6, 8), (2, 3, 2))]
    low = tucker_reconstruct(TuckerTensor(rng.standard_normal((2, 3, 2)), factors))
    t, _ = hooi(low, (2, 3, 2))
    low_err = rel(tucker_reconstruct(t), low)

    non_monotone = 0
    for seed in range(200):
        r = np.random.default_rng(seed)
        dims = tuple(int(d) for d in r.integers(2, 8, r.integers(2, 5)))
        ranks = tuple(int(r.integers(1, d + 1)) for d in dims)
        _, rep = hooi(r.standard_normal(dims), ranks, max_iter=20, tol=0)
        h = rep.rel_error_history
        non_monotone += any(b > a for a, b in zip(h, h[1:]))
    elapsed = time.perf_counter() - t0
    ok = full_err <= 1e-10 and low_err <= 1e-8 and non_monotone == 0 and elapsed < 60
    report("criterion 3 Tucker correctness", ok,
           f"full-rank {full_err:.1e}, low-rank {low_err:.1e}, {non_monotone}/200 non-monotone runs, {elapsed:.1f}s")


def test_criterion_4_algebra(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    roundtrip_ok, worst_nmode, worst_inner, worst_eq = True, 0.0, 0.0, 0.0
    for _ in range(500):
        dims = tuple(int(d) for d in rng.integers(1, 5, rng.integers(1, 4)))
        x = rng.standard_normal(dims)
        for n in range(x.ndim):
            roundtrip_ok &= fold(unfold(x, n), n, dims).tobytes() == x.tobytes()
        n = int(rng.integers(0, x.ndim))
        m = rng.standard_normal((int(rng.integers(1, 4)), dims[n]))
        worst_nmode = max(worst_nmode, rel(n_mode_product(x, m, n), n_mode_product_loops(x, m, n)))
        shared = dims
        a = rng.standard_normal((int(rng.integers(1, 4)),) + shared)
        b = rng.standard_normal(shared + (int(rng.integers(1, 4)),))
        worst_inner = max(worst_inner, rel(generalized_inner_product(a, b, len(shared)),
                                           inner_product_loops(a, b, len(shared))))
    for _ in range(100):
        order = int(rng.integers(2, 4))
        ranks = tuple(int(r) for r in rng.integers(1, 4, order))
        dims = tuple(r + int(e) for r, e in zip(ranks, rng.integers(0, 3, order)))
        t = TuckerTensor(rng.standard_normal(ranks), [rng.standard_normal((d, r)) for d, r in zip(dims, ranks)])
        w = tucker_reconstruct(t)
        for n in range(order):
            others = kronecker(*[t.factors[k] for k in range(order) if k != n])
            worst_eq = max(worst_eq, rel(unfold(w, n), t.factors[n] @ unfold(t.core, n) @ others.T))
        worst_eq = max(worst_eq, rel(vectorize(w), kronecker(*t.factors) @ vectorize(t.core)))
    elapsed = time.perf_counter() - t0
    ok = roundtrip_ok and max(worst_nmode, worst_inner, worst_eq) <= 1e-10 and elapsed < 60
    report("criterion 4 algebra oracles", ok,
           f"round-trips bit-exact={roundtrip_ok}, n-mode {worst_nmode:.1e}, inner {worst_inner:.1e}, "
           f"Tucker identities {worst_eq:.1e}, {elapsed:.1f}s")


def test_criterion_5_synthetic(report):
    t0 = time.perf_counter()
    wins, converge, lines = 0, 0, []
    for seed in range(10):
        results, _ = run_synth(SynthExperiment(data=SyntheticSpec(true_ranks=(1, 1, 1), seed=seed)))
        wins += all(r.rmse_trl < r.rmse_fc for r in results)
        first, last = results[0], results[-1]
        converge += last.rmse_trl < first.rmse_trl and last.rmse_fc < first.rmse_fc
        lines.append(" ".join(f"{r.size}:{r.rmse_trl:.2f}/{r.rmse_fc:.2f}" for r in results))
    elapsed = time.perf_counter() - t0
    ok = wins >= 8 and converge == 10 and elapsed < 600
    report("criterion 5 synthetic experiment", ok,
           f"TRL below FC at every size in {wins}/10 seeds, both improve with size in {converge}/10, "
           f"{elapsed:.0f}s; seed 0 size:trl/fc {lines[0]}")


def test_criterion_6_accuracy_not_computed(report):
    fields = set().union(*(r.keys() for r in regenerate_tables()))
    ok = not any("acc" in f or "top" in f for f in fields)
    report("criterion 6 no accuracy dependence", ok, "tables carry parameter counts and savings only")


def test_criterion_7_determinism(report, tmp_path, capsys):
    rng = np.random.default_rng(0)
    io.save(tmp_path / "x.dtf", rng.standard_normal((4, 5, 3)))
    commands = {
        "synth": ["synth", "--input-shape", "8,8", "--sizes", "30,60", "--epochs", "10", "--num-test", "100",
                  "--seed", "5"],
        "gradcheck": ["gradcheck", "--instances", "5", "--seed", "5"],
        "tucker": ["tucker", str(tmp_path / "x.dtf"), "--ranks", "2,3,2"],
        "tables": ["tables"],
    }
    differing = []
    for name, argv in commands.items():
        outputs = []
        for run in ("a", "b"):
            main(argv + ["--out", str(tmp_path / name / run)])
            d = tmp_path / name / run
            outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())
                            if p.suffix in (".csv", ".dtf") or p.name in ("gradcheck.json", "report.json")})
        if outputs[0] != outputs[1] or not outputs[0]:
            differing.append(name)
    capsys.readouterr()
    report("criterion 7 determinism", not differing,
           "byte-identical CSV/DTF1/JSON for synth, gradcheck, tucker, tables" if not differing
           else f"differs: {differing}")
