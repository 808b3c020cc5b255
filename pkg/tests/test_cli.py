import json

import numpy as np
import pytest

from trnet import io
from trnet.cli import main
from trnet.tensor import multi_mode_product
from trnet.tucker import TuckerTensor, tucker_reconstruct

SMALL_SYNTH = ["synth", "--input-shape", "6,6", "--epochs", "5", "--num-test", "50"]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def read_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


class TestSynth:
    def test_csv_contract(self, tmp_path, capsys):
        code, _, _ = run(["synth", "--sizes", "50,100,200,500", "--trl-rank", "4,4,1", "--seed", "7",
                          "--input-shape", "8,8", "--epochs", "3", "--num-test", "100", "--out", str(tmp_path)], capsys)
        assert code == 0
        lines = (tmp_path / "rmse_vs_size.csv").read_text().splitlines()
        assert lines[0] == "size,rmse_trl,rmse_fc"
        assert [int(line.split(",")[0]) for line in lines[1:]] == [50, 100, 200, 500]
        assert io.load(tmp_path / "weight_trl_n200.dtf").shape == (8, 8, 1)
        runs = json.loads((tmp_path / "runs.json").read_text())
        assert len(runs["runs"]) == 8

    def test_noiseless_both_fit(self, tmp_path, capsys):
        code, _, _ = run(["synth", "--input-shape", "8,8", "--sizes", "128", "--trl-rank", "2,2,1",
                          "--noise-std", "0", "--num-test", "500", "--weight-decay", "0",
                          "--lr-trl", "3e-2", "--lr-fc", "1e-2", "--out", str(tmp_path)], capsys)
        assert code == 0
        _, trl, fc = (tmp_path / "rmse_vs_size.csv").read_text().splitlines()[1].split(",")
        assert float(trl) <= 1e-2 and float(fc) <= 1e-2

    def test_deterministic(self, tmp_path, capsys):
        for d in ("a", "b"):
            assert run(SMALL_SYNTH + ["--sizes", "20,40", "--seed", "3", "--out", str(tmp_path / d)], capsys)[0] == 0
        a, b = read_bytes(tmp_path / "a"), read_bytes(tmp_path / "b")
        for name in a:
            if name != "runs.json":  # holds wall-clock timings
                assert a[name] == b[name], name

    def test_batch_norm_variant(self, tmp_path, capsys):
        assert run(SMALL_SYNTH + ["--sizes", "20", "--batch-norm", "--out", str(tmp_path)], capsys)[0] == 0
        assert io.load(tmp_path / "weight_fc_n20.dtf").shape == (6, 6, 1)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exits_one(self, tmp_path, capsys):
        code, out, _ = run(SMALL_SYNTH + ["--sizes", "20", "--lr-fc", "100", "--epochs", "200", "--out", str(tmp_path)], capsys)
        assert code == 1 and "diverged" in out

    def test_bad_ranks_usage(self, tmp_path, capsys):
        assert run(SMALL_SYNTH + ["--trl-rank", "2,2", "--out", str(tmp_path)], capsys)[0] == 2

    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["synth", "--sizes", "a,b"])
        assert e.value.code == 2


class TestGradcheck:
    def test_passes_and_reproducible(self, tmp_path, capsys):
        args = ["gradcheck", "--instances", "10", "--seed", "4"]
        code, out, _ = run(args + ["--out", str(tmp_path / "a")], capsys)
        assert code == 0 and "PASS" in out
        run(args + ["--out", str(tmp_path / "b")], capsys)
        assert (tmp_path / "a" / "gradcheck.json").read_bytes() == (tmp_path / "b" / "gradcheck.json").read_bytes()

    @pytest.mark.parametrize("group", ["trl_core", "tcl_factors", "bn_gamma", "composite"])
    def test_flipped_sign_fails(self, group, capsys):
        code, out, _ = run(["gradcheck", "--instances", "3", "--flip-sign", group], capsys)
        assert code == 1 and "FAIL" in out


class TestTucker:
    def test_full_rank(self, tmp_path, capsys, rng):
        x = rng.standard_normal((4, 3, 5))
        io.save(tmp_path / "x.dtf", x)
        code, out, _ = run(["tucker", str(tmp_path / "x.dtf"), "--out", str(tmp_path / "o")], capsys)
        assert code == 0
        assert float(out.split()[-1]) <= 1e-10

    def test_round_trip_file_matches_in_process(self, tmp_path, capsys, rng):
        x = rng.standard_normal((5, 4, 3))
        io.save(tmp_path / "x.dtf", x)
        before = (tmp_path / "x.dtf").read_bytes()
        run(["tucker", str(tmp_path / "x.dtf"), "--ranks", "2,2,2", "--out", str(tmp_path / "o")], capsys)
        meta, parts = io.load_bundle(tmp_path / "o")
        t = TuckerTensor(parts["core"][1], [parts[f"factor_{m}"][1] for m in meta["modes"]], meta["modes"])
        assert io.load(tmp_path / "o" / "reconstruction.dtf").tobytes() == tucker_reconstruct(t).tobytes()
        assert (tmp_path / "x.dtf").read_bytes() == before
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["iterations"] >= 1

    def test_composed_low_rank(self, tmp_path, capsys, rng):
        factors = [np.linalg.qr(rng.standard_normal((d, 2)))[0] for d in (6, 5, 7)]
        x = multi_mode_product(rng.standard_normal((2, 2, 2)), factors, (0, 1, 2))
        io.save(tmp_path / "x.dtf", x)
        code, out, _ = run(["tucker", str(tmp_path / "x.dtf"), "--ranks", "2,2,2", "--out", str(tmp_path / "o")], capsys)
        assert code == 0 and float(out.split()[-1]) <= 1e-8

    def test_partial_modes(self, tmp_path, capsys, rng):
        io.save(tmp_path / "x.dtf", rng.standard_normal((3, 4, 5)))
        run(["tucker", str(tmp_path / "x.dtf"), "--modes", "1,2", "--ranks", "2,3", "--out", str(tmp_path / "o")],
            capsys)
        meta, parts = io.load_bundle(tmp_path / "o")
        assert meta["modes"] == [1, 2] and parts["core"][1].shape == (3, 2, 3)

    def test_deterministic(self, tmp_path, capsys, rng):
        io.save(tmp_path / "x.dtf", rng.standard_normal((4, 4, 4)))
        for d in ("a", "b"):
            run(["tucker", str(tmp_path / "x.dtf"), "--ranks", "2,2,2", "--out", str(tmp_path / d)], capsys)
        assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")

    def test_errors(self, tmp_path, capsys, rng):
        assert run(["tucker", str(tmp_path / "missing.dtf")], capsys)[0] == 2
        (tmp_path / "bad.dtf").write_bytes(b"nope")
        assert run(["tucker", str(tmp_path / "bad.dtf")], capsys)[0] == 2
        io.save(tmp_path / "x.dtf", rng.standard_normal((3, 3)))
        assert run(["tucker", str(tmp_path / "x.dtf"), "--ranks", "5,1", "--out", str(tmp_path / "o")], capsys)[0] == 2


class TestTables:
    def test_verify_reports_the_rank_200_row(self, capsys):
        code, out, _ = run(["tables", "--verify"], capsys)
        assert code == 1
        assert "1 of 8 rows differ" in out and "68.3" in out

    def test_verify_subset_passes(self, capsys):
        code, out, _ = run(["tables", "--verify", "--preset", "vgg19-tcl-384", "--preset", "resnet101-trl-50"], capsys)
        assert code == 0 and "all 2 rows match" in out

    def test_json(self, capsys):
        code, out, _ = run(["tables", "--json"], capsys)
        rows = json.loads(out)
        assert code == 0 and {"label", "n_model", "n_reference", "savings_percent"} <= set(rows[0])

    def test_files_deterministic(self, tmp_path, capsys):
        run(["tables", "--out", str(tmp_path / "a")], capsys)
        run(["tables", "--out", str(tmp_path / "b")], capsys)
        assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")
        assert (tmp_path / "a" / "tables.csv").read_text().startswith("table,label,preset")

    def test_unknown_preset(self, capsys):
        code, _, err = run(["tables", "--preset", "alexnet"], capsys)
        assert code == 2 and "alexnet" in err
