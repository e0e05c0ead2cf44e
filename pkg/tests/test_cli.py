"""CLI surface: subcommands, exit codes, file round-trips, config handling."""

import json

import numpy as np
import pytest

from hbt import __version__
from hbt.cli import main
from hbt.io import read_hbt, read_raw_tensor, write_raw_tensor


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestVersion:
    def test_prints_version(self, capsys):
        code, out, _ = run_cli(capsys, "version")
        assert code == 0
        assert __version__ in out


class TestUsageErrors:
    def test_no_command_exits_2(self, capsys):
        code, _, _ = run_cli(capsys)
        assert code == 2

    def test_unknown_command_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "frobnicate")
        assert code == 2


class TestQuantizeDequantize:
    def test_roundtrip_and_mask(self, tmp_path, capsys):
        values = np.array([0.1, -0.5, 0.9, -0.2])
        raw = tmp_path / "t.rawtens"
        write_raw_tensor(raw, values)
        hbt_path = tmp_path / "t.hbt"
        code, out, _ = run_cli(
            capsys, "quantize", str(raw), str(hbt_path), "--bits", "1.5",
            "--policy", "preset:1=0.5,2=0.5",
        )
        assert code == 0
        assert "average bitwidth 1.5" in out
        h = read_hbt(hbt_path)
        np.testing.assert_array_equal(h.mask, [2, 1, 2, 1])

        back = tmp_path / "back.rawtens"
        code, out, _ = run_cli(capsys, "dequantize", str(hbt_path), str(back))
        assert code == 0
        recon = read_raw_tensor(back)
        np.testing.assert_allclose(recon, [0.025, -0.425, 0.825, -0.425], atol=1e-6)

    def test_one_bit_single_plane(self, tmp_path, capsys):
        raw = tmp_path / "t.rawtens"
        write_raw_tensor(raw, np.linspace(-1, 1, 10))
        hbt_path = tmp_path / "t.hbt"
        code, _, _ = run_cli(capsys, "quantize", str(raw), str(hbt_path), "--bits", "1.0")
        assert code == 0
        h = read_hbt(hbt_path)
        assert h.max_bits == 1
        assert np.all(h.mask == 1)

    def test_invalid_bits_exits_2(self, tmp_path, capsys):
        raw = tmp_path / "t.rawtens"
        write_raw_tensor(raw, np.ones(4))
        code, _, err = run_cli(capsys, "quantize", str(raw), str(tmp_path / "o.hbt"), "--bits", "0")
        assert code == 2
        assert "error" in err

    def test_missing_input_exits_1(self, tmp_path, capsys):
        code, _, _ = run_cli(
            capsys, "quantize", str(tmp_path / "absent.rawtens"), str(tmp_path / "o.hbt"),
            "--bits", "1.4",
        )
        assert code == 1

    def test_storage_precision_roundtrip(self, tmp_path, capsys):
        # quantize -> dequantize must match the in-memory reconstruction to
        # 32-bit storage precision.
        from hbt import generate_mask, hetero_binarize, reconstruct

        values = np.random.default_rng(0).normal(size=64)
        raw = tmp_path / "t.rawtens"
        write_raw_tensor(raw, values)
        hbt_path = tmp_path / "t.hbt"
        run_cli(capsys, "quantize", str(raw), str(hbt_path), "--bits", "1.6")
        back = tmp_path / "b.rawtens"
        run_cli(capsys, "dequantize", str(hbt_path), str(back))
        stored_input = read_raw_tensor(raw)
        expected = reconstruct(hetero_binarize(stored_input, generate_mask(stored_input, 1.6)))
        np.testing.assert_allclose(read_raw_tensor(back), expected, atol=1e-6)


class TestApproxBench:
    def test_small_run_produces_expected_rows(self, tmp_path, capsys):
        out_path = tmp_path / "bench.csv"
        code, _, _ = run_cli(
            capsys, "approx-bench",
            "--set", "n=4096", "--set", "seeds=1", "--set", "avg_bits=1.4",
            "--set", "heuristics=middle-out,random", "--set", "policy=adjacent",
            "--out", str(out_path),
        )
        assert code == 0
        lines = out_path.read_text().strip().splitlines()
        config_lines = [l for l in lines if l.startswith("#")]
        assert any("n = 4096" in l for l in config_lines)
        data_lines = [l for l in lines if not l.startswith("#")]
        assert data_lines[0] == "heuristic,avg_bits,distribution,seed,normalized_distance"
        # 3 homogeneous reference rows + 2 heuristic rows
        assert len(data_lines) == 1 + 3 + 2

    def test_middle_out_beats_random_at_same_seed(self, tmp_path, capsys):
        out_path = tmp_path / "bench.csv"
        code, _, _ = run_cli(
            capsys, "approx-bench",
            "--set", "n=65536", "--set", "seeds=3", "--set", "avg_bits=1.4",
            "--set", "heuristics=middle-out,random", "--set", "policy=adjacent",
            "--set", "include_homogeneous=false", "--out", str(out_path),
        )
        assert code == 0
        rows = [l.split(",") for l in out_path.read_text().splitlines()
                if l and not l.startswith("#") and not l.startswith("heuristic")]
        dist = {r[0]: float(r[4]) for r in rows}
        assert dist["middle-out"] < dist["random"]

    def test_zero_n_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "approx-bench", "--set", "n=0")
        assert code == 2

    def test_unknown_key_exits_2(self, capsys):
        code, _, err = run_cli(capsys, "approx-bench", "--set", "sseeds=1")
        assert code == 2
        assert "sseeds" in err

    def test_deterministic_output(self, tmp_path, capsys):
        args = (
            "approx-bench", "--set", "n=10000", "--set", "seeds=2",
            "--set", "avg_bits=1.2", "--set", "heuristics=random",
            "--set", "policy=adjacent",
        )
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert run_cli(capsys, *args, "--out", str(a))[0] == 0
        assert run_cli(capsys, *args, "--out", str(b))[0] == 0
        assert a.read_text() == b.read_text()


class TestTrainCommand:
    def test_tiny_sweep_runs_and_is_deterministic(self, tmp_path, capsys):
        args = (
            "train",
            "--set", "n_train=120", "--set", "n_test=60", "--set", "epochs=1",
            "--set", "batch_size=32", "--set", "points=1,full", "--set", "seeds=1",
        )
        code, out_a, _ = run_cli(capsys, *args)
        assert code == 0
        code, out_b, _ = run_cli(capsys, *args)
        assert code == 0

        def strip_wall(text):  # wall_seconds is the only nondeterministic column
            return [l.rsplit(",", 1)[0] for l in text.splitlines()]

        assert strip_wall(out_a) == strip_wall(out_b)
        data_lines = [l for l in out_a.splitlines() if l and not l.startswith("#")]
        assert data_lines[0] == "point_id,m_bits,n_bits,heuristic,distribution,seed,top1,wall_seconds"
        point_rows = data_lines[1:]
        assert len(point_rows) == 2

    def test_checkpoints_written(self, tmp_path, capsys):
        code, _, _ = run_cli(
            capsys, "train",
            "--set", "n_train=120", "--set", "n_test=60", "--set", "epochs=1",
            "--set", "batch_size=32", "--set", "points=full", "--set", "seeds=1",
            "--out", str(tmp_path / "r.csv"), "--checkpoint-dir", str(tmp_path / "ckpt"),
        )
        assert code == 0
        files = list((tmp_path / "ckpt").glob("*.npz"))
        assert len(files) == 1
        payload = np.load(files[0])
        assert any(k.endswith(".w") for k in payload.files)

    def test_verify_packed_reports_small_gap(self, tmp_path, capsys):
        code, out, _ = run_cli(
            capsys, "train",
            "--set", "n_train=120", "--set", "n_test=60", "--set", "epochs=1",
            "--set", "batch_size=32", "--set", "points=1.4", "--set", "seeds=1",
            "--set", "input_bits=1.4",
            "--out", str(tmp_path / "r.csv"), "--verify-packed",
        )
        assert code == 0
        line = [l for l in out.splitlines() if l.startswith("packed-verify")][0]
        gap = float(line.rsplit("=", 1)[1])
        assert gap < 1e-6

    def test_missing_dataset_exits_1(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "train", "--set", f"dataset={tmp_path / 'absent'}",
        )
        assert code == 1
        assert "images.bin" in err

    def test_malformed_config_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "train", "--set", "epochs=quick")
        assert code == 2


class TestCostCommand:
    def test_single_fpga_query_matches_scaling(self, capsys):
        code, out, _ = run_cli(capsys, "cost", "--platform", "fpga", "--base", "row1",
                               "--bits", "1.4")
        assert code == 0
        row = [l for l in out.splitlines() if l.startswith("row1")][0].split(",")
        footprint, kfps, power = float(row[6]), float(row[7]), float(row[8])
        assert footprint == pytest.approx(29.68, abs=0.005)
        assert kfps == pytest.approx(15.64, abs=0.005)
        assert power == pytest.approx(5.04, abs=0.005)

    def test_asic_query(self, capsys):
        code, out, _ = run_cli(capsys, "cost", "--platform", "asic", "--base", "row3",
                               "--bits", "1.2")
        assert code == 0
        row = [l for l in out.splitlines() if l.startswith("row3")][0].split(",")
        assert float(row[6]) == pytest.approx(2.1816, abs=0.001)
        assert float(row[8]) == pytest.approx(0.1368, abs=0.001)

    def test_json_output_with_pareto(self, capsys):
        code, out, _ = run_cli(
            capsys, "cost", "--base", "row1", "--bits", "1.2,1.4",
            "--accuracy", "85.8,89.4", "--json",
        )
        assert code == 0
        doc = json.loads(out)
        assert len(doc["estimates"]) == 2
        assert doc["pareto"] is not None and len(doc["pareto"]) == 3
        assert all(p["optimal"] for p in doc["pareto"])

    def test_unknown_baseline_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "cost", "--base", "row99", "--bits", "1.4")
        assert code == 2

    def test_zero_bits_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "cost", "--base", "row1", "--bits", "0")
        assert code == 2

    def test_saturation_flagged(self, capsys):
        code, out, _ = run_cli(capsys, "cost", "--base", "row2", "--bits", "1.2")
        assert code == 0
        row = [l for l in out.splitlines() if l.startswith("row2")][0].split(",")
        assert float(row[6]) == 100.0
        assert row[9] == "yes"
