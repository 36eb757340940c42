import numpy as np
import pytest

from pyraflow import cli
from pyraflow.io import read_flo, read_flow, write_flo, write_flow, write_image


class TestCostVolumeDemo:
    def test_both_modes_reproduce_outcome(self, capsys, tmp_path):
        assert cli.main(["cv-demo", "--mode", "both", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "sample: object EPE = 0.000" in out and "warp loses it" in out
        for name in ("flow_sample.flo", "flow_warp.flo", "gt.flo", "flow_sample.png", "cost_slice_warp.npy"):
            assert (tmp_path / name).exists()
        assert np.load(tmp_path / "cost_slice_sample.npy").shape == (17, 17)

    def test_failure_is_signalled(self, capsys):
        # Too small a search range: the expected outcome cannot be reproduced.
        assert cli.main(["cv-demo", "--delta", "2"]) == 1
        assert "NOT reproduced" in capsys.readouterr().out

    def test_single_mode(self, capsys):
        assert cli.main(["cv-demo", "--mode", "sample", "--scene", "uniform", "--seed", "1"]) == 0
        assert "object EPE = n/a" in capsys.readouterr().out


class TestGradCheck:
    def test_all_pass(self, capsys):
        assert cli.main(["grad-check", "--trials", "4"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 4 and all(l.startswith("PASS") for l in lines)

    def test_perturbed_suite_fails(self, capsys):
        assert cli.main(["grad-check", "--trials", "4", "--perturb", "descent"]) == 1
        lines = capsys.readouterr().out.splitlines()
        assert [l.split()[0] for l in lines] == ["PASS", "PASS", "PASS", "FAIL"]


class TestToyRun:
    def test_csv_to_stdout(self, capsys):
        assert cli.main(["toy-run", "--seeds", "2", "--iters", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "iter,ncc,beta_eff,sigma2" and len(lines) == 4
        assert lines[1].split(",")[2] == ""

    def test_csv_file_with_window(self, tmp_path):
        path = tmp_path / "t.csv"
        assert cli.main(["toy-run", "--seeds", "2", "--iters", "4", "--window", "2",
                         "--stop-gradient", "on", "--out", str(path)]) == 0
        assert len(path.read_text().splitlines()) == 5

    def test_bad_flag_value(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["toy-run", "--stop-gradient", "maybe"])
        assert info.value.code == 2


class TestFiles:
    @pytest.fixture
    def files(self, tmp_path, rng):
        H, W = 12, 14
        img = rng.integers(0, 256, size=(H, W, 3)).astype(np.uint8)
        write_image(tmp_path / "i1.png", img)
        write_image(tmp_path / "i2.png", img)
        write_flo(tmp_path / "fwd.flo", np.zeros((H, W, 2)))
        write_flo(tmp_path / "bwd.flo", np.zeros((H, W, 2)))
        np.save(tmp_path / "conf.npy", np.ones((H, W)))
        return tmp_path

    def test_distill_filter(self, files, capsys):
        out = files / "pgt.png"
        assert cli.main(["distill-filter", "--teacher", str(files / "fwd.flo"),
                         "--backward", str(files / "bwd.flo"), "--image1", str(files / "i1.png"),
                         "--image2", str(files / "i2.png"), "--confidence", str(files / "conf.npy"),
                         "--out", str(out)]) == 0
        assert "kept 80/168" in capsys.readouterr().out
        assert read_flow(out).mask().sum() == 80

    def test_eval_identical(self, files, capsys):
        write_flow(files / "gt.flo", np.ones((4, 4, 2)))
        csv = files / "h.csv"
        assert cli.main(["eval", str(files / "gt.flo"), str(files / "gt.flo"), "--csv", str(csv)]) == 0
        out = capsys.readouterr().out
        assert "epe 0.000000" in out and "fl_all 0.000000" in out
        assert csv.read_text().startswith("bin_lo,bin_hi,count,mean_epe")

    def test_eval_custom_bins(self, files, capsys):
        write_flow(files / "gt.flo", np.ones((4, 4, 2)))
        assert cli.main(["eval", str(files / "gt.flo"), str(files / "gt.flo"), "--bins", "0,1"]) == 0
        assert "bin [1, inf) count 16" in capsys.readouterr().out

    def test_viz(self, files):
        assert cli.main(["viz", str(files / "fwd.flo"), "--out", str(files / "v.png")]) == 0
        assert (files / "v.png").exists()

    def test_unreadable_file_exits_nonzero(self, files, capsys):
        (files / "bad.flo").write_bytes(b"nonsense")
        with pytest.raises(SystemExit) as info:
            cli.main(["eval", str(files / "bad.flo"), str(files / "fwd.flo")])
        assert info.value.code == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file(self, files):
        with pytest.raises(SystemExit) as info:
            cli.main(["viz", str(files / "none.flo"), "--out", str(files / "v.png")])
        assert info.value.code == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["frobnicate"])
        assert info.value.code == 2
