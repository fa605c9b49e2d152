import csv
import subprocess
import sys

import numpy as np
import pytest

from rtinvert.cli import Roles, ingest_csv, interval_from_curve_text, main, parse_curve, parse_grid
from rtinvert.errors import ConfigError, MissingColumn, NonNumericCell, UnequalBlocks

from conftest import make_data


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def iv_csv(tmp_path):
    d = make_data(24, 4, seed=11, k=2, beta2=())
    rows = [[d.Y[i], d.X1[i, 0], d.Z[i, 0], d.Z[i, 1], f"b{i // 6}"] for i in range(d.n)]
    return write_csv(tmp_path / "iv.csv", ["y", "x", "z1", "z2", "blk"], rows)


@pytest.fixture
def two_d_csv(tmp_path):
    d = make_data(30, 6, seed=5, d=2, k=3, beta2=(), block_level_x1=True)
    rows = [[d.Y[i], *d.X1[i], *d.Z[i]] for i in range(d.n)]
    return write_csv(tmp_path / "twod.csv", ["y", "x1", "x2", "z1", "z2", "z3"], rows)


def body(path):
    return [line.split(",") for line in path.read_text().splitlines()[2:]]


class TestIngest:
    def test_contiguous_blocks(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["y", "x"], [[1, 2], [3, 4], [5, 6], [7, 8]])
        d = ingest_csv(p, Roles("y", ["x"], n_blocks=2))
        assert [b.tolist() for b in d.blocks] == [[0, 1], [2, 3]]
        np.testing.assert_array_equal(d.X2, np.ones((4, 1)))

    def test_block_column(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["y", "x", "g"], [[1, 2, "a"], [3, 4, "a"], [5, 6, "b"], [7, 8, "b"]])
        d = ingest_csv(p, Roles("y", ["x"], block_col="g", intercept=False))
        assert [b.tolist() for b in d.blocks] == [[0, 1], [2, 3]]
        assert d.X2.shape == (4, 0)

    def test_missing_column(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["x"], [[1], [2]])
        with pytest.raises(MissingColumn):
            ingest_csv(p, Roles("y", ["x"], n_blocks=1))

    def test_non_numeric(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["y", "x"], [[1, 2], ["oops", 4]])
        with pytest.raises(NonNumericCell) as exc:
            ingest_csv(p, Roles("y", ["x"], n_blocks=1))
        assert exc.value.row == 2 and exc.value.column == "y"

    def test_remainder(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["y", "x"], [[i, i] for i in range(5)])
        with pytest.raises(UnequalBlocks):
            ingest_csv(p, Roles("y", ["x"], n_blocks=2))

    def test_remainder_allowed_within_blocks(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["y", "x"], [[i, i] for i in range(5)])
        d = ingest_csv(p, Roles("y", ["x"], n_blocks=2), mode="within_block")
        assert [len(b) for b in d.blocks] == [3, 2]

    def test_parse_grid(self):
        np.testing.assert_allclose(parse_grid("-1:1:5"), [-1, -0.5, 0, 0.5, 1])
        with pytest.raises(ConfigError):
            parse_grid("1:0:5")
        with pytest.raises(ConfigError):
            parse_grid("a:b")


class TestCommands:
    def common(self, path):
        return ["--data", str(path), "--y", "y", "--x1", "x", "--block-col", "blk"]

    def test_curve_format(self, iv_csv, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(["curve", *self.common(iv_csv), "--side", "right", "--alpha", "0.05", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# curve M=24 n=24 test=linear side=right seed=0")
        assert lines[1] == "start,end,p"
        rows = body(out)
        assert rows[0][0] == "" and rows[-1][1] == ""
        for _, _, p in rows:
            assert float(p) * 24 == pytest.approx(round(float(p) * 24))
        curve, meta = parse_curve(out.read_text())
        assert curve.M == 24 and meta["side"] == "right"

    @pytest.mark.parametrize("extra", [["--side", "right"], ["--side", "two_sided"], ["--test", "wald", "--z", "z1,z2"]])
    def test_interval_is_filtration_of_curve(self, iv_csv, tmp_path, extra):
        c, i = tmp_path / "c.csv", tmp_path / "i.csv"
        assert main(["curve", *self.common(iv_csv), *extra, "--out", str(c)]) == 0
        assert main(["interval", *self.common(iv_csv), *extra, "--alpha", "0.05", "--out", str(i)]) == 0
        assert interval_from_curve_text(c.read_text(), 0.05) == i.read_text()

    def test_stdout(self, iv_csv, capsys):
        assert main(["interval", *self.common(iv_csv), "--alpha", "0.1"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("# interval") and "lo,hi,lo_closed,hi_closed" in out

    def test_region_outputs(self, two_d_csv, tmp_path):
        out = tmp_path / "region.csv"
        args = ["region", "--data", str(two_d_csv), "--y", "y", "--x1", "x1,x2", "--z", "z1,z2,z3",
                "--blocks", "6", "--perm-cap", "200", "--test", "wald2d", "--alpha", "0.2",
                "--grid1=-3:3:15", "--grid2=-3:3:12", "--out", str(out)]
        assert main(args) == 0
        rows = body(out)
        assert len(rows) == 15 * 12
        assert [(int(r[0]), int(r[1])) for r in rows[:2]] == [(0, 0), (0, 1)]
        comps = body(tmp_path / "region.components.csv")
        assert all(int(c[1]) > 0 for c in comps)
        proj = body(tmp_path / "region.projected.csv")
        assert len(proj) == 15 + 12

    def test_bench(self, two_d_csv, capsys):
        args = ["bench", "--data", str(two_d_csv), "--y", "y", "--x1", "x1,x2", "--z", "z1,z2,z3",
                "--blocks", "6", "--perm-cap", "200", "--test", "wald2d", "--grid1=-2:2:10", "--grid2=-2:2:10"]
        assert main(args) == 0
        rows = [line.split(",") for line in capsys.readouterr().out.splitlines()[2:]]
        fast = rows[0]
        assert fast[0].endswith(":fast") and int(fast[2]) >= 100 and int(fast[3]) >= 50
        assert fast[6] == "true" and float(fast[5]) > 1

    def test_simulate(self, capsys):
        assert main(["simulate", "--n", "12", "--blocks", "3", "--reps", "100", "--alpha", "0.5"]) == 0
        rate = float(capsys.readouterr().out.splitlines()[-1].split(",")[-1])
        assert 0 <= rate <= 1


class TestExitCodes:
    def test_missing_column(self, iv_csv, capsys):
        assert main(["curve", "--data", str(iv_csv), "--y", "nope", "--x1", "x", "--blocks", "4"]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error:") and len(err.strip().splitlines()) == 1

    def test_missing_file(self, tmp_path):
        assert main(["curve", "--data", str(tmp_path / "none.csv"), "--y", "y", "--x1", "x", "--blocks", "2"]) == 2

    def test_bad_alpha(self, iv_csv):
        assert main(["interval", "--data", str(iv_csv), "--y", "y", "--x1", "x", "--blocks", "4", "--alpha", "1.5"]) == 2

    def test_roles_disjoint(self, iv_csv):
        assert main(["curve", "--data", str(iv_csv), "--y", "y", "--x1", "y", "--blocks", "4"]) == 2

    def test_region_needs_grid(self, two_d_csv):
        args = ["region", "--data", str(two_d_csv), "--y", "y", "--x1", "x1,x2", "--z", "z1", "--blocks", "6", "--test", "wald2d", "--grid1=0:1:1", "--grid2=0:1:5"]
        assert main(args) == 2

    def test_numeric_degeneracy(self, tmp_path):
        # y is an exact line in x, so every permuted residual vanishes
        rows = [[2 * v + 1, v] for v in (1.0, 1.0, 2.0, 2.0, 4.0, 4.0)]
        p = write_csv(tmp_path / "deg.csv", ["y", "x"], rows)
        assert main(["curve", "--data", str(p), "--y", "y", "--x1", "x", "--blocks", "3"]) == 3

    def test_module_entry_point(self, iv_csv):
        res = subprocess.run(
            [sys.executable, "-m", "rtinvert", "interval", "--data", str(iv_csv), "--y", "y", "--x1", "x", "--block-col", "blk"],
            capture_output=True, text=True,
        )
        assert res.returncode == 0 and res.stdout.startswith("# interval")
