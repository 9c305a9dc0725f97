import csv

import pytest

from app.cli.commands import load_config, main
from app.config import settings
from app.errors import ConfigError, DataIOError
from tests.conftest import SQRT2

SZEGO = {"kind": "catalog", "name": "one_minus_t"}


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestLoadConfig:
    def test_run_config(self, write_config):
        config = load_config(write_config({"genfun": SZEGO, "degree": 12, "rho": 2.0}))
        assert config.degree == 12
        assert config.genfun.name == "one_minus_t"

    def test_bare_generating_function(self, write_config):
        config = load_config(write_config(SZEGO), {"degree": 7})
        assert config.degree == 7
        assert config.rho is None

    def test_yaml(self, write_config):
        path = write_config("genfun:\n  kind: catalog\n  name: euler\nrho: 4\n", name="run.yaml")
        assert load_config(path).rho == 4.0

    def test_malformed_document(self, write_config):
        with pytest.raises(ConfigError):
            load_config(write_config('{"genfun": [1, 2'))

    def test_scalar_document(self, write_config):
        with pytest.raises(ConfigError):
            load_config(write_config("42"))

    def test_bad_key_is_named(self, write_config):
        with pytest.raises(ConfigError) as info:
            load_config(write_config({"genfun": {"kind": "catalog", "name": "nope"}}))
        assert "genfun" in info.value.detail
        assert info.value.exit_code == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            load_config(str(tmp_path / "absent.json"))

    def test_overrides_skip_none(self, write_config):
        config = load_config(write_config({"genfun": SZEGO, "degree": 9}), {"degree": None, "svg": False})
        assert config.degree == 9
        assert not config.svg


class TestCoeffs:
    def test_exponential_partial_sum(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["coeffs", "--config", write_config(SZEGO), "--degree", "3", "--out", str(out)]) == 0
        values = [float(r["re"]) for r in rows(out / "p_n.csv")]
        assert values == pytest.approx([1, 1, 0.5, 1 / 6])
        assert all(float(r["im"]) == 0 for r in rows(out / "p_n.csv"))
        scaled = [float(r["re"]) for r in rows(out / "p_n_scaled.csv")]
        assert scaled == pytest.approx([1, 3, 4.5, 4.5])

    def test_degree_zero(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["coeffs", "--config", write_config(SZEGO), "--degree", "0", "--out", str(out)]) == 0
        assert len(rows(out / "p_n.csv")) == 1

    def test_identical_runs_give_identical_bytes(self, write_config, tmp_path):
        path = write_config({"genfun": {"kind": "catalog", "name": "euler"}, "degree": 25})
        for name in ("a", "b"):
            assert main(["coeffs", "--config", path, "--out", str(tmp_path / name)]) == 0
        for name in ("p_n.csv", "p_n_scaled.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestZeros:
    def test_quadratic(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["zeros", "--config", write_config(SZEGO), "--degree", "2", "--out", str(out)]) == 0
        found = rows(out / "zeros.csv")
        assert len(found) == 2
        # S_2(2x) = 1 + 2x + 2x^2 has roots (-1 +- i)/2
        assert [float(r["re"]) for r in found] == pytest.approx([-0.5, -0.5])
        assert [float(r["im"]) for r in found] == pytest.approx([-0.5, 0.5])
        assert (out / "zeros.svg").exists()

    def test_no_svg(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["zeros", "--config", write_config(SZEGO), "--degree", "5", "--no-svg", "--out", str(out)]) == 0
        assert not (out / "zeros.svg").exists()

    def test_svg_is_reproducible(self, write_config, tmp_path):
        path = write_config(SZEGO)
        for name in ("a", "b"):
            assert main(["zeros", "--config", path, "--degree", "12", "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / "zeros.svg").read_bytes() == (tmp_path / "b" / "zeros.svg").read_bytes()
        assert (tmp_path / "a" / "zeros.csv").read_bytes() == (tmp_path / "b" / "zeros.csv").read_bytes()

    def test_degree_zero_rejected(self, write_config, tmp_path):
        assert main(["zeros", "--config", write_config(SZEGO), "--degree", "0", "--out", str(tmp_path)]) == 3

    def test_non_convergence_writes_partial_roots(self, write_config, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "aberth_max_iter", 1)
        out = tmp_path / "out"
        assert main(["zeros", "--config", write_config(SZEGO), "--degree", "40", "--out", str(out)]) == 2
        assert len(rows(out / "zeros_partial.csv")) == 40
        assert not (out / "zeros.csv").exists()


class TestAttractor:
    def test_single_dominant_has_only_arcs(self, write_config, tmp_path):
        out = tmp_path / "out"
        path = write_config({"genfun": SZEGO, "rho": 2.0, "resolution": 256, "svg": False})
        assert main(["attractor", "--config", path, "--out", str(out)]) == 0
        assert {r["kind"] for r in rows(out / "attractor.csv")} == {"arc"}

    def test_conjugate_pair_adds_a_segment(self, write_config, tmp_path):
        out = tmp_path / "out"
        path = write_config({"genfun": {"kind": "catalog", "name": "euler"}, "rho": 4.0, "resolution": 256})
        assert main(["attractor", "--config", path, "--out", str(out)]) == 0
        assert {r["kind"] for r in rows(out / "attractor.csv")} == {"arc", "segment"}
        assert (out / "attractor.svg").exists()

    def test_needs_rho(self, write_config, tmp_path):
        assert main(["attractor", "--config", write_config(SZEGO), "--out", str(tmp_path)]) == 3

    def test_rho_below_a_dominant_zero(self, write_config, tmp_path):
        cubic = {"kind": "poly", "roots": [{"re": 1}, {"re": 0, "im": SQRT2}, {"re": 0, "im": "-" + SQRT2}]}
        path = write_config({"genfun": cubic, "rho": 1.2, "resolution": 256})
        assert main(["attractor", "--config", path, "--out", str(tmp_path)]) == 3


class TestValidate:
    def test_reuse_without_zeros_file(self, write_config, tmp_path):
        path = write_config({"genfun": SZEGO, "degree": 20, "rho": 2.0})
        assert main(["validate", "--config", path, "--reuse", "--out", str(tmp_path / "empty")]) == 3

    def test_tightened_threshold_exits_one(self, write_config, tmp_path):
        out = tmp_path / "out"
        path = write_config({
            "genfun": SZEGO, "degree": 60, "rho": 2.0, "resolution": 512,
            "tolerances": {"hausdorff_max": 1e-6},
            "validation": {"count_rectangles": 0},
        })
        assert main(["validate", "--config", path, "--out", str(out)]) == 1
        assert (out / "report.json").exists()
        assert "hausdorff" in (out / "report.txt").read_text()

    def test_reuse_reads_earlier_zeros(self, write_config, tmp_path):
        out = tmp_path / "out"
        path = write_config({
            "genfun": SZEGO, "degree": 60, "rho": 2.0, "resolution": 512,
            "tolerances": {"hausdorff_max": 0.6},
            "validation": {"count_rectangles": 2},
        })
        assert main(["zeros", "--config", path, "--no-svg", "--out", str(out)]) == 0
        before = (out / "zeros.csv").read_bytes()
        assert main(["validate", "--config", path, "--reuse", "--out", str(out)]) == 0
        assert (out / "zeros.csv").read_bytes() == before
