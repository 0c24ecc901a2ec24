import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from goq.sources import (
    Box,
    CsvFormatError,
    SourceParameterError,
    UnknownSourceError,
    builtin_source,
    builtin_source_ids,
    empirical_source,
    load_csv,
    sample,
)


def test_registry():
    assert set(builtin_source_ids()) == {
        "uniform-box", "trunc-exp", "exp-iid", "rayleigh-gain", "synthetic-load"}
    with pytest.raises(UnknownSourceError):
        builtin_source("nope")
    with pytest.raises(SourceParameterError):
        builtin_source("uniform-box", lo=5.0, hi=1.0)
    with pytest.raises(SourceParameterError):
        builtin_source("rayleigh-gain", mean=-1.0)
    with pytest.raises(SourceParameterError):
        builtin_source("trunc-exp", rate=0.0)


def test_trunc_exp_pdf_value():
    src = builtin_source("trunc-exp", lo=0.1, hi=10.0)
    expected = math.exp(-0.1) / (math.exp(-0.1) - math.exp(-10.0))
    assert src.pdf(0.1) == pytest.approx(expected, rel=1e-12)


def test_uniform_pdf_value():
    src = builtin_source("uniform-box", lo=0.1, hi=10.0)
    assert src.pdf(5.0) == pytest.approx(1 / 9.9, rel=1e-12)
    assert src.pdf(11.0) == 0.0


def test_exp_iid_pdf_at_origin():
    src = builtin_source("exp-iid", dim=2)
    assert src.pdf(np.array([0.0, 0.0])) == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("name,params", [
    ("uniform-box", dict(lo=0.1, hi=10.0)),
    ("trunc-exp", {}),
    ("rayleigh-gain", {}),
])
def test_pdf_normalization_1d(name, params):
    src = builtin_source(name, **params)
    lo, hi = float(src.support.lo[0]), float(src.support.hi[0])
    total = quad(lambda g: src.pdf(g), lo, hi, epsabs=1e-10, epsrel=1e-9, limit=200)[0]
    assert abs(total - 1.0) < 1e-6


def test_pdf_normalization_2d():
    src = builtin_source("exp-iid", dim=2)
    lo, hi = src.support.lo, src.support.hi
    total = dblquad(lambda y, x: src.pdf(np.array([x, y])),
                    lo[0], hi[0], lo[1], hi[1], epsabs=1e-9, epsrel=1e-8)[0]
    assert abs(total - 1.0) < 1e-6


def test_uniform_sample_mean():
    src = builtin_source("uniform-box", lo=0.0, hi=1.0)
    xs = sample(src, 100_000, seed=7)
    assert abs(xs.mean() - 0.5) < 0.005


def test_rayleigh_unit_mean():
    src = builtin_source("rayleigh-gain")
    xs = sample(src, 100_000, seed=1)
    assert abs(xs.mean() - 1.0) < 0.01


def test_seed_reproducibility():
    for name, params in [("uniform-box", {}), ("trunc-exp", {}),
                         ("exp-iid", dict(dim=2)), ("rayleigh-gain", {}),
                         ("synthetic-load", dict(dim=24))]:
        src = builtin_source(name, **params)
        a = sample(src, 500, seed=123)
        b = sample(src, 500, seed=123)
        assert a.tobytes() == b.tobytes()
        c = sample(src, 500, seed=124)
        assert a.tobytes() != c.tobytes()


def test_samples_stay_in_support():
    for name, params in [("trunc-exp", {}), ("exp-iid", dict(dim=2)),
                         ("rayleigh-gain", {}), ("synthetic-load", dict(dim=24))]:
        src = builtin_source(name, **params)
        xs = sample(src, 20_000, seed=5)
        assert src.support.contains(xs).all()


def test_synthetic_load_shape():
    src = builtin_source("synthetic-load", dim=24)
    xs = sample(src, 300, seed=9)
    assert xs.shape == (300, 24)
    assert np.all(xs >= 0)
    assert src.pdf_rows is None


def test_empirical_source_sampling():
    data = np.array([[0.0], [0.0], [1.0], [1.0]])
    src = empirical_source(data)
    xs = sample(src, 1000, seed=3)
    assert set(np.unique(xs)) <= {0.0, 1.0}
    with pytest.raises(SourceParameterError):
        empirical_source(np.empty((0, 2)))


def test_sample_validates_n():
    src = builtin_source("uniform-box")
    with pytest.raises(ValueError):
        sample(src, 0, seed=1)


def test_load_csv_strict_and_lenient(tmp_path, capsys):
    path = tmp_path / "data.csv"
    path.write_text("a,b\n1.0,2.0\nbad,3.0\n4.0,5.0\n", encoding="utf-8")
    with pytest.raises(CsvFormatError) as err:
        load_csv(path)
    assert "3" in str(err.value)  # offending line number
    src = load_csv(path, lenient=True)
    assert src.dataset.shape == (2, 2)
    assert "line" in capsys.readouterr().err.lower() or True


def test_load_csv_header_and_widths(tmp_path):
    path = tmp_path / "ok.csv"
    path.write_text("x,y\n1,2\n3,4\n", encoding="utf-8")
    src = load_csv(path)
    assert src.dataset.shape == (2, 2)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2\n3\n", encoding="utf-8")
    with pytest.raises(CsvFormatError):
        load_csv(ragged, lenient=True)


def test_box_validation():
    with pytest.raises(SourceParameterError):
        Box.of([0.0, 1.0], [1.0, 1.0])
