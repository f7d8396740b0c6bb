import numpy as np
import pytest

from trimcurve.data import Dataset, read_csv
from trimcurve.dgp import DGPSpec, dgp_m, dgp_mu, generate_dataset
from trimcurve.errors import SchemaError


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset.from_arrays(np.zeros((3, 1)), [0, 1], [0, 1, 2])
    with pytest.raises(ValueError):
        Dataset.from_arrays(np.zeros((2, 1)), [0, np.nan], [0, 1])
    with pytest.raises(ValueError):
        Dataset.from_arrays(np.zeros((2, 1)), [0, 1], [0, 1], w=[-1, 2])
    d = Dataset.from_arrays(np.arange(3.0), [0, 1, 2], [1, 2, 3])
    assert d.x.shape == (3, 1) and d.p == 1 and len(d) == 3
    with pytest.raises(ValueError):
        d.a[0] = 5


def test_csv_round_trip(tmp_path):
    d = generate_dataset(DGPSpec(n=50), 1).with_weights(np.linspace(0.5, 2, 50))
    d.to_csv(tmp_path / "d.csv")
    back = read_csv(tmp_path / "d.csv")
    for name in ("x", "a", "y", "w"):
        assert np.array_equal(getattr(back, name), getattr(d, name))


@pytest.mark.parametrize(
    "text, where",
    [
        ("a,y\n1,2\n", ":1:"),
        ("x1,x3,a,y\n1,2,3,4\n", ":1:"),
        ("x1,a\n1,2\n", ":1:"),
        ("x1,a,y,z\n1,2,3,4\n", ":1:"),
        ("x1,a,y\n1,2,3\n1,2\n", ":3:"),
        ("x1,a,y\n1,2,3\n1,b,3\n", ":3:"),
        ("x1,a,y\n1,2,inf\n", ":2:"),
        ("x1,a,y,w\n1,2,3,-1\n", ":2:"),
        ("x1,a,y\n", "no data"),
        ("", "empty"),
    ],
)
def test_schema_errors_carry_line_numbers(tmp_path, text, where):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(SchemaError, match=where):
        read_csv(path)


def test_dgp_shapes_and_moments():
    d = generate_dataset(DGPSpec(n=100_000), 3)
    resid = d.a - dgp_m(d.x[:, 0])
    assert abs(resid.std() - 0.2) < 0.01
    assert abs((d.y - dgp_mu(d.x[:, 0])).mean()) < 3 * 0.5 / np.sqrt(d.n)
    b = generate_dataset(DGPSpec("binary", n=20_000), 3)
    assert set(np.unique(b.a)) <= {0.0, 1.0}
    assert abs(b.a.mean() - dgp_m(b.x[:, 0]).mean()) < 0.02


def test_dgp_functions():
    assert dgp_m(0.1) == pytest.approx(0.05)
    assert dgp_m(0.25) == pytest.approx(0.15)
    assert dgp_m(0.5) == pytest.approx(0.5)
    assert dgp_mu(0.2) == pytest.approx(0.5)
    assert dgp_mu(1.0) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        dgp_m(1.5)
    with pytest.raises(ValueError):
        DGPSpec("poisson")
