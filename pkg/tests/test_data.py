import numpy as np
import pytest

from stackgame.data import (DataParseError, DataValidationError, Dataset, SyntheticSpec, generate,
                            load_csv, save_csv)


@pytest.mark.parametrize("gen", ["two_gaussians", "rings", "xor_grid"])
@pytest.mark.parametrize("dims", [1, 2, 5])
def test_generate_in_cube_and_balanced(gen, dims):
    d = generate(SyntheticSpec(gen, n_samples=101, class_separation=0.3, noise=0.1,
                               dims=dims, seed=2))
    assert d.inputs.shape == (101, dims)
    assert d.inputs.min() >= 0 and d.inputs.max() <= 1
    counts = np.bincount(d.labels)[1:]
    assert abs(counts[0] - counts[1]) <= 1


def test_generate_is_deterministic():
    spec = SyntheticSpec("rings", n_samples=50, seed=7)
    a, b = generate(spec), generate(spec)
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert a.id == b.id
    assert generate(SyntheticSpec("rings", n_samples=50, seed=8)).id != a.id


def test_rings_without_noise_lie_on_two_circles():
    d = generate(SyntheticSpec("rings", n_samples=60, class_separation=0.2, noise=0.0, seed=1))
    r = np.linalg.norm(d.inputs - 0.5, axis=1)
    np.testing.assert_allclose(r[d.labels == 1], 0.2, atol=1e-12)
    np.testing.assert_allclose(r[d.labels == 2], 0.4, atol=1e-12)


def test_invalid_specs():
    with pytest.raises(ValueError):
        SyntheticSpec("moons")
    with pytest.raises(ValueError):
        SyntheticSpec("rings", dims=9)
    with pytest.raises(ValueError):
        SyntheticSpec("rings", dims=0)


def test_dataset_validation():
    with pytest.raises(DataValidationError):
        Dataset([[0.5, 1.2]], [1])
    with pytest.raises(DataValidationError):
        Dataset([[0.5, 0.2]], [0])
    with pytest.raises(DataValidationError):
        Dataset(np.zeros((0, 2)), [])
    d = Dataset([[0.1], [0.9]], [1, 2])
    assert d.size == 2 and d.dim == 1 and d.n_classes == 2
    np.testing.assert_array_equal(d.labels0, [0, 1])


def test_csv_round_trip(tmp_path):
    d = generate(SyntheticSpec("xor_grid", n_samples=30, dims=3, seed=4))
    save_csv(d, tmp_path / "d.csv")
    e = load_csv(tmp_path / "d.csv")
    assert e.inputs.tobytes() == d.inputs.tobytes()
    np.testing.assert_array_equal(e.labels, d.labels)
    assert e.id == d.id


def test_csv_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("")
    with pytest.raises(DataParseError):
        load_csv(p)
    p.write_text("0.1,0.2,1\n0.3,abc,2\n")
    with pytest.raises(DataParseError, match=":2:"):
        load_csv(p)
    p.write_text("0.1,0.2,1\n0.3,2\n")
    with pytest.raises(DataParseError, match=":2:"):
        load_csv(p)
    p.write_text("0.1,0.2,0\n")
    with pytest.raises(DataValidationError):
        load_csv(p)
    p.write_text("# comment\n\n0.1,0.2,1\n")
    assert load_csv(p).size == 1
