import numpy as np
import pytest

from wastecollect.travel import (
    TravelMatrix,
    generate_city,
    load_city,
    load_matrix,
    save_city,
    save_matrix,
)


def test_load_minimal_matrix(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("2\n0 5\n7 0\n0 3\n4 0\n")
    m = load_matrix(p)
    assert m.n_locations == 2
    assert m.distance[0, 1] == 5 and m.duration[1, 0] == 4


def test_negative_entry_rejected(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("2\n0 -5\n7 0\n0 3\n4 0\n")
    with pytest.raises(ValueError, match="negative"):
        load_matrix(p)


@pytest.mark.parametrize("text", ["", "2\n0 1\n1 0\n", "x\n0", "2\n0 1\n1 0\n0 1\n1 1\n"])
def test_malformed_files_rejected(tmp_path, text):
    p = tmp_path / "m.txt"
    p.write_text(text)
    with pytest.raises(ValueError):
        load_matrix(p)


def test_non_square_rejected():
    with pytest.raises(ValueError, match="square"):
        TravelMatrix(np.zeros((2, 3)), np.zeros((2, 3)))


def test_large_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    n = 854
    d = rng.integers(0, 10**5, size=(n, n))
    np.fill_diagonal(d, 0)
    m = TravelMatrix(d, d // 8)
    save_matrix(m, tmp_path / "big.txt")
    back = load_matrix(tmp_path / "big.txt")
    assert back.n_locations == 854
    assert (back.distance == m.distance).all() and (back.duration == m.duration).all()


def test_generator_is_deterministic():
    a_city, a_m = generate_city(1, 10)
    b_city, b_m = generate_city(1, 10)
    assert a_city.to_dict() == b_city.to_dict()
    assert (a_m.distance == b_m.distance).all()
    c_city, _ = generate_city(2, 10)
    assert c_city.to_dict() != a_city.to_dict()


def test_generator_geometry_and_capacities():
    city, m = generate_city(3, 850, area_km=14)
    assert m.distance.max() <= 14 * np.sqrt(2) * 1000 + 1
    assert set(city.capacities) <= {4000, 5000, 6000}
    assert (m.distance == m.distance.T).all()
    assert (np.asarray(city.rates) >= 0).all()


def test_generator_fill_times():
    city, _ = generate_city(4, 200)
    days = [c.capacity / (np.sum(r) * 100 / 3) for c, r in zip(city.clusters(), city.rates)]
    assert min(days) >= 2 - 1e-9 and max(days) <= 7 + 1e-9


def test_synthetic_matrix_is_metric():
    _, m = generate_city(5, 60)
    assert m.is_metric


def test_road_like_matrix_detected():
    d = np.array([[0, 1, 10], [1, 0, 1], [10, 1, 0]])
    assert not TravelMatrix(d, d).is_metric


def test_city_roundtrip(tmp_path):
    city, m = generate_city(6, 12)
    save_matrix(m, tmp_path / "city.matrix.txt")
    save_city(city, tmp_path / "city.json", "city.matrix.txt")
    back, bm = load_city(tmp_path / "city.json")
    assert back.to_dict() == city.to_dict()
    assert (bm.distance == m.distance).all()
    # without a matrix reference the matrix is rebuilt from the coordinates
    save_city(city, tmp_path / "bare.json")
    _, rebuilt = load_city(tmp_path / "bare.json")
    assert (rebuilt.distance == m.distance).all()
