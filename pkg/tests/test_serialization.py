import numpy as np
import pytest

from system.balancing import ReducedSystem, balance, reduce
from system.gramians import compute_gramians
from system.serialization import read_system, write_system
from system.signature_sde import NoiseCovariance, SignatureSDE, assemble_system
from utils.errors import InvariantViolationError


def _same_matrix(a, b) -> bool:
    a = a.toarray() if hasattr(a, "toarray") else a
    b = b.toarray() if hasattr(b, "toarray") else b
    return np.array_equal(a, b)


def test_full_system_round_trip(small_system, tmp_path):
    path = tmp_path / "system.txt"
    write_system(path, small_system)
    loaded = read_system(path)
    assert isinstance(loaded, SignatureSDE)
    assert (loaded.d, loaded.m, loaded.n, loaded.p) == (2, 2, 7, 1)
    assert _same_matrix(loaded.A, small_system.A)
    assert all(_same_matrix(a, b) for a, b in zip(loaded.N, small_system.N))
    assert np.array_equal(loaded.K.K, small_system.K.K)
    assert np.array_equal(loaded.z, small_system.z)
    assert np.array_equal(loaded.L, small_system.L)


def test_header_and_sections(tmp_path):
    system = assemble_system(4, 5, NoiseCovariance.from_correlation(np.eye(3)))
    path = tmp_path / "system.txt"
    write_system(path, system)
    lines = path.read_text().splitlines()
    assert lines[:5] == ["kind full", "d 4", "m 5", "n 1365", "p 1"]
    assert lines[5] == "[N1] 341"
    assert "[K] 3 2 3 4" in lines


def test_reduced_system_round_trip(small_system, tmp_path):
    pair = compute_gramians(small_system, 1.0)
    red = reduce(small_system, balance(pair.P, pair.Q), 3)
    path = tmp_path / "reduced_3.txt"
    write_system(path, red)
    loaded = read_system(path)
    assert isinstance(loaded, ReducedSystem)
    assert loaded.n == 3
    assert np.array_equal(loaded.A, red.A)
    assert all(np.array_equal(a, b) for a, b in zip(loaded.N, red.N))
    assert np.array_equal(loaded.z, red.z) and np.array_equal(loaded.L, red.L)


def test_tampered_full_system_is_rejected(small_system, tmp_path):
    path = tmp_path / "system.txt"
    write_system(path, small_system)
    lines = path.read_text().splitlines()
    first = lines.index("[N1] 3") + 1
    row, col, _ = lines[first].split()
    lines[first] = f"{row} {col} 2.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvariantViolationError):
        read_system(path)


def test_truncated_file(small_system, tmp_path):
    path = tmp_path / "system.txt"
    write_system(path, small_system)
    path.write_text("\n".join(path.read_text().splitlines()[:-3]) + "\n")
    with pytest.raises(InvariantViolationError):
        read_system(path)


def test_unknown_kind(small_system, tmp_path):
    path = tmp_path / "system.txt"
    write_system(path, small_system)
    path.write_text(path.read_text().replace("kind full", "kind partial", 1))
    with pytest.raises(InvariantViolationError, match="unknown system kind"):
        read_system(path)
