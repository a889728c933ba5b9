# system/serialization.py
"""
Plain-text system files.

    kind full            (or: reduced)
    d 4
    m 5
    n 1365
    p 1
    [N1] 341             one "row col value" triplet per line
    ...
    [A] 1706
    [K] 3                one dense row per line
    [z]
    [L] 1

Floats are written with repr(), the shortest string that round-trips, so
read_system(write_system(s)) reproduces every entry bit for bit.
"""
from pathlib import Path
from typing import Iterator, Union

import numpy as np
from scipy import sparse

from system.balancing import ReducedSystem
from system.signature_sde import NoiseCovariance, SignatureSDE
from utils.errors import InvariantViolationError
from utils.logger import get_logger

logger = get_logger(__name__)

_HEADER_KEYS = ("kind", "d", "m", "n", "p")


def _fmt(x: float) -> str:
    return repr(float(x))


def _triplet_lines(M) -> Iterator[str]:
    coo = sparse.coo_matrix(M)
    # column-major, matching the CSC storage of the full system
    order = np.lexsort((coo.row, coo.col))
    yield f"{coo.nnz}"
    for k in order:
        yield f"{coo.row[k]} {coo.col[k]} {_fmt(coo.data[k])}"


def write_system(path: Union[str, Path], system: Union[SignatureSDE, ReducedSystem]) -> None:
    """
    Write a full or reduced system to a text file.

    :param path: Output file.
    :param system: SignatureSDE or ReducedSystem.
    """
    kind = "full" if isinstance(system, SignatureSDE) else "reduced"
    lines = [
        f"kind {kind}",
        f"d {system.d}",
        f"m {system.m}",
        f"n {system.n}",
        f"p {system.p}",
    ]
    for i, Ni in enumerate(system.N, start=1):
        body = list(_triplet_lines(Ni))
        lines.append(f"[N{i}] {body[0]}")
        lines.extend(body[1:])
    body = list(_triplet_lines(system.A))
    lines.append(f"[A] {body[0]}")
    lines.extend(body[1:])
    lines.append(f"[K] {system.K.dim} " + " ".join(str(lbl) for lbl in system.K.labels))
    lines.extend(" ".join(_fmt(x) for x in row) for row in system.K.K)
    lines.append("[z]")
    lines.append(" ".join(_fmt(x) for x in system.z))
    lines.append(f"[L] {system.p}")
    lines.extend(" ".join(_fmt(x) for x in row) for row in system.L)
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote {kind} system (n={system.n}) to {path}")


class _Reader:
    def __init__(self, path: Union[str, Path]):
        self.path = str(path)
        self.lines = Path(path).read_text().splitlines()
        self.pos = 0

    def next(self) -> list[str]:
        while self.pos < len(self.lines):
            self.pos += 1
            tokens = self.lines[self.pos - 1].split()
            if tokens:
                return tokens
        raise InvariantViolationError(f"{self.path}: unexpected end of file.")

    def fail(self, message: str) -> InvariantViolationError:
        return InvariantViolationError(f"{self.path}, line {self.pos}: {message}")

    def section(self, name: str) -> list[str]:
        tokens = self.next()
        if tokens[0] != f"[{name}]":
            raise self.fail(f"expected section [{name}], found {tokens[0]!r}")
        return tokens[1:]

    def triplets(self, name: str, n: int, fmt: str) -> Union[sparse.csc_matrix, np.ndarray]:
        nnz = int(self.section(name)[0])
        rows, cols, vals = np.empty(nnz, dtype=np.intp), np.empty(nnz, dtype=np.intp), np.empty(nnz)
        for k in range(nnz):
            r, c, v = self.next()
            rows[k], cols[k], vals[k] = int(r), int(c), float(v)
        M = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        M.sort_indices()
        return M if fmt == "sparse" else M.toarray()

    def dense_rows(self, count: int, width: int) -> np.ndarray:
        out = np.empty((count, width))
        for k in range(count):
            row = [float(x) for x in self.next()]
            if len(row) != width:
                raise self.fail(f"expected {width} values, found {len(row)}")
            out[k] = row
        return out


def read_system(path: Union[str, Path]) -> Union[SignatureSDE, ReducedSystem]:
    """
    Read a system written by write_system; full systems are re-verified.

    :param path: System file.
    :return: SignatureSDE (kind full) or ReducedSystem (kind reduced).
    """
    reader = _Reader(path)
    header = {}
    for key in _HEADER_KEYS:
        tokens = reader.next()
        if tokens[0] != key or len(tokens) != 2:
            raise reader.fail(f"expected header field '{key}'")
        header[key] = tokens[1]
    kind = header["kind"]
    if kind not in ("full", "reduced"):
        raise reader.fail(f"unknown system kind {kind!r}")
    d, m, n, p = (int(header[k]) for k in ("d", "m", "n", "p"))

    fmt = "sparse" if kind == "full" else "dense"
    N = tuple(reader.triplets(f"N{i}", n, fmt) for i in range(1, d + 1))
    A = reader.triplets("A", n, fmt)
    k_tokens = reader.section("K")
    k_dim = int(k_tokens[0])
    labels = tuple(int(x) for x in k_tokens[1:])
    K = NoiseCovariance(reader.dense_rows(k_dim, k_dim).reshape(k_dim, k_dim), labels=labels)
    reader.section("z")
    z = reader.dense_rows(1, n)[0]
    reader.section("L")
    L = reader.dense_rows(p, n)

    if kind == "reduced":
        system = ReducedSystem(d=d, m=m, A=A, N=N, K=K, z=z, L=L)
    else:
        system = SignatureSDE(d=d, m=m, N=N, K=K, A=A, z=z, L=L)
        try:
            system.verify()
        except InvariantViolationError as e:
            logger.error(f"System file {path} failed verification: {e}")
            raise
    logger.info(f"Read {kind} system (n={n}, p={p}) from {path}")
    return system
