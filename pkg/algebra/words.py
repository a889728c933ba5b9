# algebra/words.py
"""
Words over the alphabet {1..d}, the length-first lexicographic coordinates of the
truncated tensor algebra T^m(R^d), and the shuffle algebra of linear functionals.

The coordinate of a word w = (i_1, ..., i_k) is the base-d number
((i_1 * d + i_2) * d + ...) + i_k with digits in 1..d, so the empty word is 0,
words are ordered by length first and lexicographically within a length, and
appending a letter i maps index j to d * j + i.
"""
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Iterator, Mapping, Protocol, Sequence

import numpy as np

from utils.errors import DimensionTooLargeError, TruncationError, WordError

Word = tuple[int, ...]

EMPTY_WORD: Word = ()

_MAX_DIM = np.iinfo(np.intp).max


def dim_truncated(d: int, m: int) -> int:
    """
    Dimension of T^m(R^d), i.e. the number of words of length <= m.

    :param d: Alphabet size, d >= 1.
    :param m: Truncation level, m >= 0.
    :return: sum_{k=0}^{m} d^k.
    """
    if d < 1 or m < 0:
        raise ValueError(f"Need d >= 1 and m >= 0, got d={d}, m={m}.")
    n = m + 1 if d == 1 else (d ** (m + 1) - 1) // (d - 1)
    if n > _MAX_DIM:
        raise DimensionTooLargeError(f"dimension too large: d={d}, m={m} gives n={n}")
    return n


@dataclass(frozen=True)
class BasisOrder:
    """
    Canonical coordinates of T^m(R^d).

    Attributes:
        d (int): Alphabet size.
        m (int): Truncation level.
    """
    d: int
    m: int
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", dim_truncated(self.d, self.m))

    def level_offset(self, k: int) -> int:
        """Index of the first word of length k."""
        if not 0 <= k <= self.m + 1:
            raise TruncationError(f"Level {k} outside 0..{self.m + 1}.")
        return dim_truncated(self.d, k - 1) if k > 0 else 0

    def level_slice(self, k: int) -> slice:
        start = self.level_offset(k)
        return slice(start, start + self.d ** k)

    def level_sizes(self) -> list[int]:
        return [self.d ** k for k in range(self.m + 1)]

    def word_to_index(self, word: Sequence[int]) -> int:
        return word_to_index(word, self)

    def index_to_word(self, index: int) -> Word:
        return index_to_word(index, self)

    def words(self) -> Iterator[Word]:
        """All words in coordinate order."""
        for k in range(self.n):
            yield index_to_word(k, self)

    def levels(self) -> np.ndarray:
        """Word length of every coordinate."""
        return np.repeat(np.arange(self.m + 1), self.level_sizes())


def validate_word(word: Sequence[int], order: BasisOrder) -> Word:
    word = tuple(int(i) for i in word)
    if len(word) > order.m:
        raise WordError(f"Word {format_word(word, order.d)} longer than truncation level {order.m}.")
    for letter in word:
        if not 1 <= letter <= order.d:
            raise WordError(f"Letter {letter} outside 1..{order.d}.")
    return word


def word_to_index(word: Sequence[int], order: BasisOrder) -> int:
    """
    Coordinate of a word in the length-first lexicographic basis.

    :param word: Letters in 1..d, length <= m.
    :param order: Basis order.
    :return: Index in 0..n-1; the empty word maps to 0.
    """
    index = 0
    for letter in validate_word(word, order):
        index = index * order.d + letter
    return index


def index_to_word(index: int, order: BasisOrder) -> Word:
    """Inverse of word_to_index."""
    if not 0 <= index < order.n:
        raise WordError(f"Index {index} outside 0..{order.n - 1}.")
    letters = []
    while index > 0:
        letter = (index - 1) % order.d + 1
        letters.append(letter)
        index = (index - letter) // order.d
    return tuple(reversed(letters))


def format_word(word: Sequence[int], d: int) -> str:
    """Report form of a word: '121' for d <= 9, '1,2,1' otherwise; the empty word is ''."""
    sep = "" if d <= 9 else ","
    return sep.join(str(i) for i in word)


def parse_word(text: str, d: int) -> Word:
    text = text.strip()
    if not text:
        return EMPTY_WORD
    if d <= 9 and "," not in text:
        return tuple(int(c) for c in text)
    return tuple(int(c) for c in text.split(","))


@lru_cache(maxsize=4096)
def _shuffle_counts(w1: Word, w2: Word) -> tuple[tuple[Word, int], ...]:
    # (u a) sh (v b) = ((u sh v b) a) + ((u a sh v) b)
    if not w1:
        return ((w2, 1),)
    if not w2:
        return ((w1, 1),)
    out: Counter = Counter()
    for word, c in _shuffle_counts(w1[:-1], w2):
        out[word + (w1[-1],)] += c
    for word, c in _shuffle_counts(w1, w2[:-1]):
        out[word + (w2[-1],)] += c
    return tuple(sorted(out.items()))


@dataclass(frozen=True)
class LinearFunctional:
    """
    Finite linear combination of words, acting on tensors by the coordinate pairing.

    Attributes:
        terms (Mapping[Word, float]): Nonzero coefficients keyed by word.
    """
    terms: Mapping[Word, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for word, coeff in dict(self.terms).items():
            word = tuple(int(i) for i in word)
            if any(i < 1 for i in word):
                raise WordError(f"Invalid word {word}.")
            if coeff != 0:
                clean[word] = coeff
        object.__setattr__(self, "terms", dict(sorted(clean.items(), key=lambda kv: (len(kv[0]), kv[0]))))

    @classmethod
    def from_word(cls, word: Sequence[int], coeff: float = 1.0) -> "LinearFunctional":
        return cls({tuple(word): coeff})

    @classmethod
    def from_vector(cls, vector: np.ndarray, order: BasisOrder, tol: float = 0.0) -> "LinearFunctional":
        """Functional whose coordinate row is `vector` (entries with |c| <= tol dropped)."""
        vector = np.asarray(vector, dtype=float).ravel()
        if vector.shape[0] != order.n:
            raise TruncationError(f"Vector of length {vector.shape[0]} does not match n={order.n}.")
        return cls({index_to_word(k, order): float(c)
                    for k, c in enumerate(vector) if abs(c) > tol})

    @property
    def degree(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    def coefficient(self, word: Sequence[int]) -> float:
        return self.terms.get(tuple(word), 0)

    def to_vector(self, order: BasisOrder) -> np.ndarray:
        """Coordinate row of the functional in the basis `order`."""
        if self.degree > order.m:
            raise TruncationError(f"Functional of degree {self.degree} exceeds truncation level {order.m}.")
        row = np.zeros(order.n)
        for word, coeff in self.terms.items():
            row[word_to_index(word, order)] = coeff
        return row

    def __add__(self, other: "LinearFunctional") -> "LinearFunctional":
        out = Counter()
        for src in (self.terms, other.terms):
            for word, c in src.items():
                out[word] += c
        return LinearFunctional(dict(out))

    def __mul__(self, scalar: float) -> "LinearFunctional":
        return LinearFunctional({w: scalar * c for w, c in self.terms.items()})

    __rmul__ = __mul__

    def __len__(self) -> int:
        return len(self.terms)


def shuffle(w1: Sequence[int], w2: Sequence[int]) -> LinearFunctional:
    """
    Shuffle product of two words: all order-preserving interleavings, with multiplicity.

    :return: Integer-coefficient functional whose coefficients sum to C(len1 + len2, len1).
    """
    return LinearFunctional(dict(_shuffle_counts(tuple(w1), tuple(w2))))


def shuffle_functionals(l1: LinearFunctional, l2: LinearFunctional) -> LinearFunctional:
    """Bilinear extension of the word shuffle."""
    out = Counter()
    for u, a in l1.terms.items():
        for v, b in l2.terms.items():
            for word, c in _shuffle_counts(u, v):
                out[word] += a * b * c
    return LinearFunctional(dict(out))


def shuffle_mass(w1: Sequence[int], w2: Sequence[int]) -> int:
    return comb(len(w1) + len(w2), len(w1))


class _HasCoordinates(Protocol):
    order: BasisOrder
    coeffs: np.ndarray


def apply_functional(functional: LinearFunctional, tensor: _HasCoordinates) -> float:
    """
    Pairing <l, a> = sum_j gamma_j * a[w_j].

    :param functional: Linear functional of degree <= m.
    :param tensor: Truncated tensor (anything with `order` and `coeffs`).
    :return: Real value of the pairing.
    """
    order = tensor.order
    if functional.degree > order.m:
        raise TruncationError(
            f"Functional of degree {functional.degree} applied to a level-{order.m} tensor."
        )
    return float(sum(c * tensor.coeffs[word_to_index(w, order)] for w, c in functional.terms.items()))
