"""Symmetric quadrature rules on triangles.

Rules are stored in barycentric coordinates with weights normalised to sum
to one, so that ``sum(w * f(x_q)) * area`` integrates over a cell.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    name: str
    degree: int
    barycentric: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)

    @property
    def size(self) -> int:
        return len(self.weights)

    def physical_points(self, corners: np.ndarray) -> np.ndarray:
        """Map the rule onto cells.

        ``corners`` has shape (ncells, 3, 2); the result has shape
        (ncells, nq, 2).
        """
        return np.einsum("qi,cid->cqd", self.barycentric, corners)


def _orbit_s3(a: float, b: float) -> list:
    c = 1.0 - a - b
    pts = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(pts)


def _orbit_s21(a: float) -> list:
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _build(name, degree, orbits):
    bary, w = [], []
    for weight, pts in orbits:
        bary.extend(pts)
        w.extend([weight] * len(pts))
    w = np.asarray(w)
    w = w / w.sum()
    return TriangleRule(name, degree, np.asarray(bary, dtype=float), w)


@lru_cache(maxsize=None)
def get_rule(degree: int) -> TriangleRule:
    """Return a symmetric rule exact for polynomials of the given degree.

    Supported degrees: 1 (centroid), 2 (3-point), 4 (Dunavant, 6 points),
    7 (Dunavant, 13 points).
    """
    if degree == 1:
        return _build("centroid", 1, [(1.0, [(1 / 3, 1 / 3, 1 / 3)])])
    if degree == 2:
        return _build("strang-fix-3", 2, [(1 / 3, _orbit_s21(1 / 6))])
    if degree == 4:
        return _build(
            "dunavant-4",
            4,
            [
                (0.223381589678011, _orbit_s21(0.445948490915965)),
                (0.109951743655322, _orbit_s21(0.091576213509771)),
            ],
        )
    if degree == 7:
        return _build(
            "dunavant-7",
            7,
            [
                (-0.149570044467682, [(1 / 3, 1 / 3, 1 / 3)]),
                (0.175615257433208, _orbit_s21(0.260345966079040)),
                (0.053347235608838, _orbit_s21(0.065130102902216)),
                (0.077113760890257, _orbit_s3(0.048690315425316, 0.312865496004874)),
            ],
        )
    raise ValueError(f"no triangle rule of degree {degree}")


DEFAULT_DEGREE = 4
