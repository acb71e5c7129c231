"""Discrete input signal sets and the Gaussian-input baseline.

Every constellation is normalized so that ``sum(|x|**2) == 2**M``, i.e. unit
average symbol energy. Points are kept in a canonical sorted order so that
anything serialized from them is byte-stable; the Gray label of each point is
carried alongside but no metric in this package depends on it (all metrics are
symbol-wise).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ValidationError

__all__ = [
    "Constellation",
    "GaussianInput",
    "InputModel",
    "make_psk",
    "make_qam",
    "from_name",
    "input_from_json",
]


def _gray(k: int) -> int:
    return k ^ (k >> 1)


@dataclass(frozen=True)
class Constellation:
    points: tuple[complex, ...]
    M: int
    label: str
    labels: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        n = len(self.points)
        if n < 2 or n != 2 ** self.M:
            raise ValidationError(f"constellation size {n} is not 2**M with M={self.M}")
        pts = np.asarray(self.points, dtype=complex)
        if len(np.unique(np.round(pts, 12))) != n:
            raise ValidationError("constellation points must be distinct")
        energy = float(np.sum(np.abs(pts) ** 2))
        if abs(energy / n - 1.0) > 1e-12:
            raise ValidationError(f"average symbol energy {energy / n!r} != 1")

    @classmethod
    def from_points(cls, points, label: str, labels=None) -> "Constellation":
        """Normalize ``points`` to unit average energy and sort canonically."""
        pts = np.asarray(points, dtype=complex).ravel()
        n = len(pts)
        M = int(round(math.log2(n))) if n > 0 else 0
        pts = pts / math.sqrt(np.mean(np.abs(pts) ** 2))
        if labels is None:
            labels = range(n)
        key = np.lexsort((np.round(pts.imag, 12), np.round(pts.real, 12)))
        labels = tuple(int(list(labels)[i]) for i in key)
        return cls(tuple(complex(p) for p in pts[key]), M, label, labels)

    @property
    def size(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=complex)

    def rotated(self, phase: float) -> "Constellation":
        pts = self.as_array() * np.exp(1j * phase)
        return Constellation.from_points(pts, f"{self.label}@{phase:g}", self.labels)

    def product_levels(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Return real level sets ``(A, B)`` if the points are exactly ``A x iB``.

        Square QAM (and QPSK) factor into two PAM alphabets, BPSK into a PAM
        alphabet and the single level ``{0}``. Returns None otherwise.
        """
        pts = self.as_array()
        re = np.unique(np.round(pts.real, 12))
        im = np.unique(np.round(pts.imag, 12))
        if len(re) * len(im) != len(pts):
            return None
        grid = {(r, i) for r in re for i in im}
        if grid != {(round(p.real, 12), round(p.imag, 12)) for p in pts}:
            return None
        return re.astype(float), im.astype(float)

    def to_json(self) -> dict:
        return {
            "kind": "constellation",
            "label": self.label,
            "M": self.M,
            "points": [[p.real, p.imag] for p in self.points],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class GaussianInput:
    """Circularly symmetric Gaussian input; metrics are closed form."""

    label: str = "gaussian"

    @property
    def M(self) -> float:
        return math.inf

    def to_json(self) -> dict:
        return {"kind": "gaussian", "label": self.label}

    def digest(self) -> str:
        return "gaussian"


InputModel = Union[Constellation, GaussianInput]


def make_psk(M: int) -> Constellation:
    """2**M-PSK with Gray labels. BPSK is {+1, -1}, QPSK is {(+-1 +-1j)/sqrt(2)}."""
    if not 1 <= M <= 6:
        raise ValidationError(f"PSK needs 1 <= M <= 6, got {M}")
    K = 2**M
    offset = 0.0 if K == 2 else math.pi / K
    k = np.arange(K)
    pts = np.exp(1j * (2 * math.pi * k / K + offset))
    name = {1: "bpsk", 2: "qpsk"}.get(M, f"{K}psk")
    return Constellation.from_points(pts, name, [_gray(i) for i in k])


def make_qam(M: int) -> Constellation:
    """Square 2**M-QAM, Gray labeled per dimension."""
    if M % 2 or not 2 <= M <= 8:
        raise ValidationError(f"square QAM needs even 2 <= M <= 8, got {M}")
    L = 2 ** (M // 2)
    lev = 2 * np.arange(L) - L + 1
    half = M // 2
    pts, labels = [], []
    for i, re in enumerate(lev):
        for q, im in enumerate(lev):
            pts.append(complex(re, im))
            labels.append((_gray(i) << half) | _gray(q))
    return Constellation.from_points(pts, f"{2**M}qam", labels)


_NAMED = {
    "bpsk": lambda: make_psk(1),
    "qpsk": lambda: make_psk(2),
    "4qam": lambda: make_qam(2),
    "8psk": lambda: make_psk(3),
    "16psk": lambda: make_psk(4),
    "16qam": lambda: make_qam(4),
    "64qam": lambda: make_qam(6),
    "256qam": lambda: make_qam(8),
    "gaussian": GaussianInput,
}


def from_name(name: str) -> InputModel:
    key = name.strip().lower()
    if key in _NAMED:
        return _NAMED[key]()
    for prefix, ctor in (("psk:", make_psk), ("qam:", make_qam)):
        if key.startswith(prefix):
            return ctor(int(key[len(prefix):]))
    raise ValidationError(f"unknown input model {name!r}")


def input_from_json(obj: dict) -> InputModel:
    if obj.get("kind") == "gaussian":
        return GaussianInput(obj.get("label", "gaussian"))
    pts = [complex(re, im) for re, im in obj["points"]]
    c = Constellation(tuple(pts), int(obj["M"]), obj["label"])
    return c
