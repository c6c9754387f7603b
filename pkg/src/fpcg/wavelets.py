"""Discrete wavelet transform with the coiflet family (coif1..coif5).

Mallat cascade over a periodized signal. Periodization keeps the analysis
orthonormal, so reconstruction is exact and coefficient energy equals
signal energy (for lengths divisible by 2^levels). Filters are pinned to
machine precision: each table satisfies orthonormality, sum = sqrt(2), and
the family's vanishing moments to ~1e-15.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InconsistentCoefficientsError,
    TooManyLevelsError,
    UnknownWaveletError,
)

# Scaling (low-pass) filters; the wavelet filter is the alternating-sign reverse.
COIFLET_FILTERS: dict[str, tuple[float, ...]] = {
    "coif1": (
        -1.56557281956648774e-02, -7.27326185583153650e-02, 3.84864848773279811e-01,
        8.52572020091854510e-01, 3.37897660608932782e-01, -7.27326203469915028e-02,
    ),
    "coif2": (
        -7.20549446656356882e-04, -1.82320889826143831e-03, 5.61143489192845405e-03,
        2.36801720507660261e-02, -5.94344184868087905e-02, -7.64885976707234683e-02,
        4.17005186483643153e-01, 8.12723635321639271e-01, 3.86110064901798111e-01,
        -6.73725560065012163e-02, -4.14649371573570583e-02, 1.63873363896283597e-02,
    ),
    "coif3": (
        -3.45997732349901481e-05, -7.09833024675584809e-05, 4.66216959929714909e-04,
        1.11751876936994001e-03, -2.57451768499622350e-03, -9.00797612868369998e-03,
        1.58805448533714012e-02, 3.45550275627556566e-02, -8.23019271521729379e-02,
        -7.17998218636280161e-02, 4.28483476066144120e-01, 7.93777222640648872e-01,
        4.05176902704458997e-01, -6.11233897757736469e-02, -6.57719112069015399e-02,
        2.34526961521262269e-02, 7.78259641994894467e-03, -3.79351286780014660e-03,
    ),
    "coif4": (
        -1.78499232181007399e-06, -3.25966180893392101e-06, 3.12298904530371405e-05,
        6.23390032891819564e-05, -2.59974555929077026e-04, -5.89021042893488468e-04,
        1.26656227564527326e-03, 3.75143822102500229e-03, -5.65828446774827281e-03,
        -1.52117278061593437e-02, 2.50822651276446720e-02, 3.93344232232613195e-02,
        -9.62204440320110627e-02, -6.66274698226417134e-02, 4.34386054614362305e-01,
        7.82238929194064458e-01, 4.15308411370061137e-01, -5.60773157902811903e-02,
        -8.12667030073783991e-02, 2.66823048176803371e-02, 1.60689451000026913e-02,
        -7.34617199065337734e-03, -1.62949613623347657e-03, 8.92312841664750296e-04,
    ),
    "coif5": (
        -9.61369264395528641e-08, -1.63123779065008420e-07, 2.06318921950391214e-06,
        3.71097880516395700e-06, -2.12868758506542124e-05, -4.12905203297386661e-05,
        1.40442333691436226e-04, 3.02195203669299636e-04, -6.37940375809937349e-04,
        -1.66299801502048242e-03, 2.43218406225163353e-03, 6.76346781623419525e-03,
        -9.16295328287401907e-03, -1.97617094737521093e-02, 3.26820320743005863e-02,
        4.12901593276851289e-02, -1.05573622303615569e-01, -6.20371884407236382e-02,
        4.37992721557866060e-01, 7.74289915417446850e-01, 4.21564730990724279e-01,
        -5.20424062624417205e-02, -9.19196570077955993e-02, 2.81671704885229461e-02,
        2.34086945300110774e-02, -1.01309762744850752e-02, -4.15996215150071184e-03,
        2.17872410784849093e-03, 3.59430450093115223e-04, -2.11830175984515223e-04,
    ),
}


def wavelet_filters(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Low-pass and high-pass analysis filters for a coiflet name."""
    try:
        h = np.asarray(COIFLET_FILTERS[name], dtype=np.float64)
    except KeyError:
        raise UnknownWaveletError(
            f"unknown wavelet {name!r}; supported: {sorted(COIFLET_FILTERS)}"
        ) from None
    g = ((-1.0) ** np.arange(h.size)) * h[::-1]
    return h, g


@dataclass(frozen=True)
class WaveletDecomposition:
    """Multi-level DWT coefficients. ``details`` runs coarse to fine."""

    approximation: np.ndarray
    details: tuple[np.ndarray, ...]
    wavelet_name: str
    levels: int
    level_lengths: tuple[int, ...]   # pre-step input length, finest step first

    def __post_init__(self):
        if self.levels < 1 or len(self.details) != self.levels:
            raise InconsistentCoefficientsError(
                f"levels={self.levels} but {len(self.details)} detail bands"
            )

    def coefficient_arrays(self) -> list[np.ndarray]:
        """Approximation then details coarse-to-fine, the feature-block order."""
        return [self.approximation, *self.details]

    def total_coefficients(self) -> int:
        return sum(a.size for a in self.coefficient_arrays())


def _analysis_step(x: np.ndarray, h: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.size
    if n % 2:
        x = np.concatenate([x, x[:1]])   # wrap-pad odd lengths
        n += 1
    k = np.arange(n // 2)[:, None]
    m = np.arange(h.size)[None, :]
    windows = x[(2 * k + m) % n]
    return windows @ h, windows @ g


def _synthesis_step(ca: np.ndarray, cd: np.ndarray, h: np.ndarray,
                    g: np.ndarray, out_len: int) -> np.ndarray:
    n = 2 * ca.size
    out = np.zeros(n)
    k = np.arange(ca.size)[:, None]
    m = np.arange(h.size)[None, :]
    idx = ((2 * k + m) % n).ravel()
    np.add.at(out, idx, (ca[:, None] * h[None, :]).ravel())
    np.add.at(out, idx, (cd[:, None] * g[None, :]).ravel())
    return out[:out_len]


def dwt(x: np.ndarray, wavelet: str = "coif1", levels: int = 3) -> WaveletDecomposition:
    """Multi-level periodized DWT.

    Requires ``2 ** levels <= len(x)``. For lengths divisible by
    ``2 ** levels`` the transform is orthonormal: coefficient energy equals
    signal energy and reconstruction is exact.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("dwt expects a non-empty 1-D vector")
    if levels < 1:
        raise TooManyLevelsError("levels must be >= 1")
    if 2 ** levels > x.size:
        raise TooManyLevelsError(
            f"{levels} levels need at least {2 ** levels} samples, got {x.size}"
        )
    h, g = wavelet_filters(wavelet)
    details: list[np.ndarray] = []
    lengths: list[int] = []
    a = x
    for _ in range(levels):
        lengths.append(a.size)
        a, d = _analysis_step(a, h, g)
        details.append(d)
    return WaveletDecomposition(
        approximation=a,
        details=tuple(reversed(details)),     # coarse to fine
        wavelet_name=wavelet,
        levels=levels,
        level_lengths=tuple(lengths),
    )


def idwt(d: WaveletDecomposition) -> np.ndarray:
    """Inverse Mallat cascade; exact partner of :func:`dwt`."""
    h, g = wavelet_filters(d.wavelet_name)
    a = np.asarray(d.approximation, dtype=np.float64)
    # details are stored coarse to fine; synthesis consumes them in that order
    for detail, out_len in zip(d.details, reversed(d.level_lengths)):
        detail = np.asarray(detail, dtype=np.float64)
        if detail.size != a.size:
            raise InconsistentCoefficientsError(
                f"detail length {detail.size} != approximation length {a.size}"
            )
        a = _synthesis_step(a, detail, h, g, out_len)
    return a
