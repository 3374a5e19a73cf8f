"""Activation descriptors."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

# codes understood by the compiled kernels
KERNEL_CODES = {"square": 0, "erf": 1, "square-clipped": 2}


def _erf_sigma(x):
    return erf(x / _SQRT2)


def _erf_dsigma(x):
    return _SQRT_2_OVER_PI * np.exp(-0.5 * np.square(x))


def _erf_d2sigma(x):
    return -x * _erf_dsigma(x)


def _sq_sigma(x):
    return np.square(x)


def _sq_dsigma(x):
    return 2.0 * np.asarray(x)


def _sq_d2sigma(x):
    return np.full(np.shape(x), 2.0)


@dataclass(frozen=True)
class Activation:
    """Activation ``sigma`` with derivatives.

    ``kind`` is ``"erf"`` (``erf(x / sqrt 2)``), ``"square"`` or ``"custom"``.
    ``d2sigma`` is optional for custom activations; without it (or with a
    clipped square) drifts are assembled from full three-point integrals
    instead of the Stein-reduced pair tables.
    """

    kind: str
    sigma: Callable
    dsigma: Callable
    d2sigma: Optional[Callable] = None
    clip: Optional[float] = None
    name: str = ""

    @classmethod
    def erf(cls):
        return cls("erf", _erf_sigma, _erf_dsigma, _erf_d2sigma, name="erf")

    @classmethod
    def square(cls, clip=None):
        if clip is None:
            return cls("square", _sq_sigma, _sq_dsigma, _sq_d2sigma, name="square")
        K = float(clip)
        if K <= 0:
            raise ValueError("clip level must be positive")
        root = np.sqrt(K)

        def sigma(x):
            return np.minimum(np.square(x), K)

        def dsigma(x):
            x = np.asarray(x)
            return np.where(np.abs(x) < root, 2.0 * x, 0.0)

        return cls("square", sigma, dsigma, None, clip=K, name=f"square-clip{K:g}")

    @classmethod
    def custom(cls, sigma, dsigma, d2sigma=None, name="custom"):
        return cls("custom", sigma, dsigma, d2sigma, name=name)

    @classmethod
    def from_name(cls, name):
        if name in ("erf", "erf-normalized"):
            return cls.erf()
        if name == "square":
            return cls.square()
        if name.startswith("square-clip"):
            return cls.square(float(name[len("square-clip"):]))
        raise ValueError(f"unknown activation {name!r} (expected erf, square, square-clip<K>)")

    @property
    def smooth(self):
        """True when ``d2sigma`` is a valid second derivative everywhere."""
        return self.d2sigma is not None and self.clip is None

    @property
    def closed_form(self):
        """Activations with arcsine/Isserlis closed forms."""
        return self.kind in ("erf", "square") and self.clip is None

    @property
    def kernel_code(self):
        if self.kind == "erf":
            return KERNEL_CODES["erf"]
        if self.kind == "square":
            return KERNEL_CODES["square" if self.clip is None else "square-clipped"]
        return None

    def __repr__(self):
        return f"Activation({self.name or self.kind})"
