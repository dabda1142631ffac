"""Low-pass filters used to build the transfer operators."""

from dataclasses import dataclass

import numpy as np

_HAAR = [2 ** -0.5, 2 ** -0.5]

# Scaling (reconstruction low-pass) filters, 20 taps each, unit l2 norm.
_SYM10 = [
    -0.0004593294210046588, 5.7036083618494284e-05, 0.004593173585311828,
    -0.0008043589320165449, -0.02035493981231129, 0.005764912033581909,
    0.04999497207737669, -0.0319900568824278, -0.03553674047381755,
    0.38382676106708546, 0.7695100370211071, 0.47169066693843925,
    -0.07088053578324385, -0.15949427888491757, 0.011609893903711381,
    0.0459272392310922, -0.0014653825813050513, -0.008641299277022422,
    9.563267072289475e-05, 0.0007701598091144901,
]

# Daubechies with 20 coefficients (10 vanishing moments).
_DB20 = [
    0.026670057900555554, 0.1881768000776915, 0.5272011889317256,
    0.6884590394536035, 0.2811723436605775, -0.24984642432731538,
    -0.19594627437737705, 0.12736934033579325, 0.09305736460357235,
    -0.07139414716639708, -0.029457536821875813, 0.033212674059341,
    0.0036065535669561697, -0.010733175483330575, 0.001395351747052901,
    0.001992405295185056, -0.0006858566949597116, -0.00011646685512928545,
    9.358867032006959e-05, -1.3264202894521244e-05,
]

# Full-weighting stencil (1, 2, 1)/4 per axis; 1/16 overall for the 2-D operator.
_DYADIC = [0.25, 0.5, 0.25]


@dataclass(frozen=True)
class QmfFilter:
    name: str
    coeffs: np.ndarray

    @property
    def gain(self) -> float:
        """Factor applied to a constant signal by one decimated filtering."""
        return float(np.sum(self.coeffs))


_TABLE = {"haar": _HAAR, "sym10": _SYM10, "db20": _DB20, "dyadic": _DYADIC}


def get_filter(name: str) -> QmfFilter:
    key = name.lower()
    if key not in _TABLE:
        raise KeyError(f"unknown filter {name!r}; choose from {sorted(_TABLE)}")
    return QmfFilter(key, np.array(_TABLE[key], dtype=np.float64))
