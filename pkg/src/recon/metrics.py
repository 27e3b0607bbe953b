"""Closed-form quantities: entropy, efficiency, throughput, channel BER."""

from __future__ import annotations

import math

from .errors import ParameterError


def binary_entropy(e: float) -> float:
    if not 0.0 <= e <= 1.0:
        raise ParameterError(f"probability out of range: {e}")
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def efficiency(m: int, n: int, p: int, s: int, e: float) -> float:
    """Disclosed information over the Shannon minimum, ``(m-p) / ((n-p-s) h(e))``.

    With ``p = s = 0`` this is the plain fixed-rate efficiency ``(1-R0)/h(e)``.
    """
    if n - p - s <= 0:
        raise ParameterError(f"no key bits left: n={n}, p={p}, s={s}")
    if not 0.0 < e <= 0.5:
        raise ParameterError(f"error rate must lie in (0, 0.5], got {e}")
    return (m - p) / ((n - p - s) * binary_entropy(e))


def throughput(n_success: int, n: int, p0: int, seconds: float) -> float:
    """Reconciled key bits per second."""
    if seconds <= 0:
        raise ParameterError(f"elapsed time must be positive, got {seconds}")
    return n_success * (n - p0) / seconds


def snr_to_ber(snr_db: float) -> float:
    """Hard-decision BPSK bit error rate ``Q(sqrt(SNR))`` for an SNR in dB."""
    if not math.isfinite(snr_db):
        raise ParameterError(f"SNR must be finite, got {snr_db}")
    e = 0.5 * math.erfc(math.sqrt(10.0 ** (snr_db / 10.0)) / math.sqrt(2.0))
    return min(max(e, math.ulp(0.0)), 0.5 - 1e-12)
