"""Shared helpers for the test suite."""

import numpy as np
import pytest


def random_spd(rng, n=1, lam_lo=0.1, lam_hi=16.0):
    """Random SPD matrices with eigenvalues in [lam_lo, lam_hi]."""
    a = rng.standard_normal((n, 3, 3))
    q, _ = np.linalg.qr(a)
    lam = rng.uniform(lam_lo, lam_hi, size=(n, 3))
    mats = np.einsum("nij,nj,nkj->nik", q, lam, q)
    return 0.5 * (mats + np.swapaxes(mats, -1, -2))


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
