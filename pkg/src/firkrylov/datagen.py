"""Synthetic FIR systems: filtered white-noise input, second-order truth, output noise at a set SNR."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .linops import SystemData, ToeplitzOperator


@dataclass
class SynthSpec:
    """Synthetic-system settings.

    ``snr`` is the power ratio of noiseless output to noise, linear unless
    ``snr_db`` is set; ``math.inf`` gives noiseless output.
    """

    a: float = 0.2
    m: int = 10_000
    n: int = 2000
    snr: float = 10.0
    seed: int = 0
    snr_db: bool = False

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError(f"a must lie in (0, 1), got {self.a!r}")
        if int(self.n) != self.n or not 1 <= self.n <= self.m:
            raise ValueError(f"need 1 <= n <= m, got n={self.n}, m={self.m}")
        ok = (np.isfinite(self.snr) or self.snr == math.inf) if self.snr_db else self.snr > 0
        if not ok:
            raise ValueError(f"snr must be positive, got {self.snr!r}")

    @property
    def noiseless(self):
        return math.isinf(self.snr) and self.snr > 0

    @property
    def snr_linear(self):
        return 10.0 ** (self.snr / 10.0) if self.snr_db else float(self.snr)


def true_fir(a, n):
    """Impulse response ``h_j = (j + 1) a^j`` of ``(1 - a z^-1)^-2``."""
    if n < 1:
        raise ValueError("n must be positive")
    j = np.arange(n)
    return (j + 1) * float(a) ** j


def generate(spec):
    """Draw one system: ``u`` standard Gaussian, ``y = Phi theta + e``.

    The noise is rescaled so that the empirical power ratio matches the
    target SNR.
    """
    rng = np.random.default_rng(spec.seed)
    u = rng.standard_normal(spec.m)
    theta = true_fir(spec.a, spec.n)
    y0 = ToeplitzOperator(u, spec.n).apply(theta)
    if spec.noiseless:
        y = y0.copy()
    else:
        e = rng.standard_normal(spec.m)
        e *= np.sqrt(np.mean(y0**2) / (spec.snr_linear * np.mean(e**2)))
        y = y0 + e
    return SystemData(u=u, y=y, n=spec.n, theta_true=theta)


def empirical_snr(data):
    y0 = ToeplitzOperator(data.u, data.n).apply(data.theta_true)
    noise = data.y - y0
    return float(np.mean(y0**2) / np.mean(noise**2))


# -- files ------------------------------------------------------------------


def write_signals(path, u, y):
    """CSV with header ``u,y``; ``%.17g`` round-trips doubles exactly."""
    np.savetxt(path, np.column_stack([u, y]), delimiter=",", header="u,y", comments="", fmt="%.17g")


def read_signals(path):
    """Read a ``u,y`` CSV; lines starting with ``#`` are skipped."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines or lines[0].strip().replace(" ", "") != "u,y":
        raise ValueError(f"{path}: expected header 'u,y'")
    arr = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if arr.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    return arr[:, 0].copy(), arr[:, 1].copy()


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def write_sidecar(path, spec, theta_true, extra=None):
    d = asdict(spec)
    if spec.noiseless:
        d["snr"] = None
    doc = {"spec": d, "noiseless": spec.noiseless, "theta_true": np.asarray(theta_true).tolist()}
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_sidecar(path):
    doc = json.loads(Path(path).read_text())
    d = dict(doc["spec"])
    if d.get("snr") is None:
        d["snr"] = math.inf
    return SynthSpec(**d), np.asarray(doc["theta_true"], dtype=float), doc


def load_system(csv_path, n=None):
    """``SystemData`` from a signal CSV, with truth and ``n`` from the sidecar if present."""
    u, y = read_signals(csv_path)
    side = sidecar_path(csv_path)
    theta = None
    if side.exists():
        spec, theta, _ = read_sidecar(side)
        n = n or spec.n
    if n is None:
        raise ValueError("FIR order n is required when no sidecar is present")
    if theta is not None and len(theta) != n:
        theta = None
    return SystemData(u=u, y=y, n=int(n), theta_true=theta)
