"""Reproducible problem construction.

Three families: the closed-form 2x2 / 3x3 examples with a spurious fixed
point, gap-controlled random ensembles, and a 1D exchange-kernel model
whose differential part grows like O(N^2) while the kernel part stays
bounded. All generators are pure functions of their seeds; every draw
site uses its own child stream of the seed so problems reproduce bitwise.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGap, InvalidParameter, UnknownName
from .iteration import Problem
from .linalg import HermitianOperator, Spectrum
from .textfmt import canonical_json
from . import mmio

_SEED_MASK = (1 << 64) - 1

# Stream-splitting rule: draw site ``site`` of seed ``seed`` uses
# default_rng(SeedSequence([seed & MASK, site])). Sites used here:
#   0 target spectrum, 1 eigenbasis, 2 exchange factor.
_SITE_SPECTRUM = 0
_SITE_BASIS = 1
_SITE_EXCHANGE = 2


def site_rng(seed: int, site: int) -> np.random.Generator:
    """Child generator for one draw site of a 64-bit seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & _SEED_MASK, int(site)]))


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of the gap-controlled random ensemble."""

    N: int
    n: int
    gap: float
    b_norm: float
    seed: int
    field: str = "real"

    def __post_init__(self):
        if not (1 <= self.n < self.N):
            raise InvalidParameter(f"need 1 <= n < N, got n={self.n}, N={self.N}")
        if self.gap <= 0:
            raise InvalidParameter("gap must be positive")
        if self.b_norm <= 0:
            raise InvalidParameter("b_norm must be positive")
        if self.field not in ("real", "complex"):
            raise InvalidParameter(f"unknown field {self.field!r}")

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "n": self.n,
            "gap": self.gap,
            "b_norm": self.b_norm,
            "seed": self.seed,
            "field": self.field,
        }


def counterexample(which: str) -> Problem:
    """The closed-form problems with a spurious attracting start.

    ``"2x2"``: A = 0, B = diag(-2, -1), n = 1. The second coordinate axis
    is a fixed point of the iteration map even though the solution is the
    first axis. ``"3x3"``: A = diag(0, -2, 0), B = diag(-4, -1, -1), n = 1;
    starting from the third axis the iteration moves to the second axis
    and stays there.
    """
    if which == "2x2":
        a = np.zeros((2, 2))
        b = np.diag([-2.0, -1.0])
        n = 1
    elif which == "3x3":
        a = np.diag([0.0, -2.0, 0.0])
        b = np.diag([-4.0, -1.0, -1.0])
        n = 1
    else:
        raise UnknownName(f"no counterexample named {which!r}")
    return Problem.build(a, b, n, shift=0.0, label=f"counterexample-{which}")


def _haar_unitary(dim: int, rng: np.random.Generator, field: str) -> np.ndarray:
    g = rng.standard_normal((dim, dim))
    if field == "complex":
        g = (g + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    if field == "complex":
        q = q * (d / np.abs(d)).conj()
    else:
        q = q * np.where(d < 0, -1.0, 1.0)
    return q


def _exchange_like(dim: int, rng: np.random.Generator, field: str, b_norm: float) -> np.ndarray:
    """Strictly negative definite B = -(CC* + 0.01 I) scaled to ||B|| = b_norm."""
    c = rng.standard_normal((dim, dim))
    if field == "complex":
        c = (c + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    s = c @ c.conj().T + 0.01 * np.eye(dim, dtype=c.dtype)
    s = (s + s.conj().T) / 2
    lam_max = float(np.linalg.eigvalsh(s)[-1])
    return -(b_norm / lam_max) * s


def _assemble(spectrum_values: np.ndarray, n: int, b_norm: float, seed: int, field: str,
              label: str, meta: dict) -> Problem:
    dim = spectrum_values.shape[0]
    basis = _haar_unitary(dim, site_rng(seed, _SITE_BASIS), field)
    h = (basis * spectrum_values) @ basis.conj().T
    h = (h + h.conj().T) / 2
    b = _exchange_like(dim, site_rng(seed, _SITE_EXCHANGE), field, b_norm)
    a = h - b
    gap = float(spectrum_values[n] - spectrum_values[n - 1])
    lam = np.asarray(spectrum_values, dtype=np.float64)
    lam.setflags(write=False)
    basis.setflags(write=False)
    spectrum = Spectrum(lam, basis)
    wb = np.linalg.eigvalsh(b)
    return Problem(
        A=HermitianOperator(a),
        B=HermitianOperator(b),
        n=n,
        t=0.0,
        spectrum=spectrum,
        gap=gap,
        truth=spectrum.frame(n),
        op_norm=max(abs(float(lam[0])), abs(float(lam[-1]))),
        b_norm=max(abs(float(wb[0])), abs(float(wb[-1]))),
        b_shift_norm=max(abs(float(wb[0])), abs(float(wb[-1]))),
        label=label,
        meta=meta,
    )


def random_problem(spec: EnsembleSpec) -> Problem:
    """Random problem with an exactly controlled gap at n.

    The target spectrum is drawn uniformly on [0, 1), sorted, and the upper
    part is translated so the gap at n is exactly ``spec.gap`` (gap surgery
    rather than rejection, for determinism). The eigenbasis is Haar; B is
    strictly negative definite with ||B|| = b_norm; A is the remainder.
    Deterministic and bitwise reproducible for a fixed spec.
    """
    rng = site_rng(spec.seed, _SITE_SPECTRUM)
    lam = np.sort(rng.uniform(0.0, 1.0, spec.N))
    lam[spec.n:] += (lam[spec.n - 1] + spec.gap) - lam[spec.n]
    return _assemble(
        lam, spec.n, spec.b_norm, spec.seed, spec.field,
        label=f"random-N{spec.N}-n{spec.n}-seed{spec.seed}",
        meta={"ensemble": spec.to_dict()},
    )


def problem_from_spectrum(
    eigenvalues,
    n: int,
    *,
    b_norm: float = 1.0,
    seed: int = 0,
    field: str = "real",
    label: str = "",
) -> Problem:
    """Problem whose A + B has exactly the given target spectrum.

    Same machinery as :func:`random_problem` but with an explicit sorted
    eigenvalue list, for gap-structure studies (small interior gaps, large
    outer gaps).
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.shape[0] < 2:
        raise InvalidParameter("need at least two target eigenvalues")
    if np.any(np.diff(lam) < 0):
        raise InvalidParameter("target eigenvalues must be sorted non-decreasingly")
    if not (1 <= n < lam.shape[0]):
        raise InvalidParameter(f"need 1 <= n < N, got n={n}, N={lam.shape[0]}")
    if lam[n] - lam[n - 1] <= 0:
        raise DegenerateGap("target spectrum has no gap at n")
    if field not in ("real", "complex"):
        raise InvalidParameter(f"unknown field {field!r}")
    if b_norm <= 0:
        raise InvalidParameter("b_norm must be positive")
    return _assemble(
        lam.copy(), n, b_norm, seed, field,
        label=label or f"spectrum-N{lam.shape[0]}-n{n}-seed{seed}",
        meta={"explicit_spectrum": [float(x) for x in lam], "seed": seed, "b_norm": b_norm},
    )


def model_1d_exchange(
    N: int,
    n: int,
    potential_depth: float,
    kernel_strength: float,
    kernel_width: float,
) -> Problem:
    """1D analog of a Hartree-Fock-like problem on a uniform grid.

    A is the Dirichlet second-difference operator plus a Gaussian well, so
    ||A|| grows like O(N^2) under refinement; B is a strictly negative
    definite Gaussian-kernel integral operator whose norm stays O(s).
    """
    if N < 8:
        raise InvalidParameter("N must be at least 8")
    if not (1 <= n < N):
        raise InvalidParameter(f"need 1 <= n < N, got n={n}, N={N}")
    if kernel_strength <= 0:
        raise InvalidParameter("kernel_strength must be positive")
    if kernel_width <= 0:
        raise InvalidParameter("kernel_width must be positive")
    h = 1.0 / (N + 1)
    x = h * np.arange(1, N + 1)
    lap = (np.diag(np.full(N, 2.0)) - np.diag(np.ones(N - 1), 1) - np.diag(np.ones(N - 1), -1))
    v = -potential_depth * np.exp(-((x - 0.5) ** 2) / 0.02)
    a = lap / h**2 + np.diag(v)
    diff = x[:, None] - x[None, :]
    b = -kernel_strength * h * np.exp(-(diff**2) / (2.0 * kernel_width**2))
    b = b - 1e-6 * kernel_strength * np.eye(N)
    return Problem.build(
        a, b, n, shift=0.0,
        label=f"model1d-N{N}-n{n}",
        meta={
            "model": "1d_exchange",
            "potential_depth": potential_depth,
            "kernel_strength": kernel_strength,
            "kernel_width": kernel_width,
        },
    )


def save_problem(problem: Problem, directory) -> str:
    """Write A.mtx, B.mtx, the ground-truth frame, and a JSON manifest.

    Returns the manifest path. Matrices round-trip exactly (17 significant
    digits); the spectrum is recomputed on load from the matrices.
    """
    os.makedirs(directory, exist_ok=True)
    mmio.write_operator(os.path.join(directory, "A.mtx"), problem.A)
    mmio.write_operator(os.path.join(directory, "B.mtx"), problem.B)
    files = {"A": "A.mtx", "B": "B.mtx"}
    if problem.truth is not None:
        mmio.write_frame(os.path.join(directory, "truth.mtx"), problem.truth)
        files["truth"] = "truth.mtx"
    manifest = {
        "format": "ace-lab-problem/1",
        "N": problem.dim,
        "n": problem.n,
        "t": problem.t,
        "field": problem.A.field,
        "label": problem.label,
        "source": problem.meta if problem.meta else "explicit",
        "files": files,
    }
    path = os.path.join(directory, "problem.json")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_json(manifest))
    return path


def load_problem(path) -> Problem:
    """Load a problem saved by :func:`save_problem`.

    ``path`` may be the manifest file or its directory. The spectrum and
    ground truth are recomputed from the stored matrices by dense
    diagonalization, with the stored shift t kept.
    """
    if os.path.isdir(path):
        path = os.path.join(path, "problem.json")
    with open(path, "r", encoding="ascii") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "ace-lab-problem/1":
        raise InvalidParameter(f"not an ace-lab problem manifest: {path}")
    base = os.path.dirname(os.path.abspath(path))
    a = mmio.read_operator(os.path.join(base, manifest["files"]["A"]))
    b = mmio.read_operator(os.path.join(base, manifest["files"]["B"]))
    meta = manifest.get("source")
    return Problem.build(
        a, b, int(manifest["n"]),
        shift=float(manifest["t"]),
        label=manifest.get("label", ""),
        meta=meta if isinstance(meta, dict) else {},
    )
