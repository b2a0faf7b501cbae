"""Samplers for Gaussian ensemble eigenvalue spectra.

Three matrix models are provided: dense Gaussian matrices for the classical
Dyson indices beta = 1, 2, 4 (real symmetric, complex Hermitian, quaternion
self-dual), the symmetric tridiagonal beta-ensemble valid for any beta > 0,
and uncorrelated (Poisson) spectra with unit-mean exponential spacings.

All samplers draw from counter-based Philox streams keyed by
``(seed, stream_index)``, one stream per matrix realization, so that any
subset of trials can be generated independently, in any order, on any number
of workers, with bit-for-bit reproducibility.

Entry variances of the dense models and the tridiagonal model are chosen so
the eigenvalue density carries the Gaussian weight ``exp(-a * sum E_i^2)``
with ``a = 1/2``; other values of the weight are reached by an exact
rescaling of the eigenvalues.  Every downstream ratio statistic is invariant
under that rescaling.
"""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import DomainError

__all__ = [
    "MatrixModel",
    "EnsembleSpec",
    "RngStream",
    "Spectrum",
    "sample_dense_gaussian",
    "sample_tridiagonal_beta",
    "sample_surmise_spectrum",
    "sample_poisson_spectrum",
    "sample_spectrum",
    "sample_eigenvalue_block",
    "tridiagonal_sturm_count",
    "save_spectra_csv",
    "load_spectra_csv",
    "CHUNK_TRIALS",
]

# Trials per work chunk in batched runs.  Fixed so that chunk composition --
# and therefore every floating-point result -- never depends on worker count.
CHUNK_TRIALS = 8192

# Tridiagonal matrices up to this size are embedded densely and solved in
# batches (much lower per-call overhead); larger ones go through the O(n^2)
# tridiagonal LAPACK path one matrix at a time.
_DENSE_EMBED_MAX = 32

# Natural Gaussian weight of the unit-variance constructions below.
_NATURAL_WEIGHT = 0.5

_UINT64 = np.uint64
_TWO64 = 1 << 64


class MatrixModel(Enum):
    DENSE_GAUSSIAN = "dense"
    TRIDIAGONAL_BETA = "tridiagonal"
    POISSON_UNCORRELATED = "poisson"


@dataclass(frozen=True)
class EnsembleSpec:
    """Which ensemble to sample.

    Parameters
    ----------
    beta : float
        Dyson index; must be one of {1, 2, 4} for the dense model and any
        positive real for the tridiagonal model.  Ignored by the Poisson
        model (conventionally 0).
    n : int
        Matrix dimension, i.e. number of levels per realization (>= 2).
        Surmise-mode studies of the k-th order ratio use n = 2k + 1.
    model : MatrixModel
        Matrix model realizing the eigenvalue density.
    scale_a : float
        Gaussian weight of the eigenvalue density, ``exp(-scale_a sum E^2)``.
        Immaterial to every ratio statistic (scale invariance).
    """

    beta: float
    n: int
    model: MatrixModel = MatrixModel.TRIDIAGONAL_BETA
    scale_a: float = 0.5

    def __post_init__(self):
        if self.model is not MatrixModel.POISSON_UNCORRELATED:
            if not self.beta > 0:
                raise DomainError(f"beta must be positive, got {self.beta}")
            if self.model is MatrixModel.DENSE_GAUSSIAN and self.beta not in (1, 2, 4):
                raise DomainError(
                    f"dense Gaussian model requires beta in {{1, 2, 4}}, got {self.beta}"
                )
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n}")
        if not self.scale_a > 0:
            raise DomainError(f"scale_a must be positive, got {self.scale_a}")

    def digest(self) -> str:
        """Short human-readable identifier used in series provenance."""
        return f"{self.model.value}(beta={self.beta:g},n={self.n},a={self.scale_a:g})"


@dataclass(frozen=True)
class RngStream:
    """Identifier of one independent Philox substream.

    Distinct ``stream_index`` values give statistically independent streams;
    identical ``(seed, stream_index)`` pairs reproduce output bit for bit.
    """

    seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.stream_index < 0 or self.stream_index >= _TWO64:
            raise DomainError(f"stream_index out of range: {self.stream_index}")

    def philox_key(self) -> np.ndarray:
        return np.array([self.seed % _TWO64, self.stream_index], dtype=_UINT64)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this substream."""
        return np.random.Generator(np.random.Philox(counter=0, key=self.philox_key()))


class _StreamPool:
    """Reusable generator that can be repositioned onto any substream.

    Re-keying a single Philox bit generator is several times cheaper than
    constructing a new ``Generator`` per trial; the streams produced are
    bit-identical to ``RngStream(seed, i).generator()``.
    """

    def __init__(self, seed: int):
        self._bg = np.random.Philox(counter=0, key=np.array([seed % _TWO64, 0], dtype=_UINT64))
        self.generator = np.random.Generator(self._bg)
        self._state = self._bg.state

    def reset(self, stream_index: int) -> np.random.Generator:
        st = self._state
        st["state"]["key"][1] = stream_index
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        self._bg.state = st
        return self.generator


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One realization's sorted eigenvalues."""

    eigenvalues: np.ndarray
    spec: EnsembleSpec
    seed_tag: int = 0

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", ev)
        if ev.ndim != 1 or ev.size != self.spec.n:
            raise DomainError(
                f"expected {self.spec.n} eigenvalues, got shape {ev.shape}"
            )
        if np.any(np.diff(ev) < 0):
            raise DomainError("eigenvalues must be sorted ascending")

    @property
    def n(self) -> int:
        return self.eigenvalues.size


def _rescale(eigs: np.ndarray, scale_a: float) -> np.ndarray:
    # exact map from the natural weight 1/2 to the requested one
    c = math.sqrt(_NATURAL_WEIGHT / scale_a)
    if c != 1.0:
        eigs = eigs * c
    return eigs


# ---------------------------------------------------------------------------
# per-trial draws (the draw order defines the stream layout; the batch
# sampler below must replay it exactly)
# ---------------------------------------------------------------------------


def _draw_tridiagonal(gen, n, beta):
    diag = gen.standard_normal(n)
    dof = beta * np.arange(n - 1, 0, -1, dtype=float)
    off = np.sqrt(gen.chisquare(dof)) / math.sqrt(2.0)
    return diag, off


def _draw_dense(gen, n, beta):
    if beta == 1:
        m = gen.standard_normal((n, n))
        return (m + m.T) * 0.5
    if beta == 2:
        x = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
        return (x + x.conj().T) * 0.5
    # beta == 4: quaternion self-dual matrix in its 2n x 2n complex embedding
    x = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
    y = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
    a = (x + x.conj().T) * 0.5
    b = (y - y.T) * 0.5
    top = np.hstack([a, b])
    bot = np.hstack([-b.conj(), a.conj()])
    return np.vstack([top, bot])


def sample_dense_gaussian(spec: EnsembleSpec, rng: RngStream) -> Spectrum:
    """Sorted eigenvalues of one dense GOE/GUE/GSE matrix.

    For beta = 4 the quaternion matrix is embedded as a 2n x 2n complex
    Hermitian matrix; the Kramers-degenerate eigenvalue pairs are collapsed
    by keeping every second sorted eigenvalue, leaving n distinct levels.
    """
    if spec.model is not MatrixModel.DENSE_GAUSSIAN:
        raise DomainError(f"spec.model must be DENSE_GAUSSIAN, got {spec.model}")
    gen = rng.generator()
    h = _draw_dense(gen, spec.n, spec.beta)
    eigs = np.linalg.eigvalsh(h)
    if spec.beta == 4:
        eigs = eigs[::2]
    return Spectrum(_rescale(eigs, spec.scale_a), spec, rng.stream_index)


def sample_tridiagonal_beta(spec: EnsembleSpec, rng: RngStream) -> Spectrum:
    """Sorted eigenvalues of one symmetric tridiagonal beta-ensemble matrix.

    Diagonal entries are standard Gaussian and the off-diagonal entries are
    chi-distributed with beta*(n-1), beta*(n-2), ..., beta degrees of freedom
    (scaled by 1/sqrt(2)), which realizes the Gaussian eigenvalue density for
    arbitrary beta > 0 at a cost of O(n^2) per realization.
    """
    if spec.model is not MatrixModel.TRIDIAGONAL_BETA:
        raise DomainError(f"spec.model must be TRIDIAGONAL_BETA, got {spec.model}")
    gen = rng.generator()
    diag, off = _draw_tridiagonal(gen, spec.n, spec.beta)
    eigs = _tridiagonal_eigvals(diag, off)
    return Spectrum(_rescale(eigs, spec.scale_a), spec, rng.stream_index)


def _tridiagonal_eigvals(diag, off):
    n = diag.size
    if n <= _DENSE_EMBED_MAX:
        m = np.zeros((n, n))
        idx = np.arange(n)
        m[idx, idx] = diag
        m[idx[:-1], idx[1:]] = off
        m[idx[1:], idx[:-1]] = off
        return np.linalg.eigvalsh(m)
    return eigvalsh_tridiagonal(diag, off)


def sample_poisson_spectrum(n: int, rng: RngStream) -> Spectrum:
    """Spectrum of n uncorrelated levels (iid unit-mean exponential spacings)."""
    if int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n}")
    spec = EnsembleSpec(beta=0.0, n=int(n), model=MatrixModel.POISSON_UNCORRELATED)
    gen = rng.generator()
    levels = np.cumsum(gen.exponential(1.0, size=int(n)))
    return Spectrum(levels, spec, rng.stream_index)


def sample_surmise_spectrum(
    k: int, beta: float, rng: RngStream, cross_check: bool = False
) -> Spectrum:
    """Minimal spectrum supporting a k-th order ratio: n = 2k + 1 levels.

    Delegates to the tridiagonal sampler; with ``cross_check=True`` and a
    classical beta in {1, 2, 4} the dense sampler is used instead.
    """
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k}")
    n = 2 * int(k) + 1
    if cross_check and beta in (1, 2, 4):
        spec = EnsembleSpec(beta=beta, n=n, model=MatrixModel.DENSE_GAUSSIAN)
        return sample_dense_gaussian(spec, rng)
    spec = EnsembleSpec(beta=beta, n=n, model=MatrixModel.TRIDIAGONAL_BETA)
    return sample_tridiagonal_beta(spec, rng)


def sample_spectrum(spec: EnsembleSpec, rng: RngStream) -> Spectrum:
    """Dispatch to the sampler matching ``spec.model``."""
    if spec.model is MatrixModel.DENSE_GAUSSIAN:
        return sample_dense_gaussian(spec, rng)
    if spec.model is MatrixModel.TRIDIAGONAL_BETA:
        return sample_tridiagonal_beta(spec, rng)
    return sample_poisson_spectrum(spec.n, rng)


# ---------------------------------------------------------------------------
# batched sampling
# ---------------------------------------------------------------------------


def sample_eigenvalue_block(
    spec: EnsembleSpec, seed: int, start: int, count: int
) -> np.ndarray:
    """Eigenvalue rows for trials ``start .. start+count-1``.

    Returns a ``(count, spec.n)`` array whose row j is bit-identical to
    ``sample_spectrum(spec, RngStream(seed, start + j)).eigenvalues``.
    Batching only the eigensolves keeps the per-trial streams intact while
    amortizing the LAPACK call overhead.
    """
    if count <= 0:
        return np.empty((0, spec.n), dtype=float)
    pool = _StreamPool(seed)
    n = spec.n

    if spec.model is MatrixModel.POISSON_UNCORRELATED:
        out = np.empty((count, n))
        for j in range(count):
            gen = pool.reset(start + j)
            out[j] = gen.exponential(1.0, size=n)
        return np.cumsum(out, axis=1)

    if spec.model is MatrixModel.TRIDIAGONAL_BETA:
        if n <= _DENSE_EMBED_MAX:
            mats = np.zeros((count, n, n))
            idx = np.arange(n)
            dof = spec.beta * np.arange(n - 1, 0, -1, dtype=float)
            inv_sqrt2 = 1.0 / math.sqrt(2.0)
            for j in range(count):
                gen = pool.reset(start + j)
                mats[j, idx, idx] = gen.standard_normal(n)
                off = np.sqrt(gen.chisquare(dof)) * inv_sqrt2
                mats[j, idx[:-1], idx[1:]] = off
                mats[j, idx[1:], idx[:-1]] = off
            eigs = _batched_eigvalsh(mats)
        else:
            eigs = np.empty((count, n))
            for j in range(count):
                gen = pool.reset(start + j)
                diag, off = _draw_tridiagonal(gen, n, spec.beta)
                eigs[j] = eigvalsh_tridiagonal(diag, off)
        return _rescale(eigs, spec.scale_a)

    # dense Gaussian
    dim = 2 * n if spec.beta == 4 else n
    dtype = float if spec.beta == 1 else complex
    mats = np.empty((count, dim, dim), dtype=dtype)
    for j in range(count):
        mats[j] = _draw_dense(pool.reset(start + j), n, spec.beta)
    eigs = _batched_eigvalsh(mats)
    if spec.beta == 4:
        eigs = eigs[:, ::2]
    return _rescale(eigs, spec.scale_a)


def _batched_eigvalsh(mats):
    # cap the elements handed to the gufunc in one go; per-matrix results do
    # not depend on how the batch is cut
    count, dim = mats.shape[0], mats.shape[1]
    block = max(1, 4_000_000 // (dim * dim))
    if count <= block:
        return np.linalg.eigvalsh(mats)
    parts = [np.linalg.eigvalsh(mats[i : i + block]) for i in range(0, count, block)]
    return np.vstack(parts)


# ---------------------------------------------------------------------------
# eigensolver verification
# ---------------------------------------------------------------------------


def tridiagonal_sturm_count(diag, off, x: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal matrix below x.

    Sign count of the pivots of the shifted LDL^T recurrence (Sturm
    sequence); an eigensolver-independent way to locate spectra, used to
    verify that returned eigenvalues each bracket exactly one root.
    """
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    count = 0
    q = diag[0] - x
    if q < 0:
        count += 1
    for i in range(1, diag.size):
        if q == 0.0:
            q = 1e-300
        q = (diag[i] - x) - off[i - 1] * off[i - 1] / q
        if q < 0:
            count += 1
    return count


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_spectra_csv(path, spectra, meta: str | None = None) -> None:
    """Write realizations as CSV rows ``trial_index, E_1, ..., E_n``.

    ``meta``, when given, is recorded as a single leading ``#`` comment line
    (run provenance); readers skip it.
    """
    spectra = list(spectra)
    if not spectra:
        raise DomainError("no spectra to save")
    n = spectra[0].n
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write(f"# {meta}\n")
        writer = csv.writer(fh)
        writer.writerow(["trial_index"] + [f"E_{i}" for i in range(1, n + 1)])
        for sp in spectra:
            if sp.n != n:
                raise DomainError("all spectra must have the same level count")
            writer.writerow([sp.seed_tag] + [format(e, ".17g") for e in sp.eigenvalues])


def load_spectra_csv(path):
    """Read a spectra CSV back as ``(trial_indices, eigenvalue_rows)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        while header and header[0].startswith("#"):
            header = next(reader)
        if not header or header[0] != "trial_index":
            raise DomainError(f"unrecognized spectra CSV header in {path}")
        idx, rows = [], []
        for row in reader:
            idx.append(int(row[0]))
            rows.append([float(v) for v in row[1:]])
    return np.asarray(idx, dtype=np.int64), np.asarray(rows, dtype=float)
