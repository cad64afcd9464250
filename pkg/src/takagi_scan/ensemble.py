"""Random complex symmetric matrices and two-parameter trigonometric fields.

The ensemble draws B with entries x + iy, x and y i.i.d. normal with
variance 1/4, and returns A = B + B^T: diagonal entries then have complex
variance 2 and off-diagonal entries complex variance 1.  The ensemble is
invariant under congruence A -> U^T A U for unitary U (but not under
similarity A -> U^* A U unless U is real), and its singular values follow
the quarter-circle density rho(sigma) = (sqrt(2)/pi) sqrt(n - sigma^2/8)
on [0, sqrt(8 n)] as n grows.

Sampling is counter-based (Philox) with per-realization substreams, so a
realization's matrices depend only on (seed, realization index), never on
scheduling.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotUnitary, OutOfSupport

ENTRY_STD = 0.5  # N(0, 1/4) components for B


def substream(seed, index=0):
    """Counter-based generator for substream ``index`` of a named seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_matrix(n, rng):
    """One ensemble draw: A = B + B^T with B complex Gaussian as above."""
    x = rng.normal(0.0, ENTRY_STD, size=(n, n))
    y = rng.normal(0.0, ENTRY_STD, size=(n, n))
    B = x + 1j * y
    return B + B.T


@dataclass(frozen=True)
class TrigField:
    """A(x, y) = A1 cos x + A2 sin x + A3 cos y + A4 sin y.

    The four coefficient matrices are independent ensemble draws, so the
    field is analytic, 2 pi-periodic in both variables, and at every
    point its entries carry twice the variance of a single draw
    (cos^2 x + sin^2 x + cos^2 y + sin^2 y = 2).
    """

    coeffs: tuple

    @property
    def n(self):
        return self.coeffs[0].shape[0]

    def __call__(self, x, y):
        a1, a2, a3, a4 = self.coeffs
        return a1 * np.cos(x) + a2 * np.sin(x) + a3 * np.cos(y) + a4 * np.sin(y)

    def partial_x(self, x, y):
        a1, a2, _, _ = self.coeffs
        return -a1 * np.sin(x) + a2 * np.cos(x)

    def partial_y(self, x, y):
        _, _, a3, a4 = self.coeffs
        return -a3 * np.sin(y) + a4 * np.cos(y)


def make_field(n, rng):
    """Four independent draws combined into a trigonometric field."""
    return TrigField(tuple(sample_matrix(n, rng) for _ in range(4)))


def field_from_seed(n, seed, realization=0):
    """Regenerate the field of a (seed, realization) pair; used by the
    JSON serialization, which only stores these three numbers."""
    return make_field(n, substream(seed, realization))


def field_spec_to_json(n, seed, realization=0):
    """Serializable description of a field: regeneration beats storage."""
    return {"kind": "trig", "n": int(n), "seed": int(seed), "realization": int(realization)}


def field_from_json(spec):
    """Rebuild a field from :func:`field_spec_to_json` output."""
    if spec.get("kind") != "trig":
        raise ValueError(f"unknown field kind {spec.get('kind')!r}")
    return field_from_seed(spec["n"], spec["seed"], spec.get("realization", 0))


def write_field_coefficients(stem, field):
    """Explicit coefficient dump: one matrix text file per coefficient.

    Writes ``<stem>.A1.txt`` .. ``<stem>.A4.txt`` in the exchange format
    of :func:`takagi_scan.takagi_core.write_matrix`.
    """
    from .takagi_core import write_matrix

    paths = []
    for idx, coeff in enumerate(field.coeffs, start=1):
        path = f"{stem}.A{idx}.txt"
        write_matrix(path, coeff)
        paths.append(path)
    return paths


def random_unitary(n, rng):
    """Haar-distributed unitary via QR of a complex Gaussian matrix.

    The triangular factor's diagonal is rephased positive real, which
    both fixes the QR ambiguity and makes the distribution exactly Haar.
    """
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = np.linalg.qr(A)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


@dataclass(frozen=True)
class VarianceTable:
    """Empirical complex variances per entry class of a mapped ensemble."""

    diag: np.ndarray  # per diagonal position
    diag_se: np.ndarray
    offdiag: float  # pooled over the strict upper triangle
    offdiag_se: float
    samples: int


def variance_probe(n, num_samples, U, mode="transpose", rng=None, batch=2048):
    """Empirical entry variances of U^T A U or U^* A U over ensemble draws.

    In ``transpose`` mode the mapped matrices stay in the ensemble, so the
    diagonal variances are 2 and the off-diagonal variance is 1.  In
    ``conjugate`` mode entry (i, j) has variance ``1 + |u_i^T u_j|^2``
    (bilinear product, not the Hermitian one, so it does not vanish for
    complex U); on the diagonal this equals
    ``2 (1 - ||Im(u_i u_i^*)||_F^2)``, which is below 2 unless U is real,
    and :func:`conjugate_diag_variance` evaluates that form.

    The reported standard errors are var / sqrt(N) per entry, exact for
    circularly-symmetric complex Gaussian entries (up to a factor
    sqrt(2) otherwise); the pooled off-diagonal estimate reuses the
    single-entry value, which is conservative because pooling can only
    tighten it.
    """
    if mode not in ("transpose", "conjugate"):
        raise ValueError(f"unknown mode {mode!r}")
    U = np.asarray(U, dtype=complex)
    if U.shape != (n, n):
        raise NotUnitary(f"expected a {n} x {n} matrix, got {U.shape}")
    if np.linalg.norm(U.conj().T @ U - np.eye(n)) > 1e-12 * np.sqrt(n):
        raise NotUnitary("unitarity defect above 1e-12 * sqrt(n)")
    rng = rng or substream(0)
    left = U.T if mode == "transpose" else U.conj().T

    sum_entries = np.zeros((n, n), dtype=complex)
    sum_sq = np.zeros((n, n))
    remaining = int(num_samples)
    while remaining > 0:
        b = min(batch, remaining)
        x = rng.normal(0.0, ENTRY_STD, size=(b, n, n))
        y = rng.normal(0.0, ENTRY_STD, size=(b, n, n))
        A = x + 1j * y
        A = A + np.swapaxes(A, 1, 2)
        mapped = left[None] @ A @ U[None]
        sum_entries += mapped.sum(axis=0)
        sum_sq += (np.abs(mapped) ** 2).sum(axis=0)
        remaining -= b

    N = int(num_samples)
    mean = sum_entries / N
    var = (sum_sq - N * np.abs(mean) ** 2) / (N - 1)
    diag = np.real(np.diagonal(var)).copy()
    iu = np.triu_indices(n, k=1)
    offdiag = float(np.real(var[iu]).mean()) if n > 1 else float("nan")
    return VarianceTable(
        diag=diag,
        diag_se=diag / np.sqrt(N),
        offdiag=offdiag,
        offdiag_se=(offdiag / np.sqrt(N)) if n > 1 else float("nan"),
        samples=N,
    )


def conjugate_diag_variance(U):
    """Predicted diagonal variances of U^* A U: 2 (1 - ||Im(u u^*)||_F^2)."""
    U = np.asarray(U, dtype=complex)
    out = np.empty(U.shape[1])
    for i in range(U.shape[1]):
        u = U[:, i : i + 1]
        out[i] = 2.0 * (1.0 - np.linalg.norm(np.imag(u @ u.conj().T)) ** 2)
    return out


def quarter_circle_pdf(n, sigma):
    """Quarter-circle density (sqrt(2)/pi) sqrt(n - sigma^2/8) on [0, sqrt(8n)].

    Integrates to n over its support.  Raises OutOfSupport outside.
    """
    sigma = np.asarray(sigma, dtype=float)
    edge = np.sqrt(8.0 * n)
    if np.any(sigma < 0.0) or np.any(sigma > edge * (1.0 + 1e-15)):
        raise OutOfSupport(f"sigma outside [0, {edge:.6g}]")
    val = (np.sqrt(2.0) / np.pi) * np.sqrt(np.maximum(n - sigma**2 / 8.0, 0.0))
    return float(val) if val.ndim == 0 else val


def quarter_circle_cdf(n, sigma):
    """Closed-form integral of the density from 0 to sigma (reaches n)."""
    sigma = np.asarray(sigma, dtype=float)
    edge = np.sqrt(8.0 * n)
    if np.any(sigma < 0.0) or np.any(sigma > edge * (1.0 + 1e-15)):
        raise OutOfSupport(f"sigma outside [0, {edge:.6g}]")
    theta = np.arcsin(np.minimum(sigma / edge, 1.0))
    val = (2.0 * n / np.pi) * (theta + np.sin(theta) * np.cos(theta))
    return float(val) if val.ndim == 0 else val


# A trigonometric field value at any fixed point is an ensemble draw
# scaled by sqrt(cos^2 x + sin^2 x + cos^2 y + sin^2 y) = sqrt(2); the
# quarter-circle support [0, sqrt(8 n)] belongs to that scaling (a raw
# draw fills [0, 2 sqrt(n)] instead).
FIELD_VALUE_SCALE = float(np.sqrt(2.0))


def singular_spectrum(n, num_samples, rng, scale=FIELD_VALUE_SCALE):
    """All singular values of ``num_samples`` scaled draws, ascending.

    The default scale makes each draw distributed like a field value
    A(x, y) at a fixed point, the normalization under which the spectrum
    follows :func:`quarter_circle_pdf`; pass ``scale=1.0`` for raw
    ensemble draws.
    """
    out = np.empty(n * num_samples)
    for s in range(num_samples):
        A = scale * sample_matrix(n, rng)
        out[s * n : (s + 1) * n] = np.linalg.svd(A, compute_uv=False)
    out.sort()
    return out


def singular_spectrum_histogram(n, num_samples, rng, bins=60, scale=FIELD_VALUE_SCALE):
    """Histogram (density, edges) of sampled singular values.

    The density integrates to 1; compare against
    ``quarter_circle_pdf(n, s) / n``.
    """
    values = singular_spectrum(n, num_samples, rng, scale=scale)
    density, edges = np.histogram(values, bins=bins, range=(0.0, np.sqrt(8.0 * n)), density=True)
    return density, edges


def quantile_levels(n):
    """Levels s_0 > s_1 > ... > s_n splitting the density into unit masses.

    ``s_k`` solves tail mass ``integral_{s_k}^{sqrt(8n)} rho = k``, found
    by bisection to 1e-12; the endpoints are exact: s_0 = sqrt(8n),
    s_n = 0.  Adjacent singular values of a large ensemble matrix are
    expected to sit one per band, so coalescence of the pair (k, k+1)
    happens where both are near s_k.
    """
    edge = np.sqrt(8.0 * n)
    levels = np.empty(n + 1)
    levels[0] = edge
    levels[n] = 0.0
    for k in range(1, n):
        target = float(n - k)  # CDF(s_k) = n - k
        lo, hi = 0.0, edge
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if quarter_circle_cdf(n, mid) < target:
                lo = mid
            else:
                hi = mid
        levels[k] = 0.5 * (lo + hi)
    return levels
