"""Nonlinear-interference kernel and perturbation coefficients.

The first-order (frequency-resolved logarithmic perturbation) model of a
dispersive nonlinear step expresses the nonlinear phase rotation as a
bilinear form of the signal spectrum with kernel

    K(mu, nu) = \\int gamma g(z) H(z, mu) H*(z, nu) H(-z, mu - nu) dz

over the step, where H(z, f) = exp(-j 2 pi^2 beta2 f^2 z) is the dispersion
transfer and g(z) the normalized power profile. Because the integrand only
depends on b = 2 pi^2 beta2 nu (mu - nu), the kernel of a step made of N_sp
identical spans has the closed form

    K = gamma e^{-a L/N_sp} sinh((a + jb) L/N_sp) sin(bL)
        / ((a + jb) sin(b L/N_sp)),       a = alpha/2,

with removable singularities at b -> 0 and sin(b L/N_sp) -> 0.

This module provides the closed form, an independent quadrature oracle, the
memory-length rule for the filtered-phase coefficients, the analytic
coefficient integration (2-D kernel transform on an oversampled uniform
grid, decimated to the tap lattice), and a dense Volterra-coefficient oracle
for validation.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

LN10_OVER_10 = np.log(10.0) / 10.0


@dataclass(frozen=True)
class StepGeometry:
    """Geometry of one nonlinear step of a fiber link.

    Attributes
    ----------
    length_km : float
        Step length L.
    span_km : float
        Amplifier span length of the underlying link; the power profile
        resets at every span boundary.
    alpha_db_km, beta2_ps2_km, gamma_w_km : float
        Fiber attenuation, group-velocity dispersion, and nonlinear
        coefficient.
    rho : float
        Splitting ratio: the nonlinear phase rotation sits after a fraction
        (1 - rho) of the step's dispersion in backpropagation order, i.e. at
        rho * L from the forward start of the step.
    start_offset_km : float
        Forward position of the step start within its span (0 for
        span-aligned steps).
    """

    length_km: float
    span_km: float
    alpha_db_km: float = 0.2
    beta2_ps2_km: float = -21.683
    gamma_w_km: float = 1.27
    rho: float = 0.5
    start_offset_km: float = 0.0

    def __post_init__(self):
        if self.length_km <= 0 or self.span_km <= 0:
            raise ValueError("lengths must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if not 0.0 <= self.start_offset_km < self.span_km:
            raise ValueError("start_offset_km must be within one span")

    @classmethod
    def spans(cls, num_spans: int, span_km: float, **kw) -> "StepGeometry":
        return cls(length_km=num_spans * span_km, span_km=span_km, **kw)

    @property
    def alpha_np_km(self) -> float:
        """Power attenuation in 1/km."""
        return self.alpha_db_km * LN10_OVER_10

    @property
    def beta2_s2_km(self) -> float:
        return self.beta2_ps2_km * 1e-24

    @property
    def num_spans(self) -> int:
        """Number of identical spans in the step (span-aligned steps only)."""
        n = self.length_km / self.span_km
        if self.start_offset_km != 0.0 or abs(n - round(n)) > 1e-9:
            raise ValueError("step is not an integer number of spans")
        return int(round(n))

    @property
    def effective_length_km(self) -> float:
        """Integral of the power profile over the step, input-normalized."""
        a = self.alpha_np_km
        if a == 0:
            return self.length_km
        total = 0.0
        for z0, z1, g0 in self._segments():
            total += g0 * (1.0 - np.exp(-a * (z1 - z0))) / a
        return total

    def _segments(self) -> list[tuple[float, float, float]]:
        """Piecewise-exponential power profile of the step.

        Returns (z_start, z_end, g_at_start) pieces on the kernel axis,
        where z = 0 is the nonlinear-rotation position (rho * L from the
        step's forward start) and g is normalized to 1 at the step input.
        """
        a = self.alpha_np_km
        z_nl = self.rho * self.length_km
        pieces = []
        # walk span boundaries from the step start
        pos = 0.0
        offset = self.start_offset_km
        g_in = 1.0
        while pos < self.length_km - 1e-12:
            to_boundary = self.span_km - offset
            z1 = min(pos + to_boundary, self.length_km)
            pieces.append((pos - z_nl, z1 - z_nl, g_in * np.exp(-a * offset) /
                           np.exp(-a * self.start_offset_km)))
            pos = z1
            offset = 0.0
        return pieces


def _sin_ratio(x: np.ndarray, n: int) -> np.ndarray:
    """sin(n x)/sin(x) with the removable singularities filled in."""
    x = np.asarray(x, dtype=float)
    k = np.round(x / np.pi)
    eps = x - k * np.pi
    sign = np.where((k.astype(np.int64) * (n - 1)) % 2 == 0, 1.0, -1.0)
    return sign * n * np.sinc(n * eps / np.pi) / np.sinc(eps / np.pi)


def _sinhc(w: np.ndarray) -> np.ndarray:
    """sinh(w)/w, stable at w -> 0."""
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < 1e-6
    safe = np.where(small, 1.0, w)
    return np.where(small, 1.0 + w * w / 6.0, np.sinh(safe) / safe)


def _beat(mu, nu, geom: StepGeometry) -> np.ndarray:
    """b = 2 pi^2 beta2 nu (mu - nu), in 1/km for Hz inputs."""
    return 2 * np.pi ** 2 * geom.beta2_s2_km * np.asarray(nu) * (np.asarray(mu) - np.asarray(nu))


def kernel_closed_form(mu, nu, geom: StepGeometry) -> np.ndarray:
    """Closed-form step kernel for an integer number of identical spans.

    Parameters
    ----------
    mu, nu : array_like
        Frequencies in Hz (broadcast together).
    geom : StepGeometry
        Span-aligned step geometry (symmetric kernel window).

    Returns
    -------
    np.ndarray
        Complex kernel values in 1/W (gamma times effective length at
        mu = nu).
    """
    n_sp = geom.num_spans
    lsp = geom.span_km
    a = geom.alpha_np_km / 2.0
    b = _beat(mu, nu, geom)
    w = (a + 1j * b) * lsp
    return (geom.gamma_w_km * np.exp(-a * lsp) * lsp * _sinhc(w)
            * _sin_ratio(b * lsp, n_sp))


def kernel_quadrature(mu, nu, geom: StepGeometry,
                      num_points: int | None = None) -> np.ndarray:
    """Step kernel by direct numerical integration (validation oracle).

    Composite Simpson integration of gamma g(z) exp(-j 2 b z) over the
    symmetric window [-L/2, L/2], per span segment so the power-profile
    discontinuities fall on segment edges. ``num_points`` is the node count
    per span; as a rule it should be at least ten per oscillation of the
    integrand (period pi/|b| in z). The default targets relative errors
    below 1e-8.
    """
    n_sp = geom.num_spans
    lsp = geom.span_km
    alpha = geom.alpha_np_km
    shape = np.broadcast(np.asarray(mu), np.asarray(nu)).shape
    b = np.broadcast_to(_beat(mu, nu, geom), shape).ravel().astype(float)

    if num_points is None:
        osc = np.max(np.abs(2 * b)) * lsp / (2 * np.pi)
        num_points = int(max(801, np.ceil(100 * osc)))
    if num_points % 2 == 0:
        num_points += 1

    zeta = np.linspace(0.0, lsp, num_points)
    wgt = np.ones(num_points)
    wgt[1:-1:2] = 4.0
    wgt[2:-1:2] = 2.0
    wgt *= (lsp / (num_points - 1)) / 3.0
    profile = geom.gamma_w_km * np.exp(-alpha * zeta) * wgt

    total = np.zeros(b.size, dtype=complex)
    for k in range(n_sp):
        z0 = -geom.length_km / 2.0 + k * lsp
        total += np.exp(-2j * np.outer(b, z0 + zeta)) @ profile
    return total.reshape(shape) if shape else total[0]


def _kernel_segments(mu, nu, geom: StepGeometry) -> np.ndarray:
    """Exact kernel for arbitrary step alignment and splitting ratio.

    Each span piece of the power profile is a pure exponential, so the
    kernel integral has a closed antiderivative per piece; this evaluates
    the sum exactly for mid-span starts, fractional spans, and asymmetric
    (rho != 0.5) windows.
    """
    alpha = geom.alpha_np_km
    b = _beat(mu, nu, geom)
    shape = np.shape(b)
    b = np.atleast_1d(b).astype(float)
    total = np.zeros(b.shape, dtype=complex)
    for z0, z1, g0 in geom._segments():
        w = (alpha + 2j * b) * (z1 - z0)
        small = np.abs(w) < 1e-9
        safe = np.where(small, 1.0, w)
        core = np.where(small, 1.0 - w / 2.0, (1.0 - np.exp(-safe)) / safe)
        total += g0 * np.exp(-2j * b * z0) * (z1 - z0) * core
    total *= geom.gamma_w_km
    return total.reshape(shape) if shape else total[0]


def step_kernel(mu, nu, geom: StepGeometry) -> np.ndarray:
    """Kernel of a step honoring its splitting ratio and span alignment.

    Falls back to the closed form when the window is symmetric and
    span-aligned, otherwise uses the exact piecewise evaluation.
    """
    aligned = (geom.start_offset_km == 0.0 and geom.rho == 0.5)
    if aligned:
        n = geom.length_km / geom.span_km
        if abs(n - round(n)) <= 1e-9 and round(n) >= 1:
            return kernel_closed_form(mu, nu, geom)
    return _kernel_segments(mu, nu, geom)


def coefficient_memory(h: int, geom: StepGeometry, oversampling: float,
                       baud: float, n_sb: int, safety: float = 1.0) -> int:
    """One-sided tap count N_c for the separation-h coefficient vector.

    The two-sided support 2 N_c + 1 tracks the walk-off spread
    pi L |beta2| (n R / N_sb)^2 (h + 1); the return value is at least 1.
    """
    width = (np.pi * geom.length_km * abs(geom.beta2_s2_km)
             * (oversampling * baud / n_sb) ** 2 * (h + 1) * safety)
    return max(1, int(np.ceil((width - 1.0) / 2.0)))


def _simpson_weights(num_nodes: int, span: float) -> np.ndarray:
    if num_nodes % 2 == 0:
        raise ValueError("Simpson rule needs an odd node count")
    w = np.ones(num_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (span / (num_nodes - 1)) / 3.0


def _coeff_grid_eval(geom: StepGeometry, separation_hz: float, memory: int,
                     subband_rate: float, reference_power_w: float,
                     num_nodes: int) -> np.ndarray:
    """Coefficient vector from one weighted uniform-grid kernel transform.

    The transform is taken of the Hermitian part of the kernel: the
    anti-Hermitian component of the first-order perturbation operator
    describes parametric power transfer rather than phase rotation, so the
    phase model drops it (equivalently, keeps the real part of the raw
    transform). The result is real up to quadrature round-off.
    """
    rp = subband_rate
    offs = np.linspace(-rp / 2.0, rp / 2.0, num_nodes)
    mu = separation_hz + offs
    kern = step_kernel(mu[:, None], mu[None, :], geom)
    kern = 0.5 * (kern + kern.conj().T)
    wgt = _simpson_weights(num_nodes, rp)
    kern = kern * wgt[:, None] * wgt[None, :]

    # sum over anti-diagonals: S[d] = sum_{p-q=d} w_p w_q K[p,q]
    n = num_nodes
    diag_sum = np.empty(2 * n - 1, dtype=complex)
    for off in range(-(n - 1), n):
        diag_sum[off + n - 1] = np.trace(kern, offset=off)

    d = np.arange(-(n - 1), n)  # d = -offset = p - q
    m = np.arange(-memory, memory + 1)
    phases = np.exp(2j * np.pi * np.outer(m, -d) / (n - 1))
    c = phases @ diag_sum
    return c * reference_power_w / rp ** 2


def analytic_coefficients(geom: StepGeometry, separation_hz: float,
                          memory: int, subband_rate: float,
                          reference_power_w: float, oversample: int = 8,
                          check_convergence: bool = True,
                          conv_tol: float = 1e-3,
                          imag_tol: float = 1e-9) -> np.ndarray:
    """Filtered-phase coefficients for one subband separation.

    Integrates (P / R'^2) K(mu, nu) exp(j 2 pi (mu - nu) m / R') over the
    square of side R' centered at the separation frequency, on a uniform
    grid oversampled ``oversample``-fold relative to the 2 * memory + 1 tap
    lattice, and decimates the resulting transform to the taps. Only the
    Hermitian (phase) part of the kernel contributes; see _coeff_grid_eval.

    Returns the real coefficient vector (length 2 * memory + 1, index m
    running from -memory to +memory). The imaginary quadrature residue is
    discarded; a residue above ``imag_tol`` of the peak, like a
    grid-doubling change above ``conv_tol``, emits a precision warning.
    """
    if memory < 1:
        raise ValueError("memory must be >= 1")
    # few-tap sets still need enough nodes to resolve the kernel itself
    base = max(oversample * (2 * memory + 1), 64)
    base += base % 2  # odd node count
    num_nodes = base + 1

    c = _coeff_grid_eval(geom, separation_hz, memory, subband_rate,
                         reference_power_w, num_nodes)
    if check_convergence:
        fine = _coeff_grid_eval(geom, separation_hz, memory, subband_rate,
                                reference_power_w, 2 * (num_nodes - 1) + 1)
        change = np.max(np.abs(fine - c)) / max(np.max(np.abs(fine)), 1e-300)
        if change > conv_tol:
            warnings.warn(
                f"coefficient grid not converged (doubling changes {change:.1e});"
                " increase oversample", RuntimeWarning)
        c = fine

    peak = np.max(np.abs(c))
    residue = np.max(np.abs(c.imag)) / peak if peak > 0 else 0.0
    if residue > imag_tol:
        warnings.warn(
            f"imaginary residue {residue:.1e} of peak discarded from "
            "coefficients", RuntimeWarning)
    return np.ascontiguousarray(c.real)


def volterra_oracle(geom: StepGeometry, subband_rate: float, window: int,
                    reference_power_w: float,
                    points_per_panel: int = 12) -> np.ndarray:
    """Dense intraband Volterra phase coefficients d[m, n] (oracle).

    d[m, n] = (P / R'^2) \\iint K(mu, nu) e^{j 2 pi (m mu - n nu)/R'} dmu dnu
    over the centered square of side R', evaluated with composite
    Gauss-Legendre panels (a scheme independent of analytic_coefficients).
    The returned matrix is the Hermitian part of the raw transform — the
    phase component of the perturbation, so that the quadratic form built
    from it is real — and its diagonal is the separation-0 coefficient
    vector. Guarded to window <= 64; the matrix is O((2 window + 1)^2)
    integrals.
    """
    if window > 64:
        raise ValueError("window too large; the dense oracle is O(window^2)")
    rp = subband_rate
    # worst-case phase rate vs frequency: tap lattice + kernel oscillation
    omega = (2 * np.pi * window / rp
             + 8 * np.pi ** 2 * abs(geom.beta2_s2_km) * rp * geom.length_km)
    panels = int(np.ceil(1.5 * omega * rp / (2 * np.pi))) + 8

    nodes, wts = np.polynomial.legendre.leggauss(points_per_panel)
    edges = np.linspace(-rp / 2.0, rp / 2.0, panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    f = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * wts[None, :]).ravel()

    kern = step_kernel(f[:, None], f[None, :], geom)
    m = np.arange(-window, window + 1)
    left = (w[:, None] * np.exp(2j * np.pi * np.outer(f, m) / rp))
    right = (w[:, None] * np.exp(-2j * np.pi * np.outer(f, m) / rp))
    d = (left.T @ kern @ right) * reference_power_w / rp ** 2
    return 0.5 * (d + d.conj().T)


@dataclass
class CoefficientSet:
    """Nonlinear-phase filter taps for a coupled-band backpropagation step.

    coeffs maps subband separation h (in units of the subband spacing,
    0 <= h < n_sb) to a real tap vector c_h[m], m = -N_c(h)..N_c(h). The
    engine applies exp(-j theta) with theta built from these taps on
    intensities normalized by reference_power_w, scaled per step by
    step_scales. phase_norm_rad is the average per-step nonlinear phase used
    as the normalization when sets are stored or compared.
    """

    n_sb: int
    subband_rate: float
    subband_spacing: float
    reference_power_w: float
    phase_norm_rad: float
    step_scales: np.ndarray
    geometry_hash: str
    coeffs: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.step_scales = np.asarray(self.step_scales, dtype=float)
        self.coeffs = {int(h): np.asarray(c, dtype=float)
                       for h, c in self.coeffs.items()}
        self.validate()

    def validate(self):
        if self.n_sb < 1:
            raise ValueError("n_sb must be >= 1")
        for h, c in self.coeffs.items():
            if not (0 <= h < self.n_sb):
                raise ValueError(f"separation {h} outside 0..n_sb-1")
            if c.ndim != 1 or c.size % 2 == 0:
                raise ValueError("tap vectors must be 1-D with odd length")
            if not np.all(np.isfinite(c)):
                raise ValueError("tap vectors must be finite")
        if 0 in self.coeffs:
            c0 = self.coeffs[0]
            peak = np.max(np.abs(c0))
            if peak > 0 and np.max(np.abs(c0 - c0[::-1])) > 1e-9 * peak:
                raise ValueError("separation-0 taps must be even-symmetric")

    @property
    def num_steps(self) -> int:
        return self.step_scales.size

    def memory(self, h: int) -> int:
        return (self.coeffs[h].size - 1) // 2

    def taps(self, h: int) -> np.ndarray:
        return self.coeffs[h]

    def normalized(self, h: int) -> np.ndarray:
        """Taps divided by the per-step nonlinear-phase normalization."""
        return self.coeffs[h] / self.phase_norm_rad

    def scaled_by_power(self, factor: float) -> "CoefficientSet":
        """New set with every tap (and the normalization) scaled linearly."""
        return CoefficientSet(
            self.n_sb, self.subband_rate, self.subband_spacing,
            self.reference_power_w * factor, self.phase_norm_rad * factor,
            self.step_scales.copy(), self.geometry_hash,
            {h: c * factor for h, c in self.coeffs.items()})


def geometry_fingerprint(geom: StepGeometry, n_sb: int, subband_rate: float,
                         subband_spacing: float, num_steps: int) -> str:
    """Short stable hash identifying the geometry a coefficient set fits."""
    text = "|".join(
        f"{v:.12e}" for v in (
            geom.length_km, geom.span_km, geom.alpha_db_km,
            geom.beta2_ps2_km, geom.gamma_w_km, geom.rho,
            geom.start_offset_km, n_sb, subband_rate, subband_spacing,
            num_steps))
    return hashlib.sha256(text.encode()).hexdigest()[:16]
