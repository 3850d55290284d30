"""LPC analysis/synthesis, pole manipulation and time-scale modification.

The formant-shifting anonymizer is built from these kernels: per-frame LPC
(autocorrelation method, Levinson-Durbin), polynomial root finding
(Aberth-Ehrlich with a companion-matrix fallback), pole-angle rotation,
polynomial reconstruction, and residual/synthesis filtering. ``pv_tsm``
is a phase-vocoder time stretcher used by the pitch-shift anonymizer.

Root finding and polynomial reconstruction are implemented batched over
frames; the single-model operations delegate to the batch kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .audio_io import Waveform, window_values
from .errors import InputError, NumericError, ParameterError

ANGLE_GUARD = 0.001          # rad; rotated poles are kept off 0 and pi
STABLE_RADIUS = 1.0 - 1e-6   # poles at/above this radius trigger clamping
CLAMP_RADIUS = 0.995

PV_FRAME = 1024
PV_HOP = 256


@dataclass(frozen=True, eq=False)
class LpcModel:
    """All-pole model A(z) = 1 + sum_k coeffs[k-1] z^-k.

    ``gain`` is the square root of the Levinson residual energy;
    ``passthrough`` marks degenerate (silent) frames that should be left
    untouched. ``max_pole_radius`` caches the largest pole radius when the
    model was built from known roots, sparing a stability root-find.
    """

    order: int
    coeffs: np.ndarray
    gain: float
    passthrough: bool = False
    max_pole_radius: float | None = None

    def __post_init__(self):
        if self.order < 2:
            raise ParameterError(f"LPC order must be >= 2, got {self.order}")
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.shape != (self.order,):
            raise InputError(f"expected {self.order} coefficients, got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InputError("non-finite LPC coefficients")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def polynomial(self) -> np.ndarray:
        """Monic coefficients [1, a_1, ..., a_p] of z^p A(z)."""
        return np.concatenate([[1.0], self.coeffs])


@dataclass(frozen=True, eq=False)
class PoleSet:
    """Filter poles as (radius, angle) pairs, closed under conjugation."""

    radius: np.ndarray
    angle: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radius, dtype=np.float64)
        a = np.asarray(self.angle, dtype=np.float64)
        if r.shape != a.shape or r.ndim != 1:
            raise InputError("radius and angle must be 1-D arrays of equal length")
        if np.any(r < 0):
            raise InputError("negative pole radius")
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "angle", a)

    def __len__(self) -> int:
        return len(self.radius)

    def as_complex(self) -> np.ndarray:
        return self.radius * np.exp(1j * self.angle)

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "PoleSet":
        z = np.asarray(z, dtype=np.complex128)
        return cls(np.abs(z), np.angle(z))


# ---------------------------------------------------------------------------
# LPC analysis
# ---------------------------------------------------------------------------

def lpc_coefficients(frame, order: int) -> LpcModel:
    """Autocorrelation-method LPC solved by Levinson-Durbin.

    Degenerate frames (all zero, or numerically rank-deficient
    autocorrelation) return a zero-coefficient model flagged as
    ``passthrough`` so silence survives the anonymizer unchanged.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if order < 2:
        raise ParameterError(f"LPC order must be >= 2, got {order}")
    if len(frame) <= order:
        raise InputError(f"frame of {len(frame)} samples too short for order {order}")
    spectrum = np.fft.rfft(frame, 2 * len(frame))
    r = np.fft.irfft(spectrum * np.conj(spectrum))[: order + 1]
    coeffs, err = _levinson(r, order)
    if coeffs is None:
        return LpcModel(order, np.zeros(order), gain=0.0, passthrough=True)
    return LpcModel(order, -coeffs, gain=float(np.sqrt(max(err, 0.0))))


def _levinson(r, order):
    """Forward predictor from autocorrelation; (None, 0) when degenerate."""
    if r[0] < 1e-30 or not np.all(np.isfinite(r)):
        return None, 0.0
    a = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[: i - 1], r[i - 1:0:-1])
        k = acc / err
        if not np.isfinite(k) or abs(k) >= 1.0:
            return None, 0.0
        if i > 1:
            a[: i - 1] = a[: i - 1] - k * a[i - 2::-1]
        a[i - 1] = k
        err *= 1.0 - k * k
        if err <= 0.0:
            return None, 0.0
    return a, err


# ---------------------------------------------------------------------------
# Root finding (batched Aberth-Ehrlich, companion-matrix fallback)
# ---------------------------------------------------------------------------

MAX_ROOT_ITER = 1000
_REBUILD_TOL = 1e-6


def _aberth_batch(coeffs: np.ndarray, max_iter: int = MAX_ROOT_ITER):
    """Roots of monic real polynomials, one per row of ``coeffs``.

    Returns (roots, converged_rows). A root is accepted when its Aberth
    correction is tiny or its residual reaches backward-stability level.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    n_poly, n1 = coeffs.shape
    n = n1 - 1
    deriv = coeffs[:, :-1] * np.arange(n, 0, -1)
    abs_coeffs = np.abs(coeffs)
    radius0 = 1.0 + np.max(abs_coeffs[:, 1:], axis=1)
    angles0 = 2.0 * np.pi * np.arange(n) / n + 0.4
    x = radius0[:, None] * np.exp(1j * angles0)[None, :]
    done = np.zeros((n_poly, n), dtype=bool)
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        ax = np.abs(x)
        pv = np.zeros_like(x)
        scale = np.zeros(ax.shape)
        for c, ac in zip(coeffs.T, abs_coeffs.T):
            pv = pv * x + c[:, None]
            scale = scale * ax + ac[:, None]
        dv = np.zeros_like(x)
        for c in deriv.T:
            dv = dv * x + c[:, None]
        residual_ok = np.abs(pv) <= 16.0 * eps * scale
        w = pv / np.where(dv == 0, 1e-300, dv)
        diff = x[:, :, None] - x[:, None, :]
        np.einsum("bii->bi", diff)[:] = 1.0
        s = np.sum(1.0 / diff, axis=2) - 1.0
        corr = w / (1.0 - w * s)
        newly_done = done | residual_ok | (np.abs(corr) <= 1e-12 * (1.0 + ax))
        x = x - np.where(newly_done, 0.0, corr)
        done = newly_done
        if done.all():
            break
    return x, done.all(axis=1)


def _symmetrize_conjugates(roots: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Force exact conjugate symmetry on roots of a real polynomial."""
    near_real = np.abs(roots.imag) <= tol * (1.0 + np.abs(roots))
    reals = list(roots.real[near_real])
    pos = sorted(roots[~near_real & (roots.imag > 0)], key=lambda z: (z.real, z.imag))
    neg = sorted(roots[~near_real & (roots.imag < 0)], key=lambda z: (z.real, -z.imag))
    while len(pos) > len(neg):
        i = min(range(len(pos)), key=lambda j: abs(pos[j].imag))
        reals.append(pos.pop(i).real)
    while len(neg) > len(pos):
        i = min(range(len(neg)), key=lambda j: abs(neg[j].imag))
        reals.append(neg.pop(i).real)
    out = [complex(v) for v in reals]
    for zp, zn in zip(pos, neg):
        w = 0.5 * (zp + zn.conjugate())
        out.extend([w, w.conjugate()])
    return np.array(out, dtype=np.complex128)


def _roots_batch(coeff_matrix: np.ndarray) -> np.ndarray:
    """Symmetrized roots for each monic real polynomial row.

    Rows that Aberth fails to converge on (or whose rebuilt polynomial
    misses the 1e-6 relative check) fall back to companion-matrix
    eigenvalues; raises NumericError if both methods fail.
    """
    coeff_matrix = np.asarray(coeff_matrix, dtype=np.float64)
    roots, converged = _aberth_batch(coeff_matrix)
    out = np.empty_like(roots)
    for i in range(coeff_matrix.shape[0]):
        out[i] = _symmetrize_conjugates(roots[i])
    rebuilt = _poly_from_roots_batch(out)
    scale = np.maximum(np.max(np.abs(coeff_matrix), axis=1), 1.0)
    err = np.max(np.abs(rebuilt.real - coeff_matrix), axis=1) / scale
    bad = ~converged | (err > _REBUILD_TOL) | ~np.all(np.isfinite(out.view(np.float64)), axis=1)
    for i in np.nonzero(bad)[0]:
        try:
            fallback = _symmetrize_conjugates(np.roots(coeff_matrix[i]))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"root finding failed: {exc}",
                               frame_index=int(i)) from exc
        rb = _poly_from_roots_batch(fallback[None, :])[0]
        if (not np.all(np.isfinite(fallback.view(np.float64)))
                or np.max(np.abs(rb.real - coeff_matrix[i])) / scale[i] > _REBUILD_TOL):
            raise NumericError("root finding did not converge within "
                               f"{MAX_ROOT_ITER} iterations", frame_index=int(i))
        out[i] = fallback
    return out


def _poly_from_roots_batch(roots: np.ndarray) -> np.ndarray:
    """Monic polynomial coefficients (descending powers) per row of roots."""
    roots = np.asarray(roots, dtype=np.complex128)
    n_poly, p = roots.shape
    c = np.zeros((n_poly, p + 1), dtype=np.complex128)
    c[:, 0] = 1.0
    for i in range(p):
        c[:, 1:i + 2] = c[:, 1:i + 2] - roots[:, i:i + 1] * c[:, 0:i + 1]
    return c


def polynomial_roots(model: LpcModel) -> PoleSet:
    """Poles of the synthesis filter 1/A(z), conjugate-paired exactly."""
    if model.passthrough or not np.any(model.coeffs):
        return PoleSet(np.zeros(model.order), np.zeros(model.order))
    roots = _roots_batch(model.polynomial[None, :])[0]
    return PoleSet.from_complex(roots)


def rotate_poles(poles: PoleSet, alpha: float) -> PoleSet:
    """Raise positive pole angles to the power ``alpha``, mirroring conjugates.

    Real poles (angle 0 or pi) and poles within the angle guard of the
    real axis are left alone; rotated angles are clamped to stay inside
    (ANGLE_GUARD, pi - ANGLE_GUARD). Radii never change. ``alpha`` = 1 is
    an exact identity.
    """
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha {alpha} outside (0, 2)")
    if alpha == 1.0:
        return PoleSet(poles.radius.copy(), poles.angle.copy())
    angle = poles.angle
    mag = np.abs(angle)
    rotatable = (mag > ANGLE_GUARD) & (mag < np.pi)
    new_mag = np.clip(np.power(mag, alpha, where=rotatable, out=mag.copy()),
                      ANGLE_GUARD, np.pi - ANGLE_GUARD)
    new_angle = np.where(rotatable, np.sign(angle) * new_mag, angle)
    return PoleSet(poles.radius.copy(), new_angle)


def poly_from_roots(poles: PoleSet, gain: float = 1.0) -> LpcModel:
    """Rebuild the real-coefficient model whose poles are ``poles``."""
    z = poles.as_complex()
    if len(z) < 2:
        raise ParameterError(f"need at least 2 poles, got {len(z)}")
    if not np.allclose(np.sort_complex(z), np.sort_complex(np.conj(z)),
                       rtol=1e-9, atol=1e-12):
        raise InputError("pole set is not closed under conjugation")
    c = _poly_from_roots_batch(z[None, :])[0]
    residue = np.max(np.abs(c.imag))
    if residue > 1e-9 * max(1.0, np.max(np.abs(c.real))):
        raise InputError(f"pole set yields complex polynomial (residue {residue:.2e})")
    return LpcModel(len(z), c.real[1:], gain=gain,
                    max_pole_radius=float(np.max(poles.radius)))


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

def inverse_filter(frame, model: LpcModel) -> np.ndarray:
    """LPC residual e[n] = x[n] + sum_k a_k x[n-k], zero initial state."""
    frame = np.asarray(frame, dtype=np.float64)
    return scipy.signal.lfilter(model.polynomial, [1.0], frame)


def synthesis_filter(residual, model: LpcModel) -> np.ndarray:
    """All-pole filtering of ``residual`` through 1/A(z), zero initial state.

    Unstable models (any pole radius >= 1 - 1e-6) are radius-clamped to
    0.995 before filtering.
    """
    residual = np.asarray(residual, dtype=np.float64)
    max_radius = model.max_pole_radius
    if max_radius is None and not model.passthrough and np.any(model.coeffs):
        max_radius = float(np.max(polynomial_roots(model).radius))
    if max_radius is not None and max_radius >= STABLE_RADIUS:
        poles = polynomial_roots(model)
        clamped = PoleSet(np.minimum(poles.radius, CLAMP_RADIUS), poles.angle)
        model = poly_from_roots(clamped, gain=model.gain)
    return scipy.signal.lfilter([1.0], model.polynomial, residual)


# ---------------------------------------------------------------------------
# Overlap-add and time-scale modification
# ---------------------------------------------------------------------------

def overlap_add(frames: np.ndarray, hop: int, window: str,
                sample_rate: int) -> Waveform:
    """Weighted overlap-add of analysis-windowed frames.

    Each frame is windowed again on synthesis and the result divided by
    the accumulated squared-window envelope (floored at 1e-8), which
    reconstructs the input of frame_signal exactly for any hop.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n_frames, frame_len = frames.shape
    if hop > frame_len:
        raise ParameterError(f"hop {hop} exceeds frame length {frame_len}")
    win = window_values(window, frame_len)
    total = (n_frames - 1) * hop + frame_len
    out = np.zeros(total)
    envelope = np.zeros(total)
    win_sq = win * win
    for k in range(n_frames):
        start = k * hop
        out[start:start + frame_len] += frames[k] * win
        envelope[start:start + frame_len] += win_sq
    return Waveform(out / np.maximum(envelope, 1e-8), sample_rate)


def pv_tsm(w: Waveform, stretch: float) -> Waveform:
    """Phase-vocoder time-scale modification: duration scales by ``stretch``,
    pitch is preserved.

    STFT with a 1024-sample hann window, analysis hop 256, synthesis hop
    round(256 * stretch); per-bin phase propagation with instantaneous
    frequency estimated from successive analysis frames (identity phase
    locking). Output is trimmed/padded to round(len * stretch) samples.
    """
    if not (0.25 <= stretch <= 4.0):
        raise ParameterError(f"stretch {stretch} outside [0.25, 4]")
    from .audio_io import FrameConfig, frame_signal

    n_out = int(round(len(w) * stretch))
    if len(w) == 0 or n_out == 0:
        return Waveform(np.zeros(n_out), w.sample_rate)
    hop_syn = max(1, int(round(PV_HOP * stretch)))
    frames = frame_signal(w, FrameConfig(PV_FRAME, PV_HOP, "hann"))
    spectra = np.fft.rfft(frames, axis=1)
    mag = np.abs(spectra)
    phase = np.angle(spectra)

    omega = 2.0 * np.pi * np.arange(spectra.shape[1]) / PV_FRAME
    expected = omega * PV_HOP
    syn_phase = np.empty_like(phase)
    syn_phase[0] = phase[0]
    for t in range(1, len(frames)):
        delta = phase[t] - phase[t - 1] - expected
        delta -= 2.0 * np.pi * np.round(delta / (2.0 * np.pi))
        inst_freq = omega + delta / PV_HOP
        syn_phase[t] = syn_phase[t - 1] + hop_syn * inst_freq

    out_frames = np.fft.irfft(mag * np.exp(1j * syn_phase), n=PV_FRAME, axis=1)
    y = overlap_add(out_frames, hop_syn, "hann", w.sample_rate).samples
    if len(y) >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - len(y))])
    return Waveform(y, w.sample_rate)
