"""Audio front end: WAV decoding, conditioning, and spectral feature series.

The pipeline turns a mono signal into a fixed set of named feature series
(12 spectral shape descriptors, a Mel filterbank, and cepstral coefficients
with their first and second temporal slopes), then shrinks the time axis to a
small number of averaged windows.  At the default settings the result is a
77 x 5 cube per recording.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, idct
from scipy.io import wavfile
from scipy.signal import butter, sosfiltfilt


class AudioDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray  # mono float64
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("signal must be a non-empty 1-D array")
        if not np.isfinite(s).all():
            raise ValueError("signal contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # (bins, frames)
    bin_freqs: np.ndarray   # (bins,), 0 .. sample_rate/2
    frame_hop: int
    window_len: int
    sample_rate: int


@dataclass(frozen=True)
class FeatureCube:
    names: tuple
    values: np.ndarray  # (n_attrs, T) float64

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        names = tuple(self.names)
        if v.ndim != 2 or v.shape[0] != len(names) or v.shape[1] < 1:
            raise ValueError("cube values must be (n_attrs, T) with T >= 1")
        if len(set(names)) != len(names):
            raise ValueError("duplicate attribute names")
        if not np.isfinite(v).all():
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", v)

    @property
    def n_attrs(self):
        return len(self.names)

    @property
    def n_points(self):
        return self.values.shape[1]


# --- decoding and conditioning ----------------------------------------------

def decode_wav(path):
    """Decode a PCM or float WAV file to a mono float64 signal in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioDecodeError(f"unreadable WAV file {path!r}: {exc}") from exc
    if data.size == 0:
        raise AudioDecodeError(f"zero-length audio in {path!r}")
    kind = data.dtype
    mono = data.astype(np.float64)
    if mono.ndim == 2:
        mono = mono.mean(axis=1)
    elif mono.ndim != 1:
        raise AudioDecodeError(f"unsupported channel layout in {path!r}")
    if kind == np.int16:
        mono = mono / 32768.0
    elif kind == np.int32:
        mono = mono / 2147483648.0
    elif kind == np.uint8:
        mono = (mono - 128.0) / 128.0
    elif kind in (np.float32, np.float64):
        pass
    else:
        raise AudioDecodeError(f"unsupported sample encoding {kind} in {path!r}")
    return AudioSignal(mono, int(rate))


def resample(sig, target_rate):
    """Windowed-sinc resampling (Kaiser beta=8), output length round(n*ratio)."""
    if target_rate <= 0:
        raise ValueError("target rate must be positive")
    sr = sig.sample_rate
    if target_rate == sr:
        return AudioSignal(sig.samples.copy(), sr)
    x = sig.samples
    n_in = len(x)
    n_out = int(round(n_in * target_rate / sr))
    if n_out < 1:
        raise ValueError("signal too short for requested rate")
    ratio = target_rate / sr
    cutoff = min(1.0, ratio)           # fraction of the input Nyquist
    half = 32.0 / cutoff               # kernel half-width in input samples
    taps = 2 * math.ceil(half) + 1
    i0_beta = float(np.i0(8.0))
    offsets = np.arange(taps)
    out = np.empty(n_out)
    for b0 in range(0, n_out, 8192):
        nn = np.arange(b0, min(b0 + 8192, n_out))
        pos = nn / ratio
        start = np.ceil(pos - half).astype(np.int64)
        k = start[:, None] + offsets[None, :]
        t = k - pos[:, None]
        u = t / half
        win = np.zeros_like(t)
        inside = np.abs(u) < 1.0
        win[inside] = np.i0(8.0 * np.sqrt(1.0 - u[inside] ** 2)) / i0_beta
        kern = cutoff * np.sinc(cutoff * t) * win
        valid = (k >= 0) & (k < n_in)
        xv = np.where(valid, x[np.clip(k, 0, n_in - 1)], 0.0)
        out[nn] = (xv * kern).sum(axis=1)
    return AudioSignal(out, int(target_rate))


def bandpass(sig, low, high):
    """Zero-phase 4th-order Butterworth band-pass between low and high Hz."""
    nyq = sig.sample_rate / 2.0
    if not (0.0 < low < high <= nyq):
        raise ValueError(f"band edges must satisfy 0 < low < high <= {nyq}")
    if high >= nyq:
        # upper edge at Nyquist degenerates to a high-pass
        sos = butter(4, low, btype="highpass", fs=sig.sample_rate, output="sos")
    else:
        sos = butter(4, [low, high], btype="bandpass", fs=sig.sample_rate,
                     output="sos")
    return AudioSignal(sosfiltfilt(sos, sig.samples), sig.sample_rate)


def trim_nonspeech(sig, frame_ms=25.0, threshold_db=35.0):
    """Drop frames whose RMS sits more than threshold_db below the peak frame."""
    if frame_ms <= 0:
        raise ValueError("frame length must be positive")
    n = max(1, int(round(sig.sample_rate * frame_ms / 1000.0)))
    frames = [sig.samples[i:i + n] for i in range(0, len(sig.samples), n)]
    rms = np.array([math.sqrt(float(np.mean(f ** 2))) for f in frames])
    peak = rms.max()
    if peak <= 0.0:
        raise ValueError("no speech detected: signal is silent")
    keep = rms >= peak * 10.0 ** (-threshold_db / 20.0)
    out = np.concatenate([f for f, k in zip(frames, keep) if k])
    return AudioSignal(out, sig.sample_rate)


# --- spectrogram ------------------------------------------------------------

def _cos_turns(frac):
    # cos(2*pi*frac) with exact values at quarter turns; frac reduction is
    # exact for the dyadic fractions k/K used by the window.
    r = np.asarray(frac, dtype=np.float64) % 1.0
    r = np.where(r > 0.5, 1.0 - r, r)
    sign = np.where(r > 0.25, -1.0, 1.0)
    r = np.where(r > 0.25, 0.5 - r, r)
    return sign * np.sin(2.0 * np.pi * (0.25 - r))


def hann_window(window_len):
    """Periodic Hann window w[k] = 0.5*(1 - cos(2*pi*k/K))."""
    k = np.arange(window_len)
    return 0.5 * (1.0 - _cos_turns(k / window_len))


def stft(sig, window_len=256, hop=128):
    """Magnitude spectrogram with a periodic Hann window, no padding."""
    if window_len < 2 or hop < 1:
        raise ValueError("window_len must be >= 2 and hop >= 1")
    n = len(sig.samples)
    if n < window_len:
        raise ValueError(f"signal shorter than one window ({n} < {window_len})")
    n_frames = (n - window_len) // hop + 1
    idx = hop * np.arange(n_frames)[:, None] + np.arange(window_len)[None, :]
    frames = sig.samples[idx] * hann_window(window_len)[None, :]
    mags = np.abs(np.fft.rfft(frames, axis=1)).T
    bin_freqs = np.arange(window_len // 2 + 1) * (sig.sample_rate / window_len)
    return Spectrogram(magnitudes=mags, bin_freqs=bin_freqs, frame_hop=hop,
                       window_len=window_len, sample_rate=sig.sample_rate)


# --- frame-level features ---------------------------------------------------

SPECTRAL_FEATURES = (
    "centroid", "crest", "decrease", "entropy", "f0", "flatness",
    "flux", "kurtosis", "rolloff", "skewness", "slope", "spread",
)

ROLLOFF_FRACTION = 0.95
F0_MIN_HZ = 60.0
F0_MAX_HZ = 1000.0
F0_MIN_PEAK = 0.3


def spectral_features(spec):
    """Twelve per-frame descriptors of the magnitude spectrum.

    Degenerate all-zero frames take fixed values: moment features, slope and
    decrease are 0, flatness is 1, entropy is log2(bins), crest is 0.
    Returned dict is in alphabetical attribute order.
    """
    m = spec.magnitudes
    f = spec.bin_freqs
    bins, n_frames = m.shape
    tot = m.sum(axis=0)
    zero = tot == 0.0
    safe_tot = np.where(zero, 1.0, tot)
    p = m / safe_tot

    centroid = (p * f[:, None]).sum(axis=0)
    dev = f[:, None] - centroid[None, :]
    spread = np.sqrt(np.maximum((p * dev ** 2).sum(axis=0), 0.0))
    nz_spread = spread > 0.0
    skewness = np.zeros(n_frames)
    kurtosis = np.zeros(n_frames)
    skewness[nz_spread] = (p * dev ** 3).sum(axis=0)[nz_spread] / spread[nz_spread] ** 3
    kurtosis[nz_spread] = (p * dev ** 4).sum(axis=0)[nz_spread] / spread[nz_spread] ** 4

    with np.errstate(divide="ignore"):
        log_m = np.log(m, out=np.full_like(m, -np.inf), where=m > 0.0)
    gmean = np.exp(log_m.mean(axis=0))
    gmean[np.isneginf(log_m).any(axis=0)] = 0.0
    amean = m.mean(axis=0)
    flatness = np.where(zero, 1.0, gmean / np.where(zero, 1.0, amean))

    crest = np.where(zero, 0.0, m.max(axis=0) / np.where(zero, 1.0, amean))

    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log2(np.where(p > 0.0, p, 1.0)), 0.0)
    entropy = -plogp.sum(axis=0)
    entropy[zero] = math.log2(bins)

    prev = np.concatenate([np.zeros((bins, 1)), m[:, :-1]], axis=1)
    flux = np.sqrt(((m - prev) ** 2).sum(axis=0))

    cum = np.cumsum(m, axis=0)
    hit = cum >= ROLLOFF_FRACTION * tot[None, :]
    rolloff = f[np.argmax(hit, axis=0)]

    fdev = f - f.mean()
    mdev = m - amean[None, :]
    slope = (fdev[:, None] * mdev).sum(axis=0) / float((fdev ** 2).sum())

    rest = m[1:, :]
    denom = rest.sum(axis=0)
    weights = 1.0 / np.arange(1, bins)
    decrease = np.where(denom > 0.0,
                        (weights[:, None] * (rest - m[0][None, :])).sum(axis=0)
                        / np.where(denom > 0.0, denom, 1.0),
                        0.0)

    f0 = _fundamental(spec)

    out = {
        "centroid": centroid, "crest": crest, "decrease": decrease,
        "entropy": entropy, "f0": f0, "flatness": flatness, "flux": flux,
        "kurtosis": kurtosis, "rolloff": rolloff, "skewness": skewness,
        "slope": slope, "spread": spread,
    }
    return {k: out[k] for k in SPECTRAL_FEATURES}


def _fundamental(spec):
    # normalized autocorrelation via the power spectrum, peak in [60, 1000] Hz
    sr = spec.sample_rate
    n_frames = spec.magnitudes.shape[1]
    r = np.fft.irfft(spec.magnitudes ** 2, n=spec.window_len, axis=0)
    r0 = r[0]
    lag_lo = max(1, math.ceil(sr / F0_MAX_HZ))
    lag_hi = min(spec.window_len - 1, math.floor(sr / F0_MIN_HZ))
    if lag_lo > lag_hi:
        return np.zeros(n_frames)
    seg = r[lag_lo:lag_hi + 1]
    norm = np.where(r0 > 0.0, r0, 1.0)
    seg = seg / norm[None, :]
    best = np.argmax(seg, axis=0)
    peak = seg[best, np.arange(n_frames)]
    voiced = (r0 > 0.0) & (peak >= F0_MIN_PEAK)
    return np.where(voiced, sr / (lag_lo + best), 0.0)


# --- Mel filterbank and cepstrum --------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters, sample_rate, bin_freqs):
    """Triangular filters with centers evenly spaced on the Mel scale.

    Returns (weights, centers): weights is (n_filters, bins), each row
    non-negative, unimodal, renormalized to peak exactly 1 over the bins.
    """
    if n_filters < 2:
        raise ValueError("need at least 2 Mel filters")
    pts = mel_to_hz(np.linspace(0.0, float(hz_to_mel(sample_rate / 2.0)),
                                n_filters + 2))
    centers = pts[1:-1]
    weights = np.zeros((n_filters, len(bin_freqs)))
    for i in range(n_filters):
        weights[i] = triangle_response(bin_freqs, pts[i], pts[i + 1], pts[i + 2])
        peak = weights[i].max()
        if peak > 0.0:
            weights[i] /= peak
    return weights, centers


def triangle_response(f, left, center, right):
    """Piecewise-linear bump: 0 at the edges, exactly 1 at the center."""
    f = np.asarray(f, dtype=np.float64)
    up = (f - left) / (center - left)
    down = (right - f) / (right - center)
    return np.maximum(0.0, np.minimum(up, down))


def mel_spectrogram(spec, n_filters=26):
    """Mel-filtered magnitudes; names carry the center frequency in Hz."""
    weights, centers = mel_filterbank(n_filters, spec.sample_rate,
                                      spec.bin_freqs)
    series = weights @ spec.magnitudes
    names = [f"mel_{int(round(c))}" for c in centers]
    if len(set(names)) != len(names):
        raise ValueError("Mel centers collide after rounding to integer Hz")
    return dict(zip(names, series))


LOG_FLOOR = 1e-10


def mel_to_mfcc(mel_matrix, n_coeffs=13):
    """Log (floored at 1e-10) then orthonormal DCT-II, keep n_coeffs rows."""
    logm = np.log(np.maximum(mel_matrix, LOG_FLOOR))
    return dct(logm, type=2, axis=0, norm="ortho")[:n_coeffs]


def inverse_mfcc(coeffs):
    return idct(coeffs, type=2, axis=0, norm="ortho")


def delta(series, half_window=2):
    """Two-sided regression slope over +-half_window frames, edges replicated."""
    s = np.atleast_2d(np.asarray(series, dtype=np.float64))
    h = half_window
    padded = np.concatenate(
        [np.repeat(s[:, :1], h, axis=1), s, np.repeat(s[:, -1:], h, axis=1)],
        axis=1)
    num = np.zeros_like(s)
    for k in range(1, h + 1):
        num += k * (padded[:, h + k:h + k + s.shape[1]]
                    - padded[:, h - k:h - k + s.shape[1]])
    out = num / (2.0 * sum(k * k for k in range(1, h + 1)))
    return out if np.asarray(series).ndim == 2 else out[0]


def mfcc_with_deltas(mel, n_coeffs=13):
    """Cepstral coefficients 0..n-1 plus first and second slope series."""
    mel_matrix = np.vstack(list(mel.values())) if isinstance(mel, dict) else \
        np.asarray(mel, dtype=np.float64)
    if n_coeffs < 1 or n_coeffs > mel_matrix.shape[0]:
        raise ValueError("n_coeffs must be in 1..n_filters")
    c = mel_to_mfcc(mel_matrix, n_coeffs)
    d = delta(c)
    dd = delta(d)
    out = {}
    for i in range(n_coeffs):
        out[f"mfcc_{i}"] = c[i]
    for i in range(n_coeffs):
        out[f"delta_{i}"] = d[i]
    for i in range(n_coeffs):
        out[f"deltadelta_{i}"] = dd[i]
    return out


# --- cube assembly ----------------------------------------------------------

def assemble_cube(spectral, mel, mfcc):
    """Concatenate the three feature groups into one named cube.

    Order: spectral (alphabetical), Mel (ascending center), cepstral blocks.
    """
    names = []
    rows = []
    for group in (spectral, mel, mfcc):
        for name, series in group.items():
            names.append(name)
            rows.append(np.asarray(series, dtype=np.float64))
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"feature series lengths differ: {sorted(lengths)}")
    return FeatureCube(tuple(names), np.vstack(rows))


def temporal_downsample(cube, n_points=5, overlap=0.2):
    """Average the series over n_points windows with fractional overlap."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if not (0.0 <= overlap < 1.0):
        raise ValueError("overlap must be in [0, 1)")
    T = cube.values.shape[1]
    if T < n_points:
        raise ValueError(f"series of length {T} cannot yield {n_points} windows")
    denom = n_points - (n_points - 1) * overlap
    width = int(math.ceil(T / denom - 1e-9))
    hop = max(1, int(math.floor((1.0 - overlap) * width + 1e-9)))
    cols = []
    for i in range(n_points):
        lo = i * hop
        hi = min(lo + width, T)
        if lo >= T:
            raise ValueError("window placement ran past the series end")
        cols.append(cube.values[:, lo:hi].mean(axis=1))
    return FeatureCube(cube.names, np.stack(cols, axis=1))


def featurize_signal(sig, *, window_len=256, hop=128, n_mel=26, n_mfcc=13,
                     n_points=5, overlap=0.2):
    """Signal to downsampled feature cube (the full spectral front end)."""
    spec = stft(sig, window_len=window_len, hop=hop)
    spectral = spectral_features(spec)
    mel = mel_spectrogram(spec, n_filters=n_mel)
    ceps = mfcc_with_deltas(mel, n_coeffs=n_mfcc)
    cube = assemble_cube(spectral, mel, ceps)
    return temporal_downsample(cube, n_points=n_points, overlap=overlap)
