"""Denoising strategies: spectral gating, a denoising autoencoder, a
deep-clustering source separator, noise fusion, and band-stop filtering.

Two usable end-to-end paths exist. The separation path splits the input
into heartbeat and noise estimates, merges the separator's noise with the
gate's noise estimate, and band-stops the input where the merged noise
spectrum is strong. The autoencoder path reconstructs clean log-magnitude
frames directly and resynthesizes with the input's phase.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import Waveform
from .container import load_container, save_container
from .errors import (
    DivergedLossError,
    EmptyTrainingSetError,
    LengthMismatchError,
    MissingModelError,
    ShapeMismatchError,
)
from .nn import Adam, Mlp, RnnEmbedder, dc_loss, dc_loss_grad, kmeans_two
from .spectral import TimeFrequencyGrid, istft, stft

__all__ = [
    "GateConfig", "spectral_gate",
    "DaeTrainConfig", "DaeModel", "train_dae", "denoise_dae",
    "DcTrainConfig", "DcModel", "train_separator", "separate", "SeparationResult",
    "embed_bins",
    "dc_loss", "dc_loss_grad",
    "fuse_noise", "BandstopConfig", "bandstop_by_noise_profile",
    "DenoiseMethod", "ModelSet", "denoise_pipeline",
    "save_dae", "load_dae", "save_separator", "load_separator",
]


# --- spectral gating -----------------------------------------------------------

@dataclass(frozen=True)
class GateConfig:
    """Stationary spectral gate parameters."""

    window_len: int = 512
    hop: int = 128
    noise_fraction: float = 0.5     # quietest fraction of frames per bin
    threshold_factor: float = 5.0
    attenuation: float = 0.05       # gain applied to gated bins
    floor_cap_factor: float = 3.0   # cap per-bin floors at this multiple of their median


def spectral_gate(w: Waveform, cfg: GateConfig = GateConfig()) -> tuple[Waveform, Waveform]:
    """Attenuate time-frequency bins below a per-bin stationary noise floor.

    The floor of each bin is the mean of its quietest ``noise_fraction`` of
    frames, capped at ``floor_cap_factor`` times the cross-bin median floor.
    The cap keeps steady tonal bins, whose own quiet frames are as loud as
    their typical frames, from masking themselves. Returns
    ``(denoised, noise_estimate)`` with ``noise_estimate = input - denoised``
    sample for sample.
    """
    grid = stft(w, cfg.window_len, cfg.hop)
    mag = np.abs(grid.bins)
    n_frames = mag.shape[0]
    k = max(1, int(round(cfg.noise_fraction * n_frames)))
    floor = np.sort(mag, axis=0)[:k].mean(axis=0)
    floor = np.minimum(floor, cfg.floor_cap_factor * np.median(floor))
    gain = np.where(mag < floor[None, :] * cfg.threshold_factor, cfg.attenuation, 1.0)
    denoised = istft(grid.with_bins(grid.bins * gain))
    noise = Waveform(w.samples - denoised.samples, w.sample_rate_hz)
    return denoised, noise


# --- denoising autoencoder -------------------------------------------------------

@dataclass(frozen=True)
class DaeTrainConfig:
    window_len: int = 256
    hop: int = 64
    context: int = 2                  # frames of context each side
    hidden: tuple[int, ...] = (256, 64, 256)
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 256
    seed: int = 0


@dataclass
class DaeModel:
    """Trained dense autoencoder over context-stacked log-magnitude frames."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    sizes: list[int]
    window_len: int
    hop: int
    context: int
    feat_mean: np.ndarray
    feat_std: np.ndarray
    final_loss: float
    loss_trace: list[float]

    def network(self) -> Mlp:
        net = Mlp.__new__(Mlp)
        net.sizes = list(self.sizes)
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net


def _log_frames(w: Waveform, window_len: int, hop: int) -> tuple[np.ndarray, TimeFrequencyGrid]:
    grid = stft(w, window_len, hop)
    return np.log1p(np.abs(grid.bins)), grid


def _stack_context(frames: np.ndarray, context: int) -> np.ndarray:
    """Concatenate each frame with ``context`` neighbors each side (edge-clamped)."""
    t = frames.shape[0]
    idx = np.arange(t)
    blocks = [frames[np.clip(idx + o, 0, t - 1)] for o in range(-context, context + 1)]
    return np.concatenate(blocks, axis=1)


def train_dae(noisy_clean_pairs: list[tuple[Waveform, Waveform]],
              cfg: DaeTrainConfig = DaeTrainConfig()) -> DaeModel:
    """Fit the autoencoder to map noisy log-magnitude frames onto clean ones.

    Minimizes MSE with Adam over minibatches; reproducible for a fixed
    ``cfg.seed``. Raises :class:`DivergedLossError` if the loss goes
    non-finite.
    """
    if not noisy_clean_pairs:
        raise EmptyTrainingSetError("need at least one (noisy, clean) pair")
    for noisy, clean in noisy_clean_pairs:
        if len(noisy) != len(clean) or noisy.sample_rate_hz != clean.sample_rate_hz:
            raise LengthMismatchError("pairs must be time-aligned and equal length")
    xs, ys = [], []
    for noisy, clean in noisy_clean_pairs:
        noisy_frames, _ = _log_frames(noisy, cfg.window_len, cfg.hop)
        clean_frames, _ = _log_frames(clean, cfg.window_len, cfg.hop)
        xs.append(_stack_context(noisy_frames, cfg.context))
        ys.append(_stack_context(clean_frames, cfg.context))
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(ys, axis=0)
    feat_mean = x.mean(axis=0)
    feat_std = x.std(axis=0)
    feat_std[feat_std < 1e-8] = 1.0
    xn = (x - feat_mean) / feat_std
    yn = (y - feat_mean) / feat_std

    rng = np.random.default_rng(cfg.seed)
    sizes = [x.shape[1], *cfg.hidden, x.shape[1]]
    net = Mlp(sizes, rng)
    opt = Adam(net.params, lr=cfg.learning_rate)
    n = x.shape[0]
    trace: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = order[start: start + cfg.batch_size]
            loss, grads = net.loss_and_grads(xn[batch], yn[batch])
            if not np.isfinite(loss):
                raise DivergedLossError("autoencoder training loss became non-finite")
            opt.step(grads)
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)))
    return DaeModel(
        weights=net.weights, biases=net.biases, sizes=sizes,
        window_len=cfg.window_len, hop=cfg.hop, context=cfg.context,
        feat_mean=feat_mean, feat_std=feat_std,
        final_loss=trace[-1] if trace else float("nan"), loss_trace=trace,
    )


def denoise_dae(model: DaeModel, w: Waveform) -> Waveform:
    """Reconstruct clean magnitudes per frame and resynthesize with input phase."""
    frames, grid = _log_frames(w, model.window_len, model.hop)
    stacked = _stack_context(frames, model.context)
    if stacked.shape[1] != model.sizes[0]:
        raise ShapeMismatchError(
            f"model expects input dim {model.sizes[0]}, got {stacked.shape[1]}"
        )
    xn = (stacked - model.feat_mean) / model.feat_std
    yn = model.network().predict(xn)
    yhat = yn * model.feat_std + model.feat_mean
    n_bins = model.window_len // 2 + 1
    center = model.context * n_bins
    log_mag = np.clip(yhat[:, center: center + n_bins], 0.0, None)
    mag = np.expm1(log_mag)
    phase = np.angle(grid.bins)
    return istft(grid.with_bins(mag * np.exp(1j * phase)))


# --- deep-clustering separation ---------------------------------------------------

@dataclass(frozen=True)
class DcTrainConfig:
    window_len: int = 256
    hop: int = 64
    embed_dim: int = 20
    hidden: int = 32
    epochs: int = 30
    learning_rate: float = 1e-3
    n_mixtures: int = 24
    mixture_s: float = 3.0
    seed: int = 0


@dataclass
class DcModel:
    """Trained embedding network plus everything needed to replay separation.

    Inputs are normalized per utterance (each spectrogram by its own mean
    and standard deviation), which makes separation invariant to recording
    gain.
    """

    embedder: RnnEmbedder
    window_len: int
    hop: int
    kmeans_seed: int
    loss_trace: list[float]
    heartbeat_band_hz: float = 300.0


@dataclass(frozen=True)
class SeparationResult:
    heartbeat: Waveform
    noise: Waveform
    degenerate: bool = False


def _random_crop(rng: np.random.Generator, w: Waveform, n: int) -> np.ndarray:
    if len(w) <= n:
        reps = int(np.ceil(n / len(w)))
        return np.tile(w.samples, reps)[:n]
    start = int(rng.integers(0, len(w) - n + 1))
    return w.samples[start: start + n]


def train_separator(source_a: list[Waveform], source_b: list[Waveform],
                    cfg: DcTrainConfig = DcTrainConfig()) -> DcModel:
    """Train bin embeddings so same-source bins cluster together.

    Mixtures are sums of random crops from each source; the ideal binary
    mask (whichever source dominates a bin) supplies the one-hot targets
    for the affinity loss.
    """
    if not source_a or not source_b:
        raise EmptyTrainingSetError("both source lists must be non-empty")
    rate = source_a[0].sample_rate_hz
    rng = np.random.default_rng(cfg.seed)
    n = int(cfg.mixture_s * rate)
    feats, targets = [], []
    for _ in range(cfg.n_mixtures):
        a = _random_crop(rng, source_a[int(rng.integers(len(source_a)))], n)
        b = _random_crop(rng, source_b[int(rng.integers(len(source_b)))], n)
        mix = Waveform(a + b, rate)
        mag_a = np.abs(stft(Waveform(a, rate), cfg.window_len, cfg.hop).bins)
        mag_b = np.abs(stft(Waveform(b, rate), cfg.window_len, cfg.hop).bins)
        dominant = (mag_b > mag_a).astype(np.float64).reshape(-1)
        y = np.stack([1.0 - dominant, dominant], axis=1)
        s, _ = _log_frames(mix, cfg.window_len, cfg.hop)
        feats.append(_normalize_per_utterance(s))
        targets.append(y)

    n_bins = cfg.window_len // 2 + 1
    embedder = RnnEmbedder(n_bins, cfg.hidden, cfg.embed_dim, rng)
    opt = Adam(embedder.params, lr=cfg.learning_rate)
    trace: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(cfg.n_mixtures)
        losses = []
        for i in order:
            scale = 1.0 / feats[i].size ** 2   # keeps loss magnitude size-free
            loss, grads = embedder.loss_and_grads(feats[i], targets[i], scale=scale)
            if not np.isfinite(loss):
                raise DivergedLossError("separator training loss became non-finite")
            opt.step(grads)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
    return DcModel(
        embedder=embedder, window_len=cfg.window_len, hop=cfg.hop,
        kmeans_seed=cfg.seed, loss_trace=trace,
    )


def _normalize_per_utterance(s: np.ndarray) -> np.ndarray:
    std = float(s.std())
    return (s - s.mean()) / (std if std > 0 else 1.0)


def embed_bins(model: DcModel, w: Waveform) -> tuple[np.ndarray, TimeFrequencyGrid]:
    """Per-bin embeddings of a waveform under a trained model."""
    s, grid = _log_frames(w, model.window_len, model.hop)
    return model.embedder.embed(_normalize_per_utterance(s)), grid


def separate(model: DcModel, w: Waveform) -> SeparationResult:
    """Cluster bin embeddings into two masks and resynthesize each source.

    The output whose spectral energy concentrates below the heartbeat band
    is labeled as the heartbeat. Masks are binary and complementary, so the
    two outputs sum to the input.
    """
    v, grid = embed_bins(model, w)
    assign = kmeans_two(v, model.kmeans_seed)
    shape = grid.bins.shape
    mask1 = assign.reshape(shape).astype(bool)
    if not mask1.any() or mask1.all():
        return SeparationResult(
            heartbeat=Waveform(w.samples.copy(), w.sample_rate_hz),
            noise=Waveform(np.zeros(len(w)), w.sample_rate_hz),
            degenerate=True,
        )
    outs = []
    scores = []
    freqs = grid.bin_freqs_hz
    low = freqs < model.heartbeat_band_hz
    for mask in (~mask1, mask1):
        masked = grid.with_bins(grid.bins * mask)
        power = np.abs(masked.bins) ** 2
        total = power.sum()
        scores.append(power[:, low].sum() / total if total > 0 else 0.0)
        outs.append(istft(masked))
    hb = int(np.argmax(scores))
    return SeparationResult(heartbeat=outs[hb], noise=outs[1 - hb])


# --- noise fusion and band-stop ----------------------------------------------------

def fuse_noise(s_n: Waveform, gated_noise: Waveform) -> Waveform:
    """Sample-wise sum of the separator's and the gate's noise estimates."""
    if len(s_n) != len(gated_noise) or s_n.sample_rate_hz != gated_noise.sample_rate_hz:
        raise LengthMismatchError("noise estimates must share length and rate")
    return Waveform(s_n.samples + gated_noise.samples, s_n.sample_rate_hz)


@dataclass(frozen=True)
class BandstopConfig:
    """Band-stop of the signal where the noise profile's spectrum is strong.

    A bin is stopped when the noise magnitude reaches the configured
    percentile of the noise spectrum and at least ``floor_ratio`` of its
    peak (so near-zero noise spectra stop nothing). When
    ``min_noise_signal_ratio`` is set, the noise must additionally explain
    that fraction of the signal's own magnitude at the bin, which protects
    heartbeat-dominated bins from incidental noise leakage.
    """

    percentile: float = 95.0
    attenuation: float = 0.05
    floor_ratio: float = 0.01
    min_noise_signal_ratio: float | None = None


def bandstop_by_noise_profile(s_s: Waveform, m: Waveform,
                              cfg: BandstopConfig = BandstopConfig()) -> Waveform:
    """Attenuate frequency bins of ``s_s`` where ``m`` has high magnitudes."""
    if len(s_s) != len(m) or s_s.sample_rate_hz != m.sample_rate_hz:
        raise LengthMismatchError("signal and noise profile must share length and rate")
    noise_mag = np.abs(np.fft.rfft(m.samples))
    peak = float(noise_mag.max())
    if peak == 0.0:
        return s_s
    spectrum = np.fft.rfft(s_s.samples)
    threshold = max(float(np.percentile(noise_mag, cfg.percentile)), cfg.floor_ratio * peak)
    stop = noise_mag >= threshold
    if cfg.min_noise_signal_ratio is not None:
        stop &= noise_mag >= cfg.min_noise_signal_ratio * np.abs(spectrum)
    spectrum[stop] *= cfg.attenuation
    return Waveform(np.fft.irfft(spectrum, n=len(s_s)), s_s.sample_rate_hz)


# --- end-to-end pipeline -------------------------------------------------------

class DenoiseMethod(enum.Enum):
    SCBSS = "scbss"
    DAE = "dae"


# The separation path band-stops broadband noise, so its stop set must be able
# to cover most of the spectrum; the ratio gate is what spares heartbeat bins.
PIPELINE_BANDSTOP = BandstopConfig(percentile=25.0, min_noise_signal_ratio=0.5)


@dataclass
class ModelSet:
    """Everything the pipeline may need, trained or configured."""

    separator: DcModel | None = None
    dae: DaeModel | None = None
    gate: GateConfig = field(default_factory=GateConfig)
    bandstop: BandstopConfig = field(default_factory=lambda: replace(PIPELINE_BANDSTOP))


def denoise_pipeline(s_s: Waveform, method: DenoiseMethod, models: ModelSet) -> Waveform:
    """Produce the final denoised signal via the chosen strategy."""
    if method is DenoiseMethod.SCBSS:
        if models.separator is None:
            raise MissingModelError("SCBSS path requires a trained separator")
        separation = separate(models.separator, s_s)
        _, gate_noise = spectral_gate(s_s, models.gate)
        merged = fuse_noise(separation.noise, gate_noise)
        return bandstop_by_noise_profile(s_s, merged, models.bandstop)
    if method is DenoiseMethod.DAE:
        if models.dae is None:
            raise MissingModelError("DAE path requires a trained autoencoder")
        return denoise_dae(models.dae, s_s)
    raise ValueError(f"unknown method {method!r}")


# --- persistence ------------------------------------------------------------

def save_dae(model: DaeModel, path) -> None:
    arrays = {"feat_mean": model.feat_mean, "feat_std": model.feat_std}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    save_container(path, kind="dae", meta={
        "sizes": model.sizes, "window_len": model.window_len, "hop": model.hop,
        "context": model.context, "final_loss": model.final_loss,
        "loss_trace": model.loss_trace,
    }, arrays=arrays)


def load_dae(path) -> DaeModel:
    _, meta, arrays = load_container(path, expect_kind="dae")
    n_layers = len(meta["sizes"]) - 1
    return DaeModel(
        weights=[arrays[f"w{i}"] for i in range(n_layers)],
        biases=[arrays[f"b{i}"] for i in range(n_layers)],
        sizes=list(meta["sizes"]), window_len=meta["window_len"], hop=meta["hop"],
        context=meta["context"], feat_mean=arrays["feat_mean"],
        feat_std=arrays["feat_std"], final_loss=meta["final_loss"],
        loss_trace=list(meta["loss_trace"]),
    )


def save_separator(model: DcModel, path) -> None:
    e = model.embedder
    save_container(path, kind="separator", meta={
        "window_len": model.window_len, "hop": model.hop,
        "kmeans_seed": model.kmeans_seed, "loss_trace": model.loss_trace,
        "heartbeat_band_hz": model.heartbeat_band_hz,
        "hidden": e.hidden, "embed_dim": e.embed_dim, "n_bins": e.n_bins,
    }, arrays={"w_xh": e.w_xh, "w_hh": e.w_hh, "b_h": e.b_h,
               "w_p": e.w_p, "b_p": e.b_p})


def load_separator(path) -> DcModel:
    _, meta, arrays = load_container(path, expect_kind="separator")
    e = RnnEmbedder.__new__(RnnEmbedder)
    e.n_bins = meta["n_bins"]
    e.hidden = meta["hidden"]
    e.embed_dim = meta["embed_dim"]
    e.w_xh = arrays["w_xh"]
    e.w_hh = arrays["w_hh"]
    e.b_h = arrays["b_h"]
    e.w_p = arrays["w_p"]
    e.b_p = arrays["b_p"]
    return DcModel(
        embedder=e, window_len=meta["window_len"], hop=meta["hop"],
        kmeans_seed=meta["kmeans_seed"], loss_trace=list(meta["loss_trace"]),
        heartbeat_band_hz=meta.get("heartbeat_band_hz", 300.0),
    )
