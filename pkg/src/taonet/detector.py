"""Stage one: hybrid OOD detection.

Fits per-dimension statistics and a principal/residual subspace split on
ID training features, then scores a sample two ways: the norm of its
standardized feature projected onto the residual subspace, and the summed
L2 change of the classifier encoder's pooled states across consecutive
layers. Both raw scores are normalized to [0, 1] against robust percentile
bounds fitted on ID validation data, mixed with weight alpha, and compared
to the decision threshold (strictly greater means OOD).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DecompositionFailure,
    DimensionMismatch,
    NotFitted,
    TooFewSamples,
)
from .neural.encoder import EncoderParams, encoder_forward_batch
from .neural.lstm import FeatureExtractor, extract_features

_SIGMA_FLOOR = 1e-12


@dataclass
class SubspaceModel:
    mu: np.ndarray                 # (d,)
    sigma: np.ndarray              # (d,) population std, floored
    eigenvalues: np.ndarray        # (d,) non-increasing
    eigenvectors: np.ndarray       # (d, d), orthonormal columns
    k: int                         # principal component count
    gamma: float                   # cumulative variance ratio target
    residual_projector: np.ndarray  # (d, d)

    @property
    def principal_projector(self) -> np.ndarray:
        v = self.eigenvectors[:, :self.k]
        return v @ v.T


@dataclass
class HybridScoreConfig:
    alpha: float
    delta: float
    residual_bounds: tuple[float, float]    # (low, high), low < high
    smoothness_bounds: tuple[float, float]

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for low, high in (self.residual_bounds, self.smoothness_bounds):
            if not low < high:
                raise ValueError("normalization bounds must satisfy low < high")


@dataclass
class ScoreBreakdown:
    residual_raw: float
    smoothness_raw: float
    residual_norm: float
    smoothness_norm: float
    hybrid: float
    is_ood: bool


def fit_statistics(features) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and population standard deviation."""
    matrix = np.asarray(features, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatch("features must form an (n, d) matrix")
    if matrix.shape[0] < 2:
        raise TooFewSamples("need at least 2 feature vectors")
    mu = matrix.mean(axis=0)
    sigma = matrix.std(axis=0)  # divide by N
    sigma = np.where(sigma < _SIGMA_FLOOR, 1.0, sigma)
    return mu, sigma


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-10,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps until the off-diagonal Frobenius norm drops below `tol` or the
    sweep budget is spent. Returns eigenvalues sorted non-increasing and
    the matching orthonormal eigenvector columns.
    """
    a = np.asarray(matrix, dtype=np.float64).copy()
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("matrix must be square")
    if not np.all(np.isfinite(a)):
        raise DecompositionFailure("matrix contains non-finite entries")
    n = a.shape[0]
    v = np.eye(n)

    def off_diagonal_norm() -> float:
        off = a - np.diag(np.diag(a))
        return float(np.sqrt((off ** 2).sum()))

    for _ in range(max_sweeps):
        if off_diagonal_norm() < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e10:
                    t = 1.0 / (2.0 * theta)  # asymptotic root, avoids overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                v_p, v_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * v_p - s * v_q
                v[:, q] = s * v_p + c * v_q
    if not np.all(np.isfinite(a)):
        raise DecompositionFailure("rotation produced non-finite values")

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def select_k(eigenvalues, gamma: float) -> int:
    """Smallest k whose top-k share of total variance reaches gamma."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    spectrum = np.maximum(np.asarray(eigenvalues, dtype=np.float64), 0.0)
    cumulative = np.cumsum(spectrum)
    total = cumulative[-1] if cumulative.size else 0.0
    if total <= 0.0:
        return 0
    for i in range(spectrum.size):
        if cumulative[i] / total >= gamma:
            return i + 1
    return spectrum.size


def fit_subspace(features, mu: np.ndarray, sigma: np.ndarray,
                 gamma: float) -> SubspaceModel:
    """Covariance of standardized features, eigenbasis, and projectors."""
    matrix = np.asarray(features, dtype=np.float64)
    if matrix.shape[0] < 2:
        raise TooFewSamples("need at least 2 feature vectors")
    z = (matrix - mu) / sigma
    cov = (z.T @ z) / z.shape[0]
    eigenvalues, eigenvectors = jacobi_eigh(cov)
    k = select_k(eigenvalues, gamma)
    residual = eigenvectors[:, k:]
    projector = residual @ residual.T
    return SubspaceModel(mu=mu, sigma=sigma, eigenvalues=eigenvalues,
                         eigenvectors=eigenvectors, k=k, gamma=gamma,
                         residual_projector=projector)


def residual_score(model: SubspaceModel, phi: np.ndarray) -> float:
    """Norm of the standardized feature's residual-subspace projection."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != model.mu.shape:
        raise DimensionMismatch(
            f"feature length {phi.shape} != model dimension {model.mu.shape}")
    z = (phi - model.mu) / model.sigma
    return float(np.linalg.norm(model.residual_projector @ z))


def residual_scores(model: SubspaceModel, features: np.ndarray) -> np.ndarray:
    z = (np.asarray(features, dtype=np.float64) - model.mu) / model.sigma
    return np.linalg.norm(z @ model.residual_projector.T, axis=1)


def smoothness_from_pooled(pooled: np.ndarray) -> float:
    """Summed L2 distance between consecutive pooled layer states."""
    states = np.asarray(pooled, dtype=np.float64)
    return float(np.linalg.norm(np.diff(states, axis=0), axis=1).sum())


def smoothness_score(encoder: EncoderParams, sample) -> float:
    tokens = np.asarray(getattr(sample, "tokens", sample))
    out = encoder_forward_batch(encoder, tokens[None, :])
    return smoothness_from_pooled(out.pooled[0])


def smoothness_scores(encoder: EncoderParams, token_rows: np.ndarray) -> np.ndarray:
    out = encoder_forward_batch(encoder, token_rows)
    diffs = np.diff(out.pooled.astype(np.float64), axis=1)
    return np.linalg.norm(diffs, axis=2).sum(axis=1)


def normalize_score(raw: float, bounds: tuple[float, float]) -> float:
    low, high = bounds
    return float(np.clip((raw - low) / (high - low), 0.0, 1.0))


def _robust_bounds(values: np.ndarray, low_pct: float,
                   high_pct: float) -> tuple[float, float]:
    low, high = np.percentile(values, [low_pct, high_pct])
    if not high > low:
        high = low + 1.0  # constant-score guard: everything normalizes to 0
    return float(low), float(high)


def calibrate(residual_raw, smoothness_raw, alpha: float, delta: float,
              low_pct: float = 1.0, high_pct: float = 99.0) -> HybridScoreConfig:
    """Fit per-component normalization bounds on ID validation raw scores."""
    residual_raw = np.asarray(residual_raw, dtype=np.float64)
    smoothness_raw = np.asarray(smoothness_raw, dtype=np.float64)
    if residual_raw.size < 20 or smoothness_raw.size < 20:
        raise TooFewSamples("calibration needs >= 20 ID validation samples")
    return HybridScoreConfig(
        alpha=alpha, delta=delta,
        residual_bounds=_robust_bounds(residual_raw, low_pct, high_pct),
        smoothness_bounds=_robust_bounds(smoothness_raw, low_pct, high_pct),
    )


def hybrid_score(config: HybridScoreConfig, residual_norm: float,
                 smoothness_norm: float,
                 residual_raw: float = float("nan"),
                 smoothness_raw: float = float("nan")) -> ScoreBreakdown:
    """Convex mix of the normalized components; OOD iff strictly above delta."""
    s = config.alpha * residual_norm + (1.0 - config.alpha) * smoothness_norm
    return ScoreBreakdown(residual_raw=residual_raw,
                          smoothness_raw=smoothness_raw,
                          residual_norm=residual_norm,
                          smoothness_norm=smoothness_norm,
                          hybrid=s, is_ood=s > config.delta)


@dataclass
class DetectorBundle:
    """Everything stage one needs: features, subspace, encoder, thresholds."""

    extractor: FeatureExtractor | None = None
    subspace: SubspaceModel | None = None
    encoder: EncoderParams | None = None
    config: HybridScoreConfig | None = None

    def require_fitted(self) -> None:
        missing = [name for name in ("extractor", "subspace", "encoder", "config")
                   if getattr(self, name) is None]
        if missing:
            raise NotFitted(f"detector components not fitted: {', '.join(missing)}")


def detect(bundle: DetectorBundle, sample) -> ScoreBreakdown:
    """Full stage-one decision for one sample."""
    bundle.require_fitted()
    tokens = np.asarray(getattr(sample, "tokens", sample))
    phi = extract_features(bundle.extractor, tokens[None, :])[0]
    s1_raw = residual_score(bundle.subspace, phi)
    s2_raw = smoothness_score(bundle.encoder, tokens)
    s1 = normalize_score(s1_raw, bundle.config.residual_bounds)
    s2 = normalize_score(s2_raw, bundle.config.smoothness_bounds)
    return hybrid_score(bundle.config, s1, s2, s1_raw, s2_raw)


def detect_batch(bundle: DetectorBundle, token_rows: np.ndarray) -> list[ScoreBreakdown]:
    """Vectorized raw scoring; per-sample normalization and mixing."""
    bundle.require_fitted()
    token_rows = np.asarray(token_rows)
    features = extract_features(bundle.extractor, token_rows)
    s1_raw = residual_scores(bundle.subspace, features)
    s2_raw = smoothness_scores(bundle.encoder, token_rows)
    results = []
    for r1, r2 in zip(s1_raw, s2_raw):
        n1 = normalize_score(float(r1), bundle.config.residual_bounds)
        n2 = normalize_score(float(r2), bundle.config.smoothness_bounds)
        results.append(hybrid_score(bundle.config, n1, n2, float(r1), float(r2)))
    return results
