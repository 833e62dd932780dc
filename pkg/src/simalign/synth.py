"""Synthetic ground-truth domains for validating every stage of the pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DomainDataset, FeatureMatrix, SimilarityMatrix, zscore_normalize
from .exceptions import DimensionError, ValidationError
from .similarity import WeightVector


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for synthetic domains.

    ``weight_sparsity`` is the fraction of features with zero true weight.
    When ``noise_relative`` is set, ``noise_sd`` is multiplied by the standard
    deviation of the clean off-diagonal similarities of each domain.
    ``item_noise_sd`` adds similarity structure carried by latent item
    factors that the features do not contain.
    """

    n_items: int = 120
    n_features: int = 512
    weight_sparsity: float = 0.9375
    noise_sd: float = 0.1
    n_domains: int = 1
    shared_weights: bool = True
    seed: int = 0
    noise_relative: bool = True
    weight_range: tuple = (0.5, 1.5)
    feature_correlation: float = 0.0
    item_noise_sd: float = 0.0
    n_item_factors: int = 3

    def __post_init__(self):
        for name in ("n_items", "n_features", "n_domains", "n_item_factors"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.n_items < 2:
            raise ValidationError("n_items must be at least 2")
        if not 0.0 <= self.weight_sparsity <= 1.0:
            raise ValidationError(f"weight_sparsity must lie in [0, 1], got {self.weight_sparsity}")
        if self.noise_sd < 0 or self.item_noise_sd < 0:
            raise ValidationError("noise standard deviations must be nonnegative")
        if not 0.0 <= self.feature_correlation < 1.0:
            raise ValidationError("feature_correlation must lie in [0, 1)")
        lo, hi = self.weight_range
        if not 0 <= lo <= hi:
            raise ValidationError(f"weight_range must satisfy 0 <= lo <= hi, got {self.weight_range}")

    @property
    def n_informative(self) -> int:
        return int(round((1.0 - self.weight_sparsity) * self.n_features))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weight_range"] = list(self.weight_range)
        return d


@dataclass
class SynthResult:
    spec: SynthSpec
    datasets: list
    weights: list  # ground truth WeightVector per domain
    clean: list = field(default_factory=list)  # noise-free similarity matrices
    noise_scale: list = field(default_factory=list)  # absolute noise sd used per domain

    def ceiling_r2(self, k: int = 0) -> float:
        """Squared correlation of noisy against clean off-diagonal similarities."""
        from .evaluation import r_squared

        i, j = np.tril_indices(self.spec.n_items, -1)
        return r_squared(self.clean[k][i, j], self.datasets[k].similarities.values[i, j])


def _features(spec, rng):
    Z = rng.standard_normal((spec.n_items, spec.n_features))
    rho = spec.feature_correlation
    if rho > 0:
        for k in range(1, spec.n_features):
            Z[:, k] = rho * Z[:, k - 1] + np.sqrt(1 - rho * rho) * Z[:, k]
    return Z


def _weights(spec, rng, support):
    w = np.zeros(spec.n_features)
    lo, hi = spec.weight_range
    w[support] = rng.uniform(lo, hi, size=support.size)
    return w


def _supports(spec, rng):
    m = spec.n_informative
    if spec.shared_weights:
        s = np.sort(rng.choice(spec.n_features, size=m, replace=False))
        return [s] * spec.n_domains
    if m * spec.n_domains <= spec.n_features:
        perm = rng.permutation(spec.n_features)
        return [np.sort(perm[k * m:(k + 1) * m]) for k in range(spec.n_domains)]
    return [np.sort(rng.choice(spec.n_features, size=m, replace=False)) for _ in range(spec.n_domains)]


def _symmetric_noise(n, sd, rng):
    E = np.zeros((n, n))
    i, j = np.tril_indices(n, -1)
    E[i, j] = rng.standard_normal(i.size) * sd
    E[j, i] = E[i, j]
    return E


def generate(spec: SynthSpec) -> SynthResult:
    """Draw domains with features, true nonnegative weights and noisy similarities.

    Features are standard normal then z-scored per domain.  Noise is added to
    off-diagonal similarities only, symmetrically; the diagonal keeps its
    clean value.  The output is a pure function of ``spec``.
    """
    root = np.random.SeedSequence(spec.seed)
    weight_rng = np.random.default_rng(root.spawn(1)[0])
    supports = _supports(spec, weight_rng)
    if spec.shared_weights:
        shared = _weights(spec, weight_rng, supports[0])
        truths = [shared] * spec.n_domains
    else:
        truths = [_weights(spec, weight_rng, s) for s in supports]
    datasets, weights, clean, scales = [], [], [], []
    domain_seeds = root.spawn(spec.n_domains + 1)[1:]
    i, j = np.tril_indices(spec.n_items, -1)
    for k, (child, w) in enumerate(zip(domain_seeds, truths)):
        rng = np.random.default_rng(child)
        ids = [f"d{k}_i{m:03d}" for m in range(spec.n_items)]
        F = zscore_normalize(FeatureMatrix(_features(spec, rng), ids))
        S_clean = (F.values * w) @ F.values.T
        S_clean = (S_clean + S_clean.T) / 2.0
        if spec.noise_relative:
            signal = float(np.std(S_clean[i, j]))
            sd = spec.noise_sd * signal if signal > 0 else spec.noise_sd
        else:
            sd = spec.noise_sd
        S = S_clean + _symmetric_noise(spec.n_items, sd, rng)
        if spec.item_noise_sd > 0:
            H = rng.standard_normal((spec.n_items, spec.n_item_factors)) * spec.item_noise_sd
            extra = H @ H.T
            np.fill_diagonal(extra, 0.0)
            S = S + extra
        name = f"domain{k}"
        sim = SimilarityMatrix(S, ids, diagonal_defined=True)
        datasets.append(DomainDataset(name, F, sim, meta={"synthetic": True, "seed": spec.seed}))
        weights.append(WeightVector(w, nonnegative=True))
        clean.append(S_clean)
        scales.append(sd)
    return SynthResult(spec, datasets, weights, clean, scales)


def recovery_score(w_hat, w_star) -> float:
    """Pearson correlation of estimated and true weights over their joint support."""
    a = w_hat.values if isinstance(w_hat, WeightVector) else np.asarray(w_hat, dtype=np.float64)
    b = w_star.values if isinstance(w_star, WeightVector) else np.asarray(w_star, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"weight vectors differ in length: {a.size} vs {b.size}")
    support = (a != 0) | (b != 0)
    a, b = a[support], b[support]
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValidationError("recovery score is undefined for constant weight vectors")
    return float(np.corrcoef(a, b)[0, 1])
