"""Synthetic data from linear non-Gaussian acyclic models with latent confounders."""

import logging
import math
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from . import CalibrationError
from .models import GroundTruth
from .regression import DataMatrix
from .utils import derive_seed

_LOG = logging.getLogger(__name__)

GAUSS_MIXTURE_ASYMMETRIC = "gauss_mixture_asymmetric"
GAUSS_MIXTURE_SYMMETRIC = "gauss_mixture_symmetric"
DOUBLE_EXPONENTIAL = "double_exponential"

NOISE_KINDS = (GAUSS_MIXTURE_ASYMMETRIC, GAUSS_MIXTURE_SYMMETRIC, DOUBLE_EXPONENTIAL)

# (weights, means, sds) before standardization
_DEFAULT_MIXTURES = {
    GAUSS_MIXTURE_ASYMMETRIC: ((0.7, 0.3), (-1.0, 2.33), (0.5, 0.5)),
    GAUSS_MIXTURE_SYMMETRIC: ((0.5, 0.5), (-1.5, 1.5), (0.5, 0.5)),
}


class NoiseSpec(NamedTuple):
    """
    The distribution of one external influence or latent confounder.

    Mixtures are standardized analytically, so draws have mean 0 and standard
    deviation ``target_sd`` whatever the component parameters.
    """

    kind: str
    target_sd: float = 1.0
    weights: Tuple[float, ...] = ()
    means: Tuple[float, ...] = ()
    sds: Tuple[float, ...] = ()

    @classmethod
    def of(cls, kind: str, target_sd: float = 1.0) -> "NoiseSpec":
        """Create a NoiseSpec with the default parameters for a kind."""
        if kind not in NOISE_KINDS:
            raise ValueError(f"Unknown noise kind {kind!r}")
        if kind == DOUBLE_EXPONENTIAL:
            return cls(kind, float(target_sd))
        weights, means, sds = _DEFAULT_MIXTURES[kind]
        return cls(kind, float(target_sd), weights, means, sds)

    def mixture_moments(self) -> Tuple[float, float]:
        """Get the mean and standard deviation of the raw mixture."""
        weights = np.asarray(self.weights)
        means = np.asarray(self.means)
        sds = np.asarray(self.sds)
        mean = float(weights @ means)
        variance = float(weights @ (sds**2 + means**2)) - mean**2
        return mean, math.sqrt(variance)

    def validate(self):
        """
        Check the parameters.

        :raises ValueError: if the kind is unknown or the mixture is invalid
        """
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"Unknown noise kind {self.kind!r}")
        if not self.target_sd > 0.0:
            raise ValueError(f"target_sd must be positive, got {self.target_sd}")
        if self.kind == DOUBLE_EXPONENTIAL:
            return
        sizes = {len(self.weights), len(self.means), len(self.sds)}
        if len(sizes) != 1 or len(self.weights) < 2:
            raise ValueError("mixture needs matching weights, means and sds")
        if any(w < 0.0 for w in self.weights):
            raise ValueError(f"mixture weights must be non-negative: {self.weights}")
        if not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
            raise ValueError(f"mixture weights must sum to 1: {self.weights}")
        if any(not s > 0.0 for s in self.sds):
            raise ValueError(f"mixture sds must be positive: {self.sds}")
        components = {
            (m, s) for w, m, s in zip(self.weights, self.means, self.sds) if w
        }
        if len(components) < 2:
            raise ValueError("mixture must have at least two distinct components")

    def with_sd(self, target_sd: float) -> "NoiseSpec":
        """Get a copy scaled to another standard deviation."""
        return self._replace(target_sd=float(target_sd))

    def to_json(self) -> dict:
        """Convert the spec to a JSON dictionary."""
        data: dict = {"kind": self.kind, "target_sd": self.target_sd}
        if self.kind != DOUBLE_EXPONENTIAL:
            data["weights"] = list(self.weights)
            data["means"] = list(self.means)
            data["sds"] = list(self.sds)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "NoiseSpec":
        """Convert a JSON dictionary to a NoiseSpec."""
        if isinstance(data, str):
            return cls.of(data)
        base = cls.of(data["kind"], data.get("target_sd", 1.0))
        return base._replace(
            weights=tuple(data.get("weights", base.weights)),
            means=tuple(data.get("means", base.means)),
            sds=tuple(data.get("sds", base.sds)),
        )


def sample_noise(spec: NoiseSpec, n: int, seed: int) -> np.ndarray:
    """Draw n i.i.d. values with mean 0 and standard deviation target_sd."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    spec.validate()
    rng = np.random.default_rng(seed)
    if spec.kind == DOUBLE_EXPONENTIAL:
        return rng.laplace(0.0, spec.target_sd / math.sqrt(2.0), size=n)

    component = rng.choice(len(spec.weights), size=n, p=np.asarray(spec.weights))
    draws = rng.normal(
        np.asarray(spec.means)[component], np.asarray(spec.sds)[component]
    )
    mean, sd = spec.mixture_moments()
    return (draws - mean) / sd * spec.target_sd


class ModelSpec(NamedTuple):
    """
    A generative model ``x = B x + Lambda f + e``.

    ``B[i, j]`` is the strength of the edge from x_j to x_i and ``Lambda[i, k]``
    the loading of confounder f_k on x_i.
    """

    # pylint: disable=invalid-name

    B: np.ndarray
    Lambda: np.ndarray
    noise: Tuple[NoiseSpec, ...]
    confounder_noise: Tuple[NoiseSpec, ...]
    causal_order: Tuple[str, ...]
    variable_ids: Tuple[str, ...]

    @classmethod
    def create(
        cls,
        B,
        Lambda=None,
        noise: Sequence[NoiseSpec] = (),
        confounder_noise: Sequence[NoiseSpec] = (),
        causal_order: Optional[Sequence[str]] = None,
        variable_ids: Optional[Sequence[str]] = None,
    ) -> "ModelSpec":
        """Create and validate a ModelSpec, deriving a causal order when omitted."""
        B = np.asarray(B, dtype=float)
        p = B.shape[0]
        Lambda = np.zeros((p, 0)) if Lambda is None else np.asarray(Lambda, dtype=float)
        if Lambda.ndim == 1:
            Lambda = Lambda.reshape(p, -1)
        ids = tuple(variable_ids or [f"x{i + 1}" for i in range(p)])
        if causal_order is None:
            causal_order = [ids[i] for i in _topological_order(B)]
        spec = cls(
            B=B,
            Lambda=Lambda,
            noise=tuple(noise),
            confounder_noise=tuple(confounder_noise),
            causal_order=tuple(causal_order),
            variable_ids=ids,
        )
        spec.validate()
        return spec

    @property
    def p(self) -> int:
        """Get the number of observed variables."""
        return self.B.shape[0]

    @property
    def q(self) -> int:
        """Get the number of latent confounders."""
        return self.Lambda.shape[1]

    def order_indices(self) -> List[int]:
        """Get row indices in causal order."""
        return [self.variable_ids.index(i) for i in self.causal_order]

    def validate(self):
        """
        Check shapes, acyclicity and confounder loadings.

        :raises ValueError: if any model invariant is violated
        """
        p = self.B.shape[0]
        if self.B.shape != (p, p):
            raise ValueError(f"B must be square, got shape {self.B.shape}")
        if self.Lambda.ndim != 2 or self.Lambda.shape[0] != p:
            raise ValueError(
                f"Lambda must have {p} rows, got shape {self.Lambda.shape}"
            )
        if len(self.variable_ids) != p or len(set(self.variable_ids)) != p:
            raise ValueError("variable_ids must be p unique names")
        if sorted(self.causal_order) != sorted(self.variable_ids):
            raise ValueError("causal_order must be a permutation of the variable ids")
        if len(self.noise) != p:
            raise ValueError(f"expected {p} noise specs, got {len(self.noise)}")
        if len(self.confounder_noise) != self.q:
            raise ValueError(
                f"expected {self.q} confounder noise specs, got "
                f"{len(self.confounder_noise)}"
            )
        for spec in self.noise + self.confounder_noise:
            spec.validate()
        if not (np.all(np.isfinite(self.B)) and np.all(np.isfinite(self.Lambda))):
            raise ValueError("B and Lambda must be finite")

        order = self.order_indices()
        permuted = self.B[np.ix_(order, order)]
        if np.any(np.triu(permuted) != 0.0):
            raise ValueError("B is not strictly lower triangular in causal_order")
        for column in range(self.q):
            loaded = np.count_nonzero(self.Lambda[:, column])
            if loaded < 2:
                raise ValueError(
                    f"confounder {column + 1} loads on {loaded} variables, needs 2"
                )

    def to_json(self) -> dict:
        """Convert the spec to a JSON dictionary."""
        return {
            "B": self.B.tolist(),
            "Lambda": self.Lambda.tolist(),
            "noise": [spec.to_json() for spec in self.noise],
            "confounder_noise": [spec.to_json() for spec in self.confounder_noise],
            "causal_order": list(self.causal_order),
            "variable_ids": list(self.variable_ids),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelSpec":
        """
        Convert a JSON dictionary to a ModelSpec.

        :raises ValueError: if the document is malformed
        """
        try:
            B = np.asarray(data["B"], dtype=float)
            p = B.shape[0] if B.ndim == 2 else 0
            Lambda = data.get("Lambda")
            if Lambda is not None and len(Lambda) == 0:
                Lambda = None
            return cls.create(
                B,
                Lambda,
                [NoiseSpec.from_json(item) for item in data["noise"]],
                [
                    NoiseSpec.from_json(item)
                    for item in data.get("confounder_noise", [])
                ],
                data.get("causal_order"),
                data.get("variable_ids") or [f"x{i + 1}" for i in range(p)],
            )
        except (KeyError, TypeError, IndexError) as ex:
            raise ValueError(f"malformed model spec: {ex!r}") from ex


def _topological_order(B: np.ndarray) -> List[int]:
    p = B.shape[0]
    remaining = set(range(p))
    order: List[int] = []
    while remaining:
        ready = [i for i in sorted(remaining) if not any(B[i, j] for j in remaining)]
        if not ready:
            raise ValueError("B contains a directed cycle")
        order.append(ready[0])
        remaining.remove(ready[0])
    return order


def _descendants(B: np.ndarray) -> List[Set[int]]:
    p = B.shape[0]
    found: List[Set[int]] = [set() for _ in range(p)]
    for parent in range(p):
        stack = [parent]
        while stack:
            node = stack.pop()
            for child in np.flatnonzero(B[:, node]):
                if child not in found[parent]:
                    found[parent].add(int(child))
                    stack.append(int(child))
    return found


def ground_truth(spec: ModelSpec) -> GroundTruth:
    """
    Derive ancestor and confounder-sharing relations from a spec.

    Two variables share a confounder when some f_k reaches both, either through
    a direct loading or through descendants of a loaded variable.
    """
    ids = spec.variable_ids
    descendants = _descendants(spec.B)
    ancestor = {(ids[i], ids[j]) for i in range(spec.p) for j in descendants[i]}

    shared = set()
    for column in range(spec.q):
        reached: Set[int] = set()
        for loaded in np.flatnonzero(spec.Lambda[:, column]):
            reached.add(int(loaded))
            reached |= descendants[int(loaded)]
        shared |= {(ids[i], ids[j]) for i in reached for j in reached if i != j}

    return GroundTruth(ids, spec.B.copy(), frozenset(ancestor), frozenset(shared))


def sample_sources(spec: ModelSpec, n: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw the external influences and latent confounders.

    Every source has its own stream derived from seed.

    :returns (e, f) as p x n and q x n arrays
    """
    e = np.array(
        [
            sample_noise(s, n, derive_seed(seed, "e", i))
            for i, s in enumerate(spec.noise)
        ]
    ).reshape(spec.p, n)
    f = np.array(
        [
            sample_noise(s, n, derive_seed(seed, "f", k))
            for k, s in enumerate(spec.confounder_noise)
        ]
    ).reshape(spec.q, n)
    return e, f


def generate(spec: ModelSpec, n: int, seed: int) -> Tuple[DataMatrix, GroundTruth]:
    """Sample n observations by evaluating the model in causal order."""
    spec.validate()
    e, f = sample_sources(spec, n, seed)
    x = np.zeros((spec.p, n))
    confounding = spec.Lambda @ f
    for i in spec.order_indices():
        x[i] = spec.B[i] @ x + confounding[i] + e[i]
    _LOG.debug("generated %d samples of %d variables (seed %d)", n, spec.p, seed)
    return DataMatrix(x, spec.variable_ids), ground_truth(spec)


def analytic_covariance(spec: ModelSpec) -> np.ndarray:
    """Get the population covariance of x."""
    mixing = np.linalg.inv(np.eye(spec.p) - spec.B)
    source = spec.Lambda @ np.diag(
        [s.target_sd**2 for s in spec.confounder_noise]
    ) @ spec.Lambda.T + np.diag([s.target_sd**2 for s in spec.noise])
    return mixing @ source @ mixing.T


def calibrate_snr(spec: ModelSpec, ratio: float = 1.0) -> ModelSpec:
    """
    Rescale external influences so ``var(x_i) / var(e_i) - 1 == ratio``.

    Variables are processed in causal order. Variables without parents or
    confounder loadings keep their standard deviation.

    :raises CalibrationError: if a variable with inputs cannot reach the ratio
    """
    spec.validate()
    p, q = spec.p, spec.q
    variances = np.array(
        [s.target_sd**2 for s in spec.confounder_noise]
        + [s.target_sd**2 for s in spec.noise]
    )
    # rows of x as combinations of the sources [f, e]
    mixing = np.zeros((p, q + p))
    noise = list(spec.noise)

    for i in spec.order_indices():
        variable_id = spec.variable_ids[i]
        signal = spec.B[i] @ mixing
        signal[:q] += spec.Lambda[i]
        has_input = bool(np.any(spec.B[i]) or np.any(spec.Lambda[i]))
        if has_input:
            signal_variance = float(signal**2 @ variances)
            if not ratio > 0.0:
                raise CalibrationError(
                    variable_id, f"ratio must be positive, got {ratio}"
                )
            if not signal_variance > 0.0:
                raise CalibrationError(variable_id, "incoming signal variance is zero")
            sd = math.sqrt(signal_variance / ratio)
            noise[i] = noise[i].with_sd(sd)
            variances[q + i] = sd**2
            _LOG.debug("calibrated %s: sd(e)=%.6g", variable_id, sd)
        signal[q + i] = 1.0
        mixing[i] = signal

    return spec._replace(noise=tuple(noise))


def benchmark_network_spec() -> ModelSpec:
    """
    Six observed variables with two latent confounders, calibrated to SNR 1.

    x1 is an unconfounded root and x6 an unconfounded sink. f2 loads on the
    edge x2 -> x3 and f1 on the edge x4 -> x5, with loadings that leave x4 and
    x5 uncorrelated once x1 is regressed out and x2 and x3 nearly so. Ordering
    those pairs without a stopping rule tends to put the child first.
    """
    B = np.zeros((6, 6))
    B[1, 0] = 0.5
    B[3, 0] = 0.5
    B[2, 1] = 0.8
    B[4, 3] = 0.8
    B[5, 0] = -0.6
    B[5, 2] = 0.7
    B[5, 4] = -0.5
    Lambda = np.zeros((6, 2))
    Lambda[3, 0] = 1.0
    Lambda[4, 0] = -1.8
    Lambda[1, 1] = 1.0
    Lambda[2, 1] = -1.4
    noise = [
        NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC),
        NoiseSpec.of(DOUBLE_EXPONENTIAL),
        NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC),
        NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC),
        NoiseSpec.of(DOUBLE_EXPONENTIAL),
        NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC),
    ]
    confounders = [
        NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC),
        NoiseSpec.of(DOUBLE_EXPONENTIAL),
    ]
    return calibrate_snr(ModelSpec.create(B, Lambda, noise, confounders))


def chain_spec(p: int = 4) -> ModelSpec:
    """A confounder-free chain x1 -> x2 -> ... -> xp, calibrated to SNR 1."""
    if p < 2:
        raise ValueError(f"a chain needs at least 2 variables, got {p}")
    strengths = (0.9, -0.8, 0.7, -0.6, 1.0, -0.5)
    kinds = (GAUSS_MIXTURE_ASYMMETRIC, DOUBLE_EXPONENTIAL, GAUSS_MIXTURE_SYMMETRIC)
    B = np.zeros((p, p))
    for i in range(1, p):
        B[i, i - 1] = strengths[(i - 1) % len(strengths)]
    noise = [NoiseSpec.of(kinds[i % len(kinds)]) for i in range(p)]
    return calibrate_snr(ModelSpec.create(B, None, noise))


def all_confounded_spec() -> ModelSpec:
    """
    Three pairwise uncorrelated variables that all load on one confounder.

    No regression removes the confounder, so no variable is exogenous or a sink.
    """
    B = np.zeros((3, 3))
    B[1, 0] = 0.8
    B[2, 0] = -0.8
    B[2, 1] = 0.5
    Lambda = np.array([[1.0], [-1.6], [1.6]])
    noise = [
        NoiseSpec.of(DOUBLE_EXPONENTIAL),
        NoiseSpec.of(DOUBLE_EXPONENTIAL),
        NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC),
    ]
    confounders = [NoiseSpec.of(DOUBLE_EXPONENTIAL)]
    return calibrate_snr(ModelSpec.create(B, Lambda, noise, confounders))


BUILTIN_SPECS: Dict[str, Callable[[], ModelSpec]] = {
    "paper-benchmark": benchmark_network_spec,
    "chain-4": chain_spec,
    "all-confounded": all_confounded_spec,
}
