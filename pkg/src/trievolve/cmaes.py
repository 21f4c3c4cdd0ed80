"""Covariance Matrix Adaptation Evolution Strategy, ask/tell style.

Full CMA-ES for minimization: weighted recombination of the best half of
the population, cumulative step-size adaptation, and rank-1 plus rank-mu
covariance updates, with the standard default parameters. The update is
rank-based: any strictly increasing transform of the fitness values leaves
it bit-identical. State serializes to plain JSON numbers (including the
generator state), so a resumed run continues on the exact trajectory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class CmaStateError(RuntimeError):
    """Search state became unusable (non-finite covariance)."""


def default_population_size(dimension: int) -> int:
    return 4 + int(3 * math.log(dimension))


@dataclass(frozen=True)
class CmaConfig:
    dimension: int
    population_size: int
    parent_count: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c1: float
    c_mu: float
    chi_n: float
    eigen_interval: int

    def __post_init__(self) -> None:
        n, lam, mu = self.dimension, self.population_size, self.parent_count
        if n < 1:
            raise ValueError("dimension must be >= 1")
        if lam < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 < mu < lam:
            raise ValueError("parent_count must satisfy 0 < mu < lambda")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (mu,) or np.any(w <= 0) or np.any(np.diff(w) > 0):
            raise ValueError("weights must be positive and non-increasing")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if self.c1 + self.c_mu > 1.0:
            raise ValueError("c1 + c_mu must not exceed 1")
        for name in ("c_sigma", "c_c"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")

    @classmethod
    def for_dimension(cls, dimension: int, population_size: int | None = None) -> "CmaConfig":
        """Standard default parameters for the given problem size."""
        n = dimension
        lam = population_size if population_size is not None else default_population_size(n)
        if lam < 2:
            raise ValueError("population_size must be >= 2")
        mu = lam // 2
        raw = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mu_eff = float(1.0 / np.sum(weights**2))
        c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
        c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
        c1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
        c_mu = min(1.0 - c1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
        chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
        eigen_interval = max(1, int(1.0 / (10.0 * n * (c1 + c_mu))))
        return cls(
            dimension=n,
            population_size=lam,
            parent_count=mu,
            weights=weights,
            mu_eff=mu_eff,
            c_sigma=c_sigma,
            d_sigma=d_sigma,
            c_c=c_c,
            c1=c1,
            c_mu=c_mu,
            chi_n=chi_n,
            eigen_interval=eigen_interval,
        )


class CmaEs:
    """Minimizes a black-box fitness over R^n.

    Usage::

        es = CmaEs(mean0=np.zeros(n), sigma0=1.0, population_size=32, seed=7)
        while not done:
            candidates = es.ask()
            es.tell(candidates, [fitness(x) for x in candidates])
        x, f = es.best
    """

    def __init__(
        self,
        mean0,
        sigma0: float,
        population_size: int | None = None,
        config: CmaConfig | None = None,
        seed: int = 0,
    ):
        mean = np.array(mean0, dtype=np.float64).ravel()
        if sigma0 <= 0 or not math.isfinite(sigma0):
            raise ValueError(f"sigma0 must be positive and finite, got {sigma0}")
        if config is None:
            config = CmaConfig.for_dimension(mean.size, population_size)
        elif config.dimension != mean.size:
            raise ValueError(
                f"config dimension {config.dimension} != mean dimension {mean.size}"
            )
        n = mean.size
        self.config = config
        self.mean = mean
        self.sigma = float(sigma0)
        self.cov = np.eye(n)
        self.path_sigma = np.zeros(n)
        self.path_c = np.zeros(n)
        self.generation = 0
        self.rng = np.random.default_rng(seed)
        self.best_x: np.ndarray | None = None
        self.best_f: float = math.inf
        self._eig_vals = np.ones(n)
        self._eig_vecs = np.eye(n)
        self._eig_generation = 0

    # -- sampling ------------------------------------------------------

    def ask(self) -> np.ndarray:
        """Sample a (lambda, n) array of candidates from N(mean, sigma^2 C)."""
        self._refresh_eigen_if_due()
        lam = self.config.population_size
        z = self.rng.standard_normal((lam, self.config.dimension))
        y = (z * np.sqrt(self._eig_vals)) @ self._eig_vecs.T
        return self.mean + self.sigma * y

    def _refresh_eigen_if_due(self) -> None:
        if self.generation > 0 and \
                self.generation - self._eig_generation < self.config.eigen_interval:
            return
        if not np.all(np.isfinite(self.cov)):
            raise CmaStateError("covariance matrix contains non-finite entries")
        vals, vecs = np.linalg.eigh(self.cov)
        self._eig_vals = np.maximum(vals, 1e-30)
        self._eig_vecs = vecs
        self._eig_generation = self.generation

    # -- update --------------------------------------------------------

    def tell(self, candidates, fitnesses) -> None:
        """Rank the candidates (ascending fitness, ties by submission order)
        and update mean, step size, paths and covariance."""
        cfg = self.config
        X = np.asarray(candidates, dtype=np.float64)
        f_raw = np.asarray(fitnesses, dtype=np.float64).ravel()
        if X.shape != (cfg.population_size, cfg.dimension):
            raise ValueError(
                f"candidates must have shape {(cfg.population_size, cfg.dimension)}, got {X.shape}"
            )
        if f_raw.size != cfg.population_size:
            raise ValueError(
                f"expected {cfg.population_size} fitness values, got {f_raw.size}"
            )
        f = np.where(np.isfinite(f_raw), f_raw, np.inf)
        if not np.any(np.isfinite(f)):
            warnings.warn("all fitness values non-finite; generation skipped", stacklevel=2)
            return

        n = cfg.dimension
        order = np.argsort(f, kind="stable")
        elite = X[order[: cfg.parent_count]]

        old_mean = self.mean
        new_mean = cfg.weights @ elite
        y_w = (new_mean - old_mean) / self.sigma

        # C^(-1/2) y via the cached eigensystem
        invsqrt_y = self._eig_vecs @ ((self._eig_vecs.T @ y_w) / np.sqrt(self._eig_vals))
        cs = cfg.c_sigma
        self.path_sigma = (1.0 - cs) * self.path_sigma + math.sqrt(
            cs * (2.0 - cs) * cfg.mu_eff
        ) * invsqrt_y

        gen1 = self.generation + 1
        ps_norm = float(np.linalg.norm(self.path_sigma))
        hsig = 1.0 if ps_norm / math.sqrt(1.0 - (1.0 - cs) ** (2 * gen1)) < (
            1.4 + 2.0 / (n + 1.0)
        ) * cfg.chi_n else 0.0

        cc = cfg.c_c
        self.path_c = (1.0 - cc) * self.path_c + hsig * math.sqrt(
            cc * (2.0 - cc) * cfg.mu_eff
        ) * y_w

        Y = (elite - old_mean) / self.sigma
        c1a = cfg.c1 * (1.0 - (1.0 - hsig) * cc * (2.0 - cc))
        cov = (1.0 - c1a - cfg.c_mu) * self.cov
        cov += cfg.c1 * np.outer(self.path_c, self.path_c)
        cov += cfg.c_mu * (Y.T @ (cfg.weights[:, None] * Y))
        self.cov = (cov + cov.T) / 2.0

        self.sigma *= math.exp((cs / cfg.d_sigma) * (ps_norm / cfg.chi_n - 1.0))
        if not math.isfinite(self.sigma) or self.sigma <= 0:
            raise CmaStateError(f"step size degenerated to {self.sigma}")

        self.mean = new_mean
        self.generation = gen1

        i0 = int(order[0])
        if f[i0] < self.best_f:
            self.best_f = float(f[i0])
            self.best_x = X[i0].copy()

    @property
    def best(self) -> tuple[np.ndarray | None, float]:
        """Lowest-fitness candidate ever told; (None, inf) before any tell."""
        return self.best_x, self.best_f

    @property
    def eigenvalue_range(self) -> tuple[float, float]:
        """Smallest and largest cached eigenvalue of C."""
        return float(self._eig_vals.min()), float(self._eig_vals.max())

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        """Full state as JSON-compatible plain numbers; exact round trip."""
        cfg = self.config
        return {
            "config": {
                "dimension": cfg.dimension,
                "population_size": cfg.population_size,
                "parent_count": cfg.parent_count,
                "weights": cfg.weights.tolist(),
                "mu_eff": cfg.mu_eff,
                "c_sigma": cfg.c_sigma,
                "d_sigma": cfg.d_sigma,
                "c_c": cfg.c_c,
                "c1": cfg.c1,
                "c_mu": cfg.c_mu,
                "chi_n": cfg.chi_n,
                "eigen_interval": cfg.eigen_interval,
            },
            "mean": self.mean.tolist(),
            "sigma": self.sigma,
            "cov": self.cov.tolist(),
            "path_sigma": self.path_sigma.tolist(),
            "path_c": self.path_c.tolist(),
            "generation": self.generation,
            "eig_vals": self._eig_vals.tolist(),
            "eig_vecs": self._eig_vecs.tolist(),
            "eig_generation": self._eig_generation,
            "best_x": None if self.best_x is None else self.best_x.tolist(),
            "best_f": self.best_f if math.isfinite(self.best_f) else None,
            "rng_state": _rng_state_to_json(self.rng),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CmaEs":
        cfg = CmaConfig(
            dimension=doc["config"]["dimension"],
            population_size=doc["config"]["population_size"],
            parent_count=doc["config"]["parent_count"],
            weights=np.asarray(doc["config"]["weights"], dtype=np.float64),
            mu_eff=doc["config"]["mu_eff"],
            c_sigma=doc["config"]["c_sigma"],
            d_sigma=doc["config"]["d_sigma"],
            c_c=doc["config"]["c_c"],
            c1=doc["config"]["c1"],
            c_mu=doc["config"]["c_mu"],
            chi_n=doc["config"]["chi_n"],
            eigen_interval=doc["config"]["eigen_interval"],
        )
        es = cls(np.asarray(doc["mean"], dtype=np.float64), doc["sigma"], config=cfg)
        es.cov = np.asarray(doc["cov"], dtype=np.float64)
        es.path_sigma = np.asarray(doc["path_sigma"], dtype=np.float64)
        es.path_c = np.asarray(doc["path_c"], dtype=np.float64)
        es.generation = doc["generation"]
        es._eig_vals = np.asarray(doc["eig_vals"], dtype=np.float64)
        es._eig_vecs = np.asarray(doc["eig_vecs"], dtype=np.float64)
        es._eig_generation = doc["eig_generation"]
        es.best_x = None if doc["best_x"] is None else np.asarray(doc["best_x"], dtype=np.float64)
        es.best_f = math.inf if doc["best_f"] is None else doc["best_f"]
        _rng_state_from_json(es.rng, doc["rng_state"])
        return es


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": str(state["state"]["state"]),
        "inc": str(state["state"]["inc"]),
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def _rng_state_from_json(rng: np.random.Generator, doc: dict) -> None:
    if doc["bit_generator"] != rng.bit_generator.state["bit_generator"]:
        raise ValueError(f"unsupported generator {doc['bit_generator']!r}")
    rng.bit_generator.state = {
        "bit_generator": doc["bit_generator"],
        "state": {"state": int(doc["state"]), "inc": int(doc["inc"])},
        "has_uint32": doc["has_uint32"],
        "uinteger": doc["uinteger"],
    }
