"""Covariance matrix adaptation evolution strategy (minimisation).

The (mu/mu_w, lambda) variant with cumulative step-size adaptation and
rank-one plus rank-mu covariance updates, using the usual default
learning rates. Sampling is driven by a seeded ``numpy`` generator, so a
run is reproducible from its seed, hyperparameters and fitness function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA_MAX = 1e7
SIGMA_MIN = 1e-12


class CmaesError(RuntimeError):
    """Invalid hyperparameters or a numerically degenerate search state."""


@dataclass(frozen=True)
class Candidate:
    genome: np.ndarray
    fitness: float


class CMAES:
    def __init__(self, mean, sigma: float, population: int, seed: int = 0):
        mean = np.array(mean, dtype=float).ravel()
        if mean.size == 0 or not np.all(np.isfinite(mean)):
            raise CmaesError("mean must be a non-empty finite vector")
        if not (sigma > 0 and math.isfinite(sigma)):
            raise CmaesError(f"sigma must be positive and finite, got {sigma}")
        if population < 2:
            raise CmaesError(f"population must be at least 2, got {population}")
        n = mean.size
        self.dimension = n
        self.population = int(population)
        self.rng_seed = int(seed)
        self._rng = np.random.default_rng(seed)

        mu = self.population // 2
        raw = math.log((self.population + 1) / 2) - np.log(np.arange(1, mu + 1))
        self.mu = mu
        self.recombination_weights = raw / raw.sum()
        self.mu_eff = 1.0 / float(np.sum(self.recombination_weights**2))

        mu_eff = self.mu_eff
        self.c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
        self.d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + self.c_sigma
        self.c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
        self.c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
        self.c_mu = min(1 - self.c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))

        self.mean = mean
        self.sigma = float(sigma)
        self.covariance = np.eye(n)
        self.path_sigma = np.zeros(n)
        self.path_c = np.zeros(n)
        self.generation = 0
        self.evaluations = 0
        self.best: Candidate | None = None
        self._decompose()

    def _decompose(self) -> None:
        try:
            eigvals, basis = np.linalg.eigh(self.covariance)
        except np.linalg.LinAlgError as exc:
            raise CmaesError(f"covariance eigendecomposition failed: {exc}") from exc
        if not np.all(np.isfinite(eigvals)) or eigvals.min() <= 0:
            raise CmaesError("covariance matrix is not positive definite")
        self._basis = basis
        self._scales = np.sqrt(eigvals)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._scales**2

    def ask(self) -> np.ndarray:
        """Sample ``population`` genomes as rows of an array."""
        z = self._rng.standard_normal((self.population, self.dimension))
        return self.mean + self.sigma * (z * self._scales) @ self._basis.T

    def tell(self, candidates: list[Candidate]) -> None:
        if len(candidates) != self.population:
            raise CmaesError(f"expected {self.population} candidates, got {len(candidates)}")
        fitness = np.array([c.fitness for c in candidates], dtype=float)
        if not np.all(np.isfinite(fitness)):
            raise CmaesError("fitness values must be finite")
        x = np.array([np.asarray(c.genome, dtype=float) for c in candidates])
        if x.shape != (self.population, self.dimension):
            raise CmaesError(f"candidate genomes must have dimension {self.dimension}")

        order = np.argsort(fitness, kind="stable")
        self.evaluations += self.population
        self.generation += 1
        top = order[0]
        if self.best is None or fitness[top] < self.best.fitness:
            self.best = Candidate(genome=x[top].copy(), fitness=float(fitness[top]))

        n = self.dimension
        w = self.recombination_weights
        y = (x[order[: self.mu]] - self.mean) / self.sigma
        y_w = w @ y
        self.mean = self.mean + self.sigma * y_w

        inv_sqrt_c = self._basis @ np.diag(1 / self._scales) @ self._basis.T
        cs = self.c_sigma
        self.path_sigma = (1 - cs) * self.path_sigma + math.sqrt(cs * (2 - cs) * self.mu_eff) * (
            inv_sqrt_c @ y_w
        )
        ps_norm = float(np.linalg.norm(self.path_sigma))
        h_sigma = ps_norm / math.sqrt(1 - (1 - cs) ** (2 * self.generation)) < (
            1.4 + 2 / (n + 1)
        ) * self.chi_n
        cc = self.c_c
        self.path_c = (1 - cc) * self.path_c + h_sigma * math.sqrt(cc * (2 - cc) * self.mu_eff) * y_w

        c1, cmu = self.c_1, self.c_mu
        lost = (1 - h_sigma) * c1 * cc * (2 - cc)
        rank_mu = (y * w[:, None]).T @ y
        c = (1 - c1 - cmu + lost) * self.covariance + c1 * np.outer(self.path_c, self.path_c) + cmu * rank_mu
        self.covariance = (c + c.T) / 2

        self.sigma *= math.exp((cs / self.d_sigma) * (ps_norm / self.chi_n - 1))
        if not (SIGMA_MIN <= self.sigma <= SIGMA_MAX):
            raise CmaesError(f"step size degenerated to {self.sigma:.3g}")
        self._decompose()

    def best_seen(self) -> Candidate:
        if self.best is None:
            raise CmaesError("no generation has been evaluated yet")
        return self.best


def cmaes_init(mean, sigma: float, population: int, seed: int = 0) -> CMAES:
    return CMAES(mean, sigma, population, seed)


def ask(state: CMAES) -> np.ndarray:
    return state.ask()


def tell(state: CMAES, candidates: list[Candidate]) -> CMAES:
    state.tell(candidates)
    return state


def best_seen(state: CMAES) -> Candidate:
    return state.best_seen()


def minimize(fn, mean, sigma: float, population: int, max_evaluations: int, seed: int = 0,
             target: float | None = None) -> CMAES:
    """Run ask/tell on a plain function until the budget or ``target`` is reached."""
    es = CMAES(mean, sigma, population, seed)
    while es.evaluations + es.population <= max_evaluations:
        xs = es.ask()
        es.tell([Candidate(x, float(fn(x))) for x in xs])
        if target is not None and es.best_seen().fitness < target:
            break
    return es
