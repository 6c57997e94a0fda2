"""Two-stage adaptive reduced-rank regression.

Stage 1 whitens the features through a gap-thresholded PCA; stage 2 denoises
the response cross-moment matrix through absolute-value thresholding of its
singular values; the composition yields the coefficient estimate.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from ._serde import read_matrix_csv, write_matrix_csv
from ._version import __version__
from .spectral import decompose, select_gap_rank, select_threshold_rank, truncate_rank


class NoGapError(ValueError):
    """No consecutive-eigenvalue gap reaches delta.

    Lower delta or pass an explicit k1 override; silently keeping full rank
    would reintroduce the ill-posed regime this estimator exists to avoid.
    """


@dataclass(frozen=True)
class FitConfig:
    delta: float = 1e-3
    theta: float = 2.0
    sigma_eps: Union[float, str] = "auto"
    k1_override: Optional[int] = None
    k2_override: Optional[int] = None
    upsilon_check: Optional[float] = None

    def validate(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if isinstance(self.sigma_eps, str):
            if self.sigma_eps != "auto":
                raise ValueError("sigma_eps must be a positive number or 'auto'")
        elif self.sigma_eps <= 0:
            raise ValueError("sigma_eps must be a positive number or 'auto'")
        for name in ("k1_override", "k2_override"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError("%s must be non-negative" % name)
        if self.upsilon_check is not None and self.upsilon_check <= 0:
            raise ValueError("upsilon_check must be positive")


@dataclass(frozen=True)
class FittedModel:
    pi_hat: np.ndarray           # k1 x d1, whitening map
    n_hat_trunc: np.ndarray      # d2 x k1, denoised cross-moment matrix
    m_hat: np.ndarray            # d2 x d1, coefficient estimate
    k1: int
    k2: int
    lambdas: np.ndarray          # empirical feature eigenvalues, sigma_i^2 / n
    n_hat_sigmas: np.ndarray     # singular values of the raw cross-moment matrix
    threshold_used: float
    config: FitConfig
    sigma_eps_used: float
    n: int
    upsilon_exceeded: bool = field(default=False)


def step1_pca_x(
    x: np.ndarray,
    delta: float,
    k1_override: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Whitening stage.

    Computes the thin SVD of x, converts singular values to eigenvalue scale
    lambda_i = sigma_i^2 / n, picks k1 by the consecutive-gap rule (or the
    override), and returns (z_hat, pi_hat, lambdas) with z_hat = sqrt(n) times
    the top-k1 left singular vectors and pi_hat the map such that
    z_hat = x @ pi_hat.T.

    Raises:
        NoGapError: no gap >= delta and no override given.
        ValueError: fewer than 2 rows, zero input, or an override beyond the
            numerical rank.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("x must be a matrix with at least 2 rows")
    if not np.any(x):
        raise ValueError("x is identically zero")
    n = x.shape[0]
    dec = decompose(x)
    lambdas = dec.s ** 2 / n

    if k1_override is not None:
        k1 = int(k1_override)
        if not (1 <= k1 <= lambdas.size):
            raise ValueError("k1 override %d outside [1, %d]" % (k1, lambdas.size))
    else:
        picked = select_gap_rank(lambdas, delta)
        if picked is None:
            raise NoGapError(
                "no consecutive eigenvalue gap >= %g; lower delta or set k1 explicitly"
                % delta
            )
        k1 = picked
    if lambdas[k1 - 1] <= 0:
        raise ValueError("k1=%d exceeds the numerical rank of x" % k1)

    z_hat = np.sqrt(n) * dec.u[:, :k1]
    pi_hat = dec.v[:, :k1].T / np.sqrt(lambdas[:k1])[:, None]
    return z_hat, pi_hat, lambdas


def step2_pca_denoise(
    z_hat: np.ndarray,
    y: np.ndarray,
    theta: float,
    sigma_eps: float,
    k2_override: Optional[int] = None,
) -> Tuple[np.ndarray, int, np.ndarray, float]:
    """Denoising stage.

    Forms the cross-moment matrix (y.T @ z_hat) / n, keeps singular directions
    whose values reach theta * sigma_eps * sqrt(d2 / n), and returns
    (truncated matrix, k2, singular values, threshold).
    """
    z_hat = np.asarray(z_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if z_hat.shape[0] != y.shape[0]:
        raise ValueError("z_hat and y must have the same number of rows")
    n = z_hat.shape[0]
    d2 = y.shape[1]
    n_hat = y.T @ z_hat / n
    sigmas = decompose(n_hat).s
    threshold = theta * sigma_eps * np.sqrt(d2 / n)

    if k2_override is not None:
        k2 = int(k2_override)
        if not (0 <= k2 <= min(n_hat.shape)):
            raise ValueError("k2 override %d outside [0, %d]" % (k2, min(n_hat.shape)))
    else:
        k2 = select_threshold_rank(sigmas, threshold)
    return truncate_rank(n_hat, k2), k2, sigmas, float(threshold)


def estimate_noise_sigma(x: np.ndarray, y: np.ndarray) -> float:
    """Pilot estimate of the noise standard deviation. Heuristic.

    Regresses y on the top min(n, d1)//2 principal-component scores of x and
    returns the standard deviation of the residual entries. Constant y yields
    a machine-epsilon floor and a RuntimeWarning.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must have the same number of rows")
    if float(np.ptp(y)) == 0.0:
        warnings.warn("response is constant; returning epsilon floor", RuntimeWarning)
        return float(np.finfo(float).eps)
    n, d1 = x.shape
    k = max(1, min(n, d1) // 2)
    dec = decompose(x)
    scores = x @ dec.v[:, :k]
    coef, *_ = np.linalg.lstsq(scores, y, rcond=None)
    resid = y - scores @ coef
    sigma = float(np.std(resid))
    if sigma == 0.0:
        warnings.warn("pilot residuals are exactly zero; returning epsilon floor", RuntimeWarning)
        return float(np.finfo(float).eps)
    return sigma


def fit_adaptive_rrr(x: np.ndarray, y: np.ndarray, config: FitConfig) -> FittedModel:
    """Run both stages and compose the coefficient estimate.

    With config.sigma_eps == "auto" the noise scale is estimated by
    estimate_noise_sigma first. Raises NoGapError when stage 1 finds no
    admissible gap and no override was given.
    """
    config.validate()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("x and y must be matrices")
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            "row count mismatch: x has %d, y has %d" % (x.shape[0], y.shape[0])
        )

    if config.sigma_eps == "auto":
        sigma_eps = estimate_noise_sigma(x, y)
    else:
        sigma_eps = float(config.sigma_eps)

    z_hat, pi_hat, lambdas = step1_pca_x(x, config.delta, config.k1_override)
    n_hat_trunc, k2, sigmas, threshold = step2_pca_denoise(
        z_hat, y, config.theta, sigma_eps, config.k2_override
    )
    m_hat = n_hat_trunc @ pi_hat

    upsilon_exceeded = False
    if config.upsilon_check is not None:
        top = float(np.linalg.norm(m_hat, 2)) if np.any(m_hat) else 0.0
        if top > config.upsilon_check:
            upsilon_exceeded = True
            warnings.warn(
                "spectral norm %.3g exceeds the sanity bound %.3g"
                % (top, config.upsilon_check),
                RuntimeWarning,
            )

    return FittedModel(
        pi_hat=pi_hat,
        n_hat_trunc=n_hat_trunc,
        m_hat=m_hat,
        k1=pi_hat.shape[0],
        k2=k2,
        lambdas=lambdas,
        n_hat_sigmas=sigmas,
        threshold_used=threshold,
        config=config,
        sigma_eps_used=sigma_eps,
        n=x.shape[0],
        upsilon_exceeded=upsilon_exceeded,
    )


def predict(model: FittedModel, x_new: np.ndarray) -> np.ndarray:
    """Predictions x_new @ m_hat.T for new feature rows."""
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim != 2 or x_new.shape[1] != model.m_hat.shape[1]:
        raise ValueError(
            "x_new must have %d columns" % model.m_hat.shape[1]
        )
    return x_new @ model.m_hat.T


def save_model(model: FittedModel, dirpath: str) -> None:
    """Persist a fitted model as meta.json plus three CSV matrices."""
    os.makedirs(dirpath, exist_ok=True)
    cfg = model.config
    meta = {
        "k1": model.k1,
        "k2": model.k2,
        "delta": cfg.delta,
        "theta": cfg.theta,
        "sigma_eps": model.sigma_eps_used,
        "d1": model.m_hat.shape[1],
        "d2": model.m_hat.shape[0],
        "n": model.n,
        "library_version": __version__,
    }
    with open(os.path.join(dirpath, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    write_matrix_csv(os.path.join(dirpath, "m_hat.csv"), model.m_hat)
    write_matrix_csv(os.path.join(dirpath, "pi_hat.csv"), model.pi_hat)
    write_matrix_csv(os.path.join(dirpath, "n_hat.csv"), model.n_hat_trunc)


def load_model(dirpath: str) -> FittedModel:
    """Inverse of save_model. Diagnostics not stored in the directory
    (eigenvalues, raw singular values) come back empty."""
    with open(os.path.join(dirpath, "meta.json")) as f:
        meta = json.load(f)
    m_hat = read_matrix_csv(os.path.join(dirpath, "m_hat.csv"))
    pi_hat = read_matrix_csv(os.path.join(dirpath, "pi_hat.csv"))
    n_hat = read_matrix_csv(os.path.join(dirpath, "n_hat.csv"))
    cfg = FitConfig(
        delta=float(meta["delta"]),
        theta=float(meta["theta"]),
        sigma_eps=float(meta["sigma_eps"]),
    )
    return FittedModel(
        pi_hat=pi_hat,
        n_hat_trunc=n_hat,
        m_hat=m_hat,
        k1=int(meta["k1"]),
        k2=int(meta["k2"]),
        lambdas=np.array([]),
        n_hat_sigmas=np.array([]),
        threshold_used=float("nan"),
        config=cfg,
        sigma_eps_used=float(meta["sigma_eps"]),
        n=int(meta["n"]),
    )
