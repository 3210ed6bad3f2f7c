"""Exploratory factor analysis of the psychometric indicators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError

DISPLAY_THRESHOLD = 0.3


@dataclass(frozen=True)
class FactorSolution:
    """Rotated loadings (indicator x factor) and the correlation spectrum.

    ``eigenvalues`` are those of the analysed correlation matrix, sorted
    non-increasing, so they sum to its trace. ``assignment`` maps each
    indicator to the factor with the largest absolute loading.
    """

    n_factors: int
    loadings: np.ndarray
    eigenvalues: np.ndarray
    assignment: dict[str, int]
    indicators: tuple[str, ...]
    communalities: np.ndarray
    method: str

    @property
    def uniquenesses(self) -> np.ndarray:
        return 1.0 - self.communalities

    def reconstructed(self) -> np.ndarray:
        """L L' plus the diagonal uniquenesses."""
        return self.loadings @ self.loadings.T + np.diag(self.uniquenesses)


def correlation_matrix(data: Mapping[str, Sequence[float]] | np.ndarray,
                       names: Sequence[str] | None = None) -> np.ndarray:
    """Pearson correlations with pairwise deletion of missing (NaN) values."""
    if isinstance(data, Mapping):
        names = list(data)
        x = np.column_stack([np.asarray(data[n], dtype=float) for n in names])
    else:
        x = np.asarray(data, dtype=float)
        names = list(names) if names is not None else [f"x{i + 1}" for i in range(x.shape[1])]
    p = x.shape[1]
    r = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            ok = ~(np.isnan(x[:, i]) | np.isnan(x[:, j]))
            if ok.sum() < 2:
                raise DomainError(f"fewer than two complete rows for {names[i]} and {names[j]}")
            a = x[ok, i] - x[ok, i].mean()
            b = x[ok, j] - x[ok, j].mean()
            sa, sb = np.sqrt(a @ a), np.sqrt(b @ b)
            for name, s in ((names[i], sa), (names[j], sb)):
                if s == 0:
                    raise DomainError(f"indicator {name} has zero variance")
            r[i, j] = r[j, i] = np.clip((a @ b) / (sa * sb), -1.0, 1.0)
    if p == 1:
        col = x[~np.isnan(x[:, 0]), 0]
        if len(col) < 2 or np.ptp(col) == 0:
            raise DomainError(f"indicator {names[0]} has zero variance")
    return r


def varimax(loadings: np.ndarray, max_iter: int = 1000, tol: float = 1e-12) -> np.ndarray:
    """Orthogonal varimax rotation (Kaiser's criterion, SVD iteration)."""
    a = np.asarray(loadings, dtype=float)
    p, k = a.shape
    if k < 2:
        return a.copy()
    rotation = np.eye(k)
    objective = 0.0
    for _ in range(max_iter):
        b = a @ rotation
        u, s, vt = np.linalg.svd(a.T @ (b ** 3 - b @ np.diag(np.sum(b ** 2, axis=0)) / p))
        rotation = u @ vt
        new = s.sum()
        if new <= objective * (1 + tol):
            break
        objective = new
    return a @ rotation


def _sorted_eigh(m):
    w, v = np.linalg.eigh(m)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    # Deterministic eigenvector sign: first nonzero component positive.
    for j in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, j]) > 1e-12)
        if len(nz) and v[nz[0], j] < 0:
            v[:, j] = -v[:, j]
    return w, v


def extract_factors(corr: np.ndarray, retain: int | str = "kaiser", *,
                    indicators: Sequence[str] | None = None,
                    method: str = "principal_axis",
                    max_iter: int = 1000, tol: float = 1e-9) -> FactorSolution:
    """Extract and varimax-rotate factors from a correlation matrix.

    Parameters
    ----------
    retain : int or "kaiser"
        Number of factors, or the eigenvalue-above-one rule on ``corr``.
    method : {"principal_axis", "principal_components"}
        ``principal_axis`` iterates communalities on the diagonal, starting
        from squared multiple correlations; ``principal_components`` uses the
        unit diagonal (loadings = eigenvector * sqrt(eigenvalue)).
    """
    r = np.asarray(corr, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DomainError("correlation matrix must be square")
    if not np.allclose(r, r.T, atol=1e-10):
        raise DomainError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(r), 1.0, atol=1e-10):
        raise DomainError("correlation matrix must have a unit diagonal")
    p = r.shape[0]
    names = tuple(indicators) if indicators is not None else tuple(f"x{i + 1}" for i in range(p))

    eigenvalues, vectors = _sorted_eigh(r)
    if retain == "kaiser":
        k = int(np.sum(eigenvalues > 1.0 + 1e-12))
        if k == 0:
            raise DomainError("no eigenvalue exceeds 1; pass an explicit factor count")
    else:
        k = int(retain)
        if not 1 <= k <= p:
            raise DomainError(f"cannot retain {k} factors from {p} indicators")

    if method == "principal_components":
        loadings = vectors[:, :k] * np.sqrt(np.clip(eigenvalues[:k], 0, None))
    elif method == "principal_axis":
        try:
            h = 1.0 - 1.0 / np.diag(np.linalg.inv(r))
        except np.linalg.LinAlgError:
            h = np.max(np.abs(r - np.eye(p)), axis=1)
        h = np.clip(h, 0.0, 1.0)
        for _ in range(max_iter):
            reduced = r.copy()
            np.fill_diagonal(reduced, h)
            w, v = _sorted_eigh(reduced)
            loadings = v[:, :k] * np.sqrt(np.clip(w[:k], 0, None))
            new_h = np.clip(np.sum(loadings ** 2, axis=1), 0.0, 1.0)
            if np.max(np.abs(new_h - h)) < tol:
                h = new_h
                break
            h = new_h
        # Heywood guard: keep every communality at most one.
        scale = np.sqrt(np.minimum(1.0, 1.0 / np.maximum(np.sum(loadings ** 2, axis=1), 1e-300)))
        loadings = loadings * scale[:, None]
    else:
        raise DomainError(f"unknown extraction method {method!r}")

    rotated = varimax(loadings) if k >= 2 else loadings.copy()
    # Orient each factor so its dominant loading is positive, then order
    # factors by explained variance.
    for j in range(k):
        if rotated[np.argmax(np.abs(rotated[:, j])), j] < 0:
            rotated[:, j] = -rotated[:, j]
    order = np.argsort(-np.sum(rotated ** 2, axis=0), kind="stable")
    rotated = rotated[:, order]
    assignment = {name: int(np.argmax(np.abs(rotated[i]))) for i, name in enumerate(names)}
    communalities = np.sum(rotated ** 2, axis=1)
    return FactorSolution(k, rotated, eigenvalues, assignment, names, communalities, method)


def factor_table(solution: FactorSolution, kinds: Mapping[str, str] | None = None,
                 threshold: float = DISPLAY_THRESHOLD, factor_names: Sequence[str] | None = None) -> str:
    """Plain-text loading table; loadings below ``threshold`` in absolute
    value are left blank (display only)."""
    kinds = kinds or {}
    factor_names = list(factor_names or [f"F{j + 1}" for j in range(solution.n_factors)])
    width = max(12, *(len(n) + 2 for n in solution.indicators))
    head = f"{'ID':<4}{'Indicator':<{width}}{'Type':<12}" + "".join(f"{f:>12}" for f in factor_names)
    lines = [head, "-" * len(head)]
    for i, name in enumerate(solution.indicators):
        cells = []
        for j in range(solution.n_factors):
            value = solution.loadings[i, j]
            cells.append(f"{value:>12.6f}" if abs(value) >= threshold else " " * 12)
        lines.append(f"{i + 1:<4}{name:<{width}}{kinds.get(name, ''):<12}" + "".join(cells))
    lines.append("")
    lines.append("Eigenvalues: " + ", ".join(f"{e:.4f}" for e in solution.eigenvalues))
    return "\n".join(lines)
