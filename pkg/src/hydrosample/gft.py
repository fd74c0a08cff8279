"""
Data-driven graph Fourier transform.

The operator is the inverse of an orthonormal basis taken from a column-pivoted
QR of the data matrix X: signals in the column space of X occupy only the first
r rows of the transformed domain, so r well-chosen nodes recover them exactly.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Sequence, Union

import numpy as np
import scipy.linalg as la

from hydrosample.exception import GftError, SamplingError
from hydrosample.transport import DataMatrix

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10
EXHAUSTIVE_LIMIT = 1_000_000
ILL_CONDITIONED = 1e12

Strategy = Literal["greedy", "exhaustive"]


@dataclass(frozen=True, eq=False)
class GftOperator:
    """
    Args:
        f_inv (np.ndarray): N x N inverse GFT (the transpose of the completed
            orthonormal basis).
        q (np.ndarray): N x r orthonormal basis of the pivot columns; this is
            F restricted to the band support.
        r_factor (np.ndarray): r x r upper-triangular factor, X[:, M] = q @ r_factor.
        band_support (tuple[int, ...]): Rows of the transformed signal that may
            be nonzero; always 0..r-1.
        pivot_columns (tuple[int, ...]): Time indices of the maximally
            independent columns of X, in pivot order.
        rank_tol (float): Relative pivot magnitude used to detect the rank.
    """

    f_inv: np.ndarray
    q: np.ndarray
    r_factor: np.ndarray
    band_support: tuple[int, ...]
    pivot_columns: tuple[int, ...]
    rank_tol: float = DEFAULT_RANK_TOL

    @property
    def rank(self) -> int:
        return len(self.band_support)

    @property
    def n_nodes(self) -> int:
        return int(self.f_inv.shape[0])

    def transform(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.f_inv @ x)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rank": self.rank,
            "rank_tol": self.rank_tol,
            "band_support": sorted(self.band_support),
            "pivot_columns": list(self.pivot_columns),
            "f_inv": _matrix_to_dict(self.f_inv),
            "q": _matrix_to_dict(self.q),
            "r_factor": _matrix_to_dict(self.r_factor),
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "GftOperator":
        try:
            return cls(
                f_inv=_matrix_from_dict(raw["f_inv"]),
                q=_matrix_from_dict(raw["q"]),
                r_factor=_matrix_from_dict(raw["r_factor"]),
                band_support=tuple(int(i) for i in raw["band_support"]),
                pivot_columns=tuple(int(i) for i in raw["pivot_columns"]),
                rank_tol=float(raw["rank_tol"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise GftError(
                f"Malformed operator file: {e}",
                title="Hydrosample couldn't load your GFT operator.",
            ) from e


@dataclass(frozen=True)
class SamplingSet:
    """
    Args:
        nodes (tuple[int, ...]): Sampling nodes in order of importance.
        scores (tuple[float, ...]): Smallest singular value of the sampled
            basis right after each node was added; non-increasing.
    """

    nodes: tuple[int, ...]
    scores: tuple[float, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"nodes": list(self.nodes), "scores": list(self.scores)}

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SamplingSet":
        return cls(
            nodes=tuple(int(i) for i in raw["nodes"]),
            scores=tuple(float(s) for s in raw["scores"]),
        )


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    values: np.ndarray
    condition_number: float
    ill_conditioned: bool


def build_gft_operator(
    x: Union[DataMatrix, np.ndarray], rank_tol: float = DEFAULT_RANK_TOL
) -> GftOperator:
    """
    Builds the GFT operator of a data matrix by column-pivoted QR.

    Pivoting stops at the first pivot whose diagonal magnitude drops below
    rank_tol times the first one; the orthonormal factor of those r pivot
    columns is completed to an N x N basis whose inverse is the operator.

    Raises: GftError for empty, non-finite or all-zero matrices, or a
        rank_tol outside (0, 1).
    """
    values = np.asarray(x.values if isinstance(x, DataMatrix) else x, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise GftError(f"Cannot build a GFT from a matrix of shape {values.shape}.")
    if not np.all(np.isfinite(values)):
        raise GftError("The data matrix contains non-finite entries.")
    if not 0 < rank_tol < 1:
        raise GftError(f"rank_tol must lie in (0, 1), got {rank_tol}.")
    n = values.shape[0]

    q_full, r_full, perm = la.qr(values, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_full))
    if diag.size == 0 or diag[0] == 0.0:
        raise GftError(
            "The data matrix is all zeros (rank 0); nothing was contaminated.",
            title="Hydrosample couldn't build a GFT operator.",
        )
    below = np.flatnonzero(diag < rank_tol * diag[0])
    rank = int(below[0]) if below.size else int(diag.size)

    q = np.array(q_full[:, :rank])
    r_factor = np.array(np.triu(r_full[:rank, :rank]))
    basis = _complete_basis(q, n)
    logger.debug("GFT operator: N=%d, K=%d, rank=%d", n, values.shape[1], rank)
    return GftOperator(
        f_inv=basis.T,
        q=q,
        r_factor=r_factor,
        band_support=tuple(range(rank)),
        pivot_columns=tuple(int(i) for i in perm[:rank]),
        rank_tol=rank_tol,
    )


def _complete_basis(q: np.ndarray, n: int) -> np.ndarray:
    r = q.shape[1]
    if r == n:
        return q
    complement = la.null_space(q.T)
    return np.hstack([q, complement[:, : n - r]])


def _sigma_min(rows: np.ndarray) -> float:
    return float(np.linalg.svd(rows, compute_uv=False).min())


def select_sampling_set(op: GftOperator, strategy: Strategy = "greedy") -> SamplingSet:
    """
    Chooses r nodes that maximize the smallest singular value of the sampled
    basis F[S, R].

    greedy: adds, r times, the node that maximizes sigma_min of the grown
        submatrix (ties go to the lowest index).
    exhaustive: scans every size-r subset in lexicographic order and keeps the
        first maximizer; only allowed when C(N, r) <= 1e6. The optimal nodes
        are reported in greedy order so the scores stay non-increasing.

    Raises: SamplingError if the exhaustive search is too large, or the chosen
        set does not have full rank.
    """
    basis = op.q
    n, r = basis.shape
    if strategy == "exhaustive":
        n_subsets = math.comb(n, r)
        if n_subsets > EXHAUSTIVE_LIMIT:
            raise SamplingError(
                f"Exhaustive search over C({n}, {r}) = {n_subsets} subsets is not "
                f"allowed (limit {EXHAUSTIVE_LIMIT}); use the greedy strategy.",
                title="Sampling search too large.",
            )
        best: tuple[int, ...] = tuple(range(r))
        best_score = -1.0
        for subset in itertools.combinations(range(n), r):
            score = _sigma_min(basis[list(subset), :])
            if score > best_score:
                best, best_score = subset, score
        nodes, scores = _greedy_order(basis, candidates=best, steps=r)
    elif strategy == "greedy":
        nodes, scores = _greedy_order(basis, candidates=tuple(range(n)), steps=r)
    else:
        raise SamplingError(f"Unknown sampling strategy: {strategy}")

    if np.linalg.matrix_rank(basis[list(nodes), :]) != r:
        raise SamplingError(
            f"The selected {len(nodes)} nodes do not give a full-rank F_SR (rank {r}).",
            title="No valid sampling set.",
        )
    return SamplingSet(nodes=tuple(nodes), scores=tuple(scores))


def _greedy_order(
    basis: np.ndarray, candidates: Sequence[int], steps: int
) -> tuple[list[int], list[float]]:
    chosen: list[int] = []
    scores: list[float] = []
    remaining = sorted(candidates)
    for _ in range(steps):
        best_node, best_score = remaining[0], -1.0
        for node in remaining:
            score = _sigma_min(basis[chosen + [node], :])
            if score > best_score:
                best_node, best_score = node, score
        chosen.append(best_node)
        scores.append(best_score)
        remaining.remove(best_node)
    return chosen, scores


def recover(op: GftOperator, s: SamplingSet, samples: np.ndarray) -> RecoveryResult:
    """
    Recovers all N node signals from the rows sampled at s.nodes:

        X_hat = F_VR (F_SR^T F_SR)^-1 F_SR^T X_S

    The result is exact when the sampled signal lies in the operator's band.

    Raises: SamplingError if the samples do not have one row per sampled node.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] != len(s.nodes):
        raise SamplingError(
            f"Expected {len(s.nodes)} sample rows (one per sampled node), got "
            f"{samples.shape[0]}."
        )
    f_sr = op.q[list(s.nodes), :]
    gram = f_sr.T @ f_sr
    cond = float(np.linalg.cond(gram))
    ill = not math.isfinite(cond) or cond > ILL_CONDITIONED
    if ill:
        logger.warning(
            "F_SR^T F_SR is ill-conditioned (condition number %.3g); the recovery "
            "may be inaccurate",
            cond,
        )
    try:
        coeffs = np.linalg.solve(gram, f_sr.T @ samples)
    except np.linalg.LinAlgError:
        coeffs = np.linalg.lstsq(f_sr, samples, rcond=None)[0]
    return RecoveryResult(
        values=np.asarray(op.q @ coeffs), condition_number=cond, ill_conditioned=ill
    )


def save_operator(path: Path, op: GftOperator, s: SamplingSet | None = None) -> None:
    payload: dict[str, Any] = {"operator": op.to_dict()}
    if s is not None:
        payload["sampling_set"] = s.to_dict()
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_operator(path: Path) -> tuple[GftOperator, SamplingSet | None]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise GftError(
            f"Error reading operator file at {path}. {e}",
            title="Hydrosample couldn't load your GFT operator.",
        ) from e
    op = GftOperator.from_dict(raw["operator"])
    s = SamplingSet.from_dict(raw["sampling_set"]) if "sampling_set" in raw else None
    return op, s


def _matrix_to_dict(m: np.ndarray) -> dict[str, Any]:
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "data": m.ravel().tolist(),
    }


def _matrix_from_dict(raw: dict[str, Any]) -> np.ndarray:
    shape = (int(raw["rows"]), int(raw["cols"]))
    return np.asarray(raw["data"], dtype=float).reshape(shape)
