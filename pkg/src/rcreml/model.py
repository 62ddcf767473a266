"""Block linear mixed model data structures and validation.

A dataset is a list of individuals, each contributing a block
(X_k, Z_k, y_k) of n_k observations with p fixed-effect and q
random-effect covariates. The random-coefficient condition requires the
column space of every Z_k to lie inside the column space of X_k; it is
checked once at load time and assumed downstream.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ._linalg import as_matrix, matrix_rank_svd, orthonormal_range, sym_pinv, sym_rank
from .errors import ContainmentViolation, DimensionMismatch, RankDeficientDesign

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class Individual:
    """One subject's block: X (n_k x p), Z (n_k x q), y (n_k,)."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    id: str = ""

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        z = as_matrix(self.z, "z")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        if not (x.shape[0] == z.shape[0] == y.shape[0]):
            raise DimensionMismatch(
                f"individual {self.id!r}: row counts differ "
                f"(x: {x.shape[0]}, z: {z.shape[0]}, y: {y.shape[0]})"
            )
        if x.shape[0] < 1:
            raise DimensionMismatch(f"individual {self.id!r}: empty block")
        if x.shape[1] < 1 or z.shape[1] < 1:
            raise DimensionMismatch(f"individual {self.id!r}: p and q must be >= 1")

    @property
    def n_k(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of individuals sharing p and q."""

    individuals: tuple

    def __post_init__(self):
        inds = tuple(self.individuals)
        object.__setattr__(self, "individuals", inds)
        if len(inds) == 0:
            raise DimensionMismatch("dataset must contain at least one individual")
        p, q = inds[0].x.shape[1], inds[0].z.shape[1]
        for ind in inds:
            if ind.x.shape[1] != p or ind.z.shape[1] != q:
                raise DimensionMismatch(
                    f"individual {ind.id!r}: covariate counts "
                    f"({ind.x.shape[1]}, {ind.z.shape[1]}) differ from ({p}, {q})"
                )

    @property
    def n_individuals(self) -> int:
        return len(self.individuals)

    @property
    def p(self) -> int:
        return self.individuals[0].x.shape[1]

    @property
    def q(self) -> int:
        return self.individuals[0].z.shape[1]

    @property
    def n_total(self) -> int:
        return sum(ind.n_k for ind in self.individuals)


@dataclass(frozen=True)
class IndividualCheck:
    id: str
    n_k: int
    p_k: int
    q_k: int
    containment_residual: float

    def to_dict(self):
        return {
            "id": self.id,
            "n_k": self.n_k,
            "p_k": self.p_k,
            "q_k": self.q_k,
            "containment_residual": self.containment_residual,
        }


@dataclass(frozen=True)
class ValidationReport:
    individuals: tuple
    pooled_rank: int
    p: int
    valid: bool
    failures: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "individuals": [c.to_dict() for c in self.individuals],
            "pooled_rank": self.pooled_rank,
            "p": self.p,
            "valid": self.valid,
            "failures": list(self.failures),
        }


def containment_residual(x: np.ndarray, z: np.ndarray) -> float:
    """Relative Frobenius residual of projecting Z onto the column space of X."""
    u = orthonormal_range(x)
    resid = z - u @ (u.T @ z)
    return float(np.linalg.norm(resid) / max(1.0, np.linalg.norm(z)))


def containment_factor(x, z, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve Z = X A for the p x q factor A, via the normal equations.

    Raises ContainmentViolation if the reconstruction X A misses Z by more
    than tol relative to ||Z||_F.
    """
    x = as_matrix(x, "x")
    z = as_matrix(z, "z")
    a = sym_pinv(x.T @ x) @ (x.T @ z)
    resid = np.linalg.norm(x @ a - z)
    if resid > tol * max(1.0, np.linalg.norm(z)):
        raise ContainmentViolation(
            f"Z is not contained in the column space of X (residual {resid:.3e})"
        )
    return a


def validate_dataset(dataset: Dataset, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check the random-coefficient and identifiability conditions.

    Per individual: ranks of the Gram matrices and the relative residual of
    Z_k outside the column space of X_k. Globally: the pooled X'X must have
    full rank p. The report is pure; no exception is raised for invalid data.
    """
    checks = []
    failures = []
    p = dataset.p
    pooled = np.zeros((p, p))
    for ind in dataset.individuals:
        xtx = ind.x.T @ ind.x
        ztz = ind.z.T @ ind.z
        pooled += xtx
        resid = containment_residual(ind.x, ind.z)
        checks.append(
            IndividualCheck(
                id=ind.id,
                n_k=ind.n_k,
                p_k=sym_rank(xtx),
                q_k=sym_rank(ztz),
                containment_residual=resid,
            )
        )
        if resid > tol:
            failures.append(
                f"ContainmentViolation: individual {ind.id!r} "
                f"(residual {resid:.3e} > {tol:.1e})"
            )
    pooled_rank = sym_rank(pooled)
    if pooled_rank < p:
        failures.append(
            f"RankDeficientDesign: pooled X'X has rank {pooled_rank} < p = {p}"
        )
    return ValidationReport(
        individuals=tuple(checks),
        pooled_rank=pooled_rank,
        p=p,
        valid=not failures,
        failures=tuple(failures),
    )


def require_valid(dataset: Dataset, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Validate and raise the first failure as a typed exception."""
    report = validate_dataset(dataset, tol)
    if report.valid:
        return report
    msg = report.failures[0]
    if msg.startswith("RankDeficientDesign"):
        raise RankDeficientDesign(msg)
    raise ContainmentViolation(msg)


# ---------------------------------------------------------------------------
# Dispersion parameterization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DispersionSpec:
    """Linear parameterization theta -> D(theta) = sum_i theta_i * B_i.

    The basis matrices B_i are constant and symmetric, so D(0) = 0 and the
    partial derivatives dD/dtheta_i are the basis matrices themselves.
    """

    kind: str
    dim: int
    basis: tuple

    @classmethod
    def full_symmetric(cls, q: int) -> "DispersionSpec":
        """Half-vectorization basis: r = q(q+1)/2 free entries."""
        mats = []
        for i in range(q):
            for j in range(i, q):
                b = np.zeros((q, q))
                b[i, j] = 1.0
                b[j, i] = 1.0
                mats.append(b)
        return cls(kind="full-symmetric", dim=q, basis=tuple(mats))

    @classmethod
    def diagonal(cls, q: int) -> "DispersionSpec":
        mats = []
        for i in range(q):
            b = np.zeros((q, q))
            b[i, i] = 1.0
            mats.append(b)
        return cls(kind="diagonal", dim=q, basis=tuple(mats))

    @classmethod
    def fixed_pattern(cls, basis) -> "DispersionSpec":
        mats = []
        for b in basis:
            b = as_matrix(b, "basis matrix")
            if b.shape[0] != b.shape[1]:
                raise DimensionMismatch("basis matrices must be square")
            if np.abs(b - b.T).max() > 1e-12 * (1 + np.abs(b).max()):
                raise DimensionMismatch("basis matrices must be symmetric")
            mats.append(0.5 * (b + b.T))
        if not mats:
            raise DimensionMismatch("fixed-pattern spec needs at least one basis matrix")
        q = mats[0].shape[0]
        if any(m.shape != (q, q) for m in mats):
            raise DimensionMismatch("basis matrices must share one dimension")
        return cls(kind="fixed-pattern", dim=q, basis=tuple(mats))

    @classmethod
    def from_kind(cls, kind: str, q: int) -> "DispersionSpec":
        if kind in ("full-symmetric", "full"):
            return cls.full_symmetric(q)
        if kind == "diagonal":
            return cls.diagonal(q)
        raise ValueError(f"unknown dispersion kind {kind!r}")

    @property
    def n_params(self) -> int:
        return len(self.basis)

    def d_from_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape[0] != self.n_params:
            raise DimensionMismatch(
                f"theta has {theta.shape[0]} components, spec expects {self.n_params}"
            )
        d = np.zeros((self.dim, self.dim))
        for t, b in zip(theta, self.basis):
            d += t * b
        return d

    def theta_from_d(self, d) -> np.ndarray:
        """Coordinates of (the best Frobenius approximation of) d in the basis."""
        d = as_matrix(d, "d")
        if self.kind == "full-symmetric":
            return np.array(
                [d[i, j] for i in range(self.dim) for j in range(i, self.dim)]
            )
        if self.kind == "diagonal":
            return np.diag(d).copy()
        gram = np.array([[np.sum(a * b) for b in self.basis] for a in self.basis])
        rhs = np.array([np.sum(b * d) for b in self.basis])
        return sym_pinv(gram) @ rhs


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------


def dataset_from_dict(doc: dict) -> Dataset:
    try:
        entries = doc["individuals"]
    except (KeyError, TypeError):
        raise DimensionMismatch("dataset document lacks an 'individuals' array")
    inds = [
        Individual(x=e["x"], z=e["z"], y=e["y"], id=str(e.get("id", i)))
        for i, e in enumerate(entries)
    ]
    return Dataset(individuals=tuple(inds))


def dataset_to_dict(dataset: Dataset) -> dict:
    return {
        "individuals": [
            {"id": ind.id, "x": ind.x.tolist(), "z": ind.z.tolist(), "y": ind.y.tolist()}
            for ind in dataset.individuals
        ]
    }


def load_dataset_json(path) -> Dataset:
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))


def save_dataset_json(dataset: Dataset, path, extra: dict | None = None) -> None:
    doc = dataset_to_dict(dataset)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_dataset_csv(path) -> Dataset:
    """Long-format CSV: columns id, y, x1..xp, z1..zq; rows grouped by id."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DimensionMismatch("empty CSV file")
        xcols = sorted(
            (c for c in reader.fieldnames if c.startswith("x") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
        zcols = sorted(
            (c for c in reader.fieldnames if c.startswith("z") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
        if "id" not in reader.fieldnames or "y" not in reader.fieldnames:
            raise DimensionMismatch("CSV must have 'id' and 'y' columns")
        if not xcols or not zcols:
            raise DimensionMismatch("CSV must have x1.. and z1.. columns")
        blocks: dict[str, dict] = {}
        order: list[str] = []
        for row in reader:
            gid = row["id"]
            if gid not in blocks:
                blocks[gid] = {"x": [], "z": [], "y": []}
                order.append(gid)
            blocks[gid]["x"].append([float(row[c]) for c in xcols])
            blocks[gid]["z"].append([float(row[c]) for c in zcols])
            blocks[gid]["y"].append(float(row["y"]))
    inds = [
        Individual(x=blocks[g]["x"], z=blocks[g]["z"], y=blocks[g]["y"], id=g)
        for g in order
    ]
    return Dataset(individuals=tuple(inds))


def load_dataset(path) -> Dataset:
    path = str(path)
    if path.endswith(".csv"):
        return load_dataset_csv(path)
    return load_dataset_json(path)
