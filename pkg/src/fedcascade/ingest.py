"""Ratings matrix -> item features and clustered user preference vectors.

Pipeline: load a ``user_id,item_id,rating`` CSV, keep the most-rated items and
the most active users, embed both sides with a rank-d truncated SVD (block
power iteration), cluster the users with k-means and store the result in a
binary embedding bundle.

Bundle layout, all integers unsigned little-endian, floats little-endian f64::

    magic            5 bytes   b"CFEB1"
    d, n_items, n_users, J, flags          5 x u64
    min_center_distance                    f64   (inf when J == 1)
    item_features    n_items * d f64, row-major, unit rows
    centers          J * d f64, row-major, norms <= 1
    cluster_of       n_users u64
    singular_values  d f64
    item ids         n_items x (u32 byte length + UTF-8)
    user ids         n_users x (u32 byte length + UTF-8)

``flags`` bit 0 records that at least one k-means center had norm > 1 and
was rescaled onto the unit sphere.
"""
from __future__ import annotations

import csv
import math
import struct
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import GroundTruth, min_pairwise_distance

MAGIC = b"CFEB1"
FLAG_CENTERS_RESCALED = 1


class BundleFormatError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class RatingsTable:
    entries: list   # (user_id, item_id, rating)

    def __len__(self):
        return len(self.entries)

    def users(self) -> list[str]:
        return sorted({u for u, _, _ in self.entries})

    def items(self) -> list[str]:
        return sorted({i for _, i, _ in self.entries})

    @classmethod
    def from_rows(cls, rows) -> "RatingsTable":
        dedup = {}
        for u, i, r in rows:
            dedup.pop((u, i), None)         # re-insert so order follows the last occurrence
            dedup[(u, i)] = float(r)
        return cls([(u, i, r) for (u, i), r in dedup.items()])


def load_ratings(path) -> RatingsTable:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user_id", "item_id", "rating"]:
            raise ValueError(f"{path}:1: header must be user_id,item_id,rating")
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                rating = float(row[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: rating {row[2]!r} is not a number") from None
            if not math.isfinite(rating):
                raise ValueError(f"{path}:{lineno}: rating must be finite")
            rows.append((row[0].strip(), row[1].strip(), rating))
    return RatingsTable.from_rows(rows)


def _top(counts: Counter, n: int, what: str) -> set:
    if n > len(counts):
        warnings.warn(f"requested {n} {what} but only {len(counts)} are available; keeping all")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {k for k, _ in ranked[:n]}


def top_filter(table: RatingsTable, n_items: int, n_users: int) -> RatingsTable:
    """Most-rated items first, then the most active users among those items.
    Count ties keep the lexicographically smaller id."""
    if not table.entries:
        raise ValueError("ratings table is empty")
    items = _top(Counter(i for _, i, _ in table.entries), n_items, "items")
    kept = [e for e in table.entries if e[1] in items]
    users = _top(Counter(u for u, _, _ in kept), n_users, "users")
    return RatingsTable([e for e in kept if e[0] in users])


def ratings_matrix(table: RatingsTable):
    """Dense users x items matrix with missing entries as 0, ids sorted."""
    users, items = table.users(), table.items()
    ui = {u: k for k, u in enumerate(users)}
    ii = {i: k for k, i in enumerate(items)}
    m = np.zeros((len(users), len(items)))
    for u, i, r in table.entries:
        m[ui[u], ii[i]] = r
    return m, users, items


@dataclass
class TruncatedSVD:
    left: np.ndarray        # (n_rows, d)
    values: np.ndarray      # (d,) descending
    right: np.ndarray       # (n_cols, d)
    iterations: int
    angle: float


def _subspace_angle(q_old: np.ndarray, q_new: np.ndarray) -> float:
    """sin of the largest principal angle between two orthonormal bases."""
    resid = q_new - q_old @ (q_old.T @ q_new)
    return float(np.linalg.norm(resid, 2))


def truncated_svd(m: np.ndarray, d: int, tol: float = 1e-8, max_iter: int = 1000,
                  seed: int = 0) -> TruncatedSVD:
    """Rank-d SVD by orthogonal iteration on m^T m with a Rayleigh-Ritz finish."""
    n_rows, n_cols = m.shape
    if not 1 <= d <= min(n_rows, n_cols):
        raise ValueError(f"d must lie in [1, {min(n_rows, n_cols)}], got {d}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n_cols, d)))
    angle = math.inf
    for it in range(1, max_iter + 1):
        q_new, _ = np.linalg.qr(m.T @ (m @ q))
        angle = _subspace_angle(q, q_new)
        q = q_new
        if angle < tol:
            break
    else:
        raise ConvergenceError(
            f"orthogonal iteration did not converge in {max_iter} iterations "
            f"(subspace angle {angle:.3e} > {tol:.1e})")
    u_small, s, vt_small = np.linalg.svd(m @ q, full_matrices=False)
    right = q @ vt_small.T
    left = u_small
    # sign convention: largest-magnitude entry of each right vector is positive
    flip = np.sign(right[np.argmax(np.abs(right), axis=0), np.arange(d)])
    flip[flip == 0] = 1.0
    return TruncatedSVD(left * flip, s, right * flip, it, angle)


def svd_embed(table: RatingsTable, d: int, tol: float = 1e-8, max_iter: int = 1000):
    """Returns (user_vectors, item_vectors, singular_values, user_ids, item_ids).

    Item rows are unit-normalized; user rows share one scale factor so the
    largest lands on the unit sphere (or stay put if already inside).
    """
    m, users, items = ratings_matrix(table)
    svd = truncated_svd(m, d, tol, max_iter)
    root = np.sqrt(svd.values)
    user_vecs = svd.left * root
    item_vecs = svd.right * root
    norms = np.linalg.norm(item_vecs, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("an item has a zero embedding; reduce d or drop empty items")
    item_vecs = item_vecs / norms
    biggest = float(np.max(np.linalg.norm(user_vecs, axis=1)))
    if biggest > 1.0:
        user_vecs = user_vecs / biggest
    return user_vecs, item_vecs, svd.values, users, items


@dataclass
class KMeansResult:
    centers: np.ndarray
    assignment: np.ndarray
    inertia: float
    iterations: int
    rescaled: bool


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _plus_plus(points: np.ndarray, J: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = [points[rng.integers(n)]]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, J):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centers.append(points[idx])
        closest = np.minimum(closest, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(points: np.ndarray, J: int, rng: np.random.Generator, max_iter: int = 300,
           tol: float = 1e-8) -> KMeansResult:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if not 1 <= J <= n:
        raise ValueError(f"need 1 <= J <= number of points ({n}), got {J}")
    centers = _plus_plus(points, J, rng)
    prev_inertia = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        dist = _sq_dists(points, centers)
        assign = dist.argmin(axis=1)
        for j in range(J):
            if not np.any(assign == j):
                own = dist[np.arange(n), assign]
                far = int(own.argmax())
                assign[far] = j
        inertia = float(dist[np.arange(n), assign].sum())
        assert inertia <= prev_inertia + 1e-9 * max(1.0, prev_inertia), "k-means inertia increased"
        new_centers = np.array([points[assign == j].mean(axis=0) for j in range(J)])
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        post = float(((points - centers[assign]) ** 2).sum())
        assert post <= inertia + 1e-9 * max(1.0, inertia), "k-means inertia increased"
        prev_inertia = post
        if shift < tol:
            break
    assign = _sq_dists(points, centers).argmin(axis=1)
    inertia = float(((points - centers[assign]) ** 2).sum())
    norms = np.linalg.norm(centers, axis=1)
    rescaled = bool(np.any(norms > 1.0))
    if rescaled:
        centers = centers / np.maximum(norms, 1.0)[:, None]
    return KMeansResult(centers, assign, inertia, it, rescaled)


@dataclass
class EmbeddingBundle:
    d: int
    item_features: np.ndarray
    centers: np.ndarray
    cluster_of: np.ndarray
    item_ids: list
    user_ids: list
    singular_values: np.ndarray
    centers_rescaled: bool = False
    min_center_distance: float = math.inf

    @property
    def J(self) -> int:
        return len(self.centers)

    @property
    def user_thetas(self) -> np.ndarray:
        return self.centers[self.cluster_of]

    def validate(self) -> None:
        if len(self.item_features) == 0:
            raise BundleFormatError("bundle has no items")
        if self.item_features.shape[1] != self.d or self.centers.shape[1] != self.d:
            raise BundleFormatError("feature dimension mismatch")
        if len(self.item_ids) != len(self.item_features) or len(self.user_ids) != len(self.cluster_of):
            raise BundleFormatError("id list lengths do not match the arrays")
        if np.any(np.abs(np.linalg.norm(self.item_features, axis=1) - 1.0) > 1e-12):
            raise BundleFormatError("item features must be unit vectors")
        if np.any(np.linalg.norm(self.centers, axis=1) > 1.0 + 1e-12):
            raise BundleFormatError("centers must lie in the unit ball")
        if set(np.unique(self.cluster_of).tolist()) != set(range(self.J)):
            raise BundleFormatError("every cluster must have at least one user")

    def same_as(self, other: "EmbeddingBundle") -> bool:
        return (self.d == other.d and self.item_ids == other.item_ids
                and self.user_ids == other.user_ids
                and self.centers_rescaled == other.centers_rescaled
                and (self.min_center_distance == other.min_center_distance)
                and all(np.array_equal(a, b) for a, b in (
                    (self.item_features, other.item_features), (self.centers, other.centers),
                    (self.cluster_of, other.cluster_of),
                    (self.singular_values, other.singular_values))))


def _pack_strings(ids) -> bytes:
    out = bytearray()
    for s in ids:
        raw = str(s).encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    return bytes(out)


def encode_bundle(b: EmbeddingBundle) -> bytes:
    b.validate()
    flags = FLAG_CENTERS_RESCALED if b.centers_rescaled else 0
    head = MAGIC + struct.pack("<5Qd", b.d, len(b.item_features), len(b.cluster_of), b.J,
                               flags, b.min_center_distance)
    body = b"".join([
        np.ascontiguousarray(b.item_features, dtype="<f8").tobytes(),
        np.ascontiguousarray(b.centers, dtype="<f8").tobytes(),
        np.asarray(b.cluster_of, dtype="<u8").tobytes(),
        np.asarray(b.singular_values, dtype="<f8").tobytes(),
        _pack_strings(b.item_ids),
        _pack_strings(b.user_ids),
    ])
    return head + body


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise BundleFormatError("corrupt bundle: unexpected end of file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)

    def strings(self, count: int) -> list:
        out = []
        for _ in range(count):
            (n,) = struct.unpack("<I", self.take(4))
            try:
                out.append(self.take(n).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise BundleFormatError("corrupt bundle: bad UTF-8 id") from exc
        return out


def decode_bundle(data: bytes) -> EmbeddingBundle:
    r = _Reader(data)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise BundleFormatError(
            f"not an embedding bundle of version 1: magic {magic!r}, expected {MAGIC!r}")
    d, n_items, n_users, J, flags = struct.unpack("<5Q", r.take(40))
    (min_dist,) = struct.unpack("<d", r.take(8))
    items = r.floats(n_items * d).reshape(n_items, d)
    centers = r.floats(J * d).reshape(J, d)
    cluster_of = np.frombuffer(r.take(8 * n_users), dtype="<u8").astype(np.int64)
    svals = r.floats(d)
    item_ids = r.strings(n_items)
    user_ids = r.strings(n_users)
    if r.pos != len(data):
        raise BundleFormatError("corrupt bundle: trailing bytes")
    b = EmbeddingBundle(int(d), items, centers, cluster_of, item_ids, user_ids, svals,
                        bool(flags & FLAG_CENTERS_RESCALED), float(min_dist))
    b.validate()
    return b


def write_bundle(b: EmbeddingBundle, path) -> None:
    data = encode_bundle(b)
    with open(path, "wb") as fh:
        fh.write(data)


def read_bundle(path) -> EmbeddingBundle:
    with open(path, "rb") as fh:
        return decode_bundle(fh.read())


def build_bundle(table: RatingsTable, d: int, J: int, n_items: int, n_users: int, seed: int,
                 sample_users: Optional[int] = None) -> EmbeddingBundle:
    """Full pipeline from a ratings table to an embedding bundle.

    ``sample_users`` draws that many users (seeded) after embedding and before
    clustering; None keeps every user.
    """
    filtered = top_filter(table, n_items, n_users)
    user_vecs, item_vecs, svals, user_ids, item_ids = svd_embed(filtered, d)
    rng = np.random.default_rng(seed)
    if sample_users is not None:
        if not 1 <= sample_users <= len(user_ids):
            raise ValueError(f"sample_users must lie in [1, {len(user_ids)}]")
        pick = np.sort(rng.choice(len(user_ids), size=sample_users, replace=False))
        user_vecs = user_vecs[pick]
        user_ids = [user_ids[k] for k in pick]
    km = kmeans(user_vecs, J, rng)
    return EmbeddingBundle(d, item_vecs, km.centers, km.assignment.astype(np.int64), item_ids,
                           user_ids, svals, km.rescaled, min_pairwise_distance(km.centers))


def truth_from_bundle(b: EmbeddingBundle) -> GroundTruth:
    return GroundTruth(np.asarray(b.cluster_of, dtype=np.int64), np.asarray(b.centers, dtype=float),
                       b.min_center_distance, item_pool=np.asarray(b.item_features, dtype=float))
