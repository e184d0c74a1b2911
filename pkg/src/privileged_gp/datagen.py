"""Seeded synthetic datasets with privileged features, plus CSV ingestion.

Random streams
--------------
Every dataset is drawn from a Philox counter-based generator. The user seed
is expanded with ``numpy.random.SeedSequence`` and split into fixed named
substreams (coefficients, training inputs, test inputs, label noise, latent
GP draws, index sets), so adding draws to one component never shifts the
others. Gaussian variates are produced by inverse-CDF transformation of
53-bit uniforms rather than by a rejection sampler.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from . import kernels
from .errors import ColumnOverlap, ParseError, ROutOfRange, SingleClass, UnknownGenerator
from .kernels import KernelSpec
from .numerics import psd_factorize

GENERATORS = (
    "clean_soft_label",
    "clean_feature",
    "relevant_feature",
    "independent_feature",
    "latent_gp",
    "noise_variance",
)

D_INPUT = 50
D_RELEVANT = 3
D_GRID = 2
GP_AMPLITUDE = 10.0
N_TRAIN = 200
N_TEST = 1000

_STREAMS = ("coef", "train_inputs", "test_inputs", "noise", "gp", "subsets", "privileged")


@dataclass
class PrivilegedDataset:
    train_inputs: np.ndarray
    train_privileged: np.ndarray
    train_labels: np.ndarray
    test_inputs: np.ndarray
    test_labels: np.ndarray
    test_privileged: np.ndarray
    generator_name: str
    seed: int | None
    meta: dict = field(default_factory=dict)

    @property
    def n_train(self) -> int:
        return self.train_labels.shape[0]

    @property
    def n_test(self) -> int:
        return self.test_labels.shape[0]

    def validate(self) -> None:
        for lab in (self.train_labels, self.test_labels):
            if not np.all((lab == 1.0) | (lab == -1.0)):
                raise ValueError("labels must be +1/-1")
        if not (self.train_inputs.shape[0] == self.train_privileged.shape[0] == self.n_train):
            raise ValueError("training split has inconsistent row counts")
        if not (self.test_inputs.shape[0] == self.test_privileged.shape[0] == self.n_test):
            raise ValueError("test split has inconsistent row counts")


class _Streams:
    def __init__(self, seed: int):
        children = np.random.SeedSequence(int(seed)).spawn(len(_STREAMS))
        self._gens = {
            name: np.random.Generator(np.random.Philox(child))
            for name, child in zip(_STREAMS, children)
        }

    def uniform(self, name: str, size) -> np.ndarray:
        """Open-interval uniforms (0, 1) with 53-bit resolution."""
        k = self._gens[name].integers(0, 2**53, size=size, dtype=np.int64)
        return (k.astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, name: str, size) -> np.ndarray:
        return ndtri(self.uniform(name, size))


def _sign(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0.0, 1.0, -1.0)


def _gp_draw(X: np.ndarray, z: np.ndarray, amplitude: float = GP_AMPLITUDE) -> np.ndarray:
    K = kernels.gram(KernelSpec.rbf(1.0, amplitude), X)
    fac = psd_factorize(K, max_jitter=1e-4 * amplitude)
    return fac.lower @ z


def _split(arr: np.ndarray, n_train: int):
    return arr[:n_train], arr[n_train:]


def generate(name: str, seed: int, n_train: int = N_TRAIN, n_test: int = N_TEST) -> PrivilegedDataset:
    """Draw one synthetic dataset (train and test from the same process)."""
    if name not in GENERATORS:
        raise UnknownGenerator(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")
    st = _Streams(seed)
    n = n_train + n_test

    def inputs_gauss(d):
        return np.vstack([st.normal("train_inputs", (n_train, d)), st.normal("test_inputs", (n_test, d))])

    def inputs_grid(d):
        return 10.0 * np.vstack([st.uniform("train_inputs", (n_train, d)), st.uniform("test_inputs", (n_test, d))])

    if name == "clean_soft_label":
        alpha = st.normal("coef", D_INPUT)
        x = inputs_gauss(D_INPUT)
        x_priv = (x @ alpha)[:, None]
        eps = st.normal("noise", n)
        y = _sign(x_priv[:, 0] + eps)
    elif name == "clean_feature":
        alpha = st.normal("coef", D_INPUT)
        x_priv = inputs_gauss(D_INPUT)
        x = x_priv + st.normal("noise", (n, D_INPUT))
        y = _sign(x_priv @ alpha)
    elif name == "relevant_feature":
        alpha_star = st.normal("coef", D_RELEVANT)
        x = inputs_gauss(D_INPUT)
        x_priv = x[:, :D_RELEVANT].copy()
        y = _sign(x_priv @ alpha_star)
    elif name == "independent_feature":
        alpha_star = st.normal("coef", D_RELEVANT)
        x = inputs_gauss(D_INPUT)
        keys = st.uniform("subsets", (n, D_INPUT))
        subsets = np.sort(np.argsort(keys, axis=1, kind="stable")[:, :D_RELEVANT], axis=1)
        x_priv = np.take_along_axis(x, subsets, axis=1)
        y = _sign(x_priv @ alpha_star)
    elif name == "latent_gp":
        x = inputs_grid(D_GRID)
        x_priv = _gp_draw(x, st.normal("gp", n))[:, None]
        eps = st.normal("noise", n)
        y = _sign(x_priv[:, 0] + eps)
    else:  # noise_variance
        x = inputs_grid(D_GRID)
        x_priv = 10.0 * np.vstack(
            [st.uniform("privileged", (n_train, D_GRID)), st.uniform("privileged", (n_test, D_GRID))]
        )
        z = st.normal("gp", 2 * n)
        f = _gp_draw(x, z[:n])
        g = _gp_draw(x_priv, z[n:])
        eps = np.exp(0.5 * g) * st.normal("noise", n)
        y = _sign(f + eps)

    x_tr, x_te = _split(x, n_train)
    p_tr, p_te = _split(x_priv, n_train)
    y_tr, y_te = _split(y, n_train)
    ds = PrivilegedDataset(x_tr, p_tr, y_tr, x_te, y_te, p_te, name, int(seed))
    ds.meta = {"generator": name, "seed": int(seed), "d_input": x.shape[1], "d_privileged": x_priv.shape[1]}
    return ds


def generate_rho_sweep(r: float, n_train: int = N_TRAIN, n_test: int = N_TEST, seed: int = 0) -> PrivilegedDataset:
    """Privileged feature ``(1 - r) f + r g``: latent GP value blended with noise."""
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ROutOfRange(f"r={r!r} outside [0, 1]")
    st = _Streams(seed)
    n = n_train + n_test
    x = 10.0 * np.vstack([st.uniform("train_inputs", (n_train, D_GRID)), st.uniform("test_inputs", (n_test, D_GRID))])
    f = _gp_draw(x, st.normal("gp", n))
    g = math.sqrt(10.0) * st.normal("privileged", n)
    eps = st.normal("noise", n)
    x_priv = ((1.0 - r) * f + r * g)[:, None]
    y = _sign(f + eps)
    x_tr, x_te = _split(x, n_train)
    p_tr, p_te = _split(x_priv, n_train)
    y_tr, y_te = _split(y, n_train)
    ds = PrivilegedDataset(x_tr, p_tr, y_tr, x_te, y_te, p_te, "rho_sweep", int(seed))
    ds.meta = {"generator": "rho_sweep", "seed": int(seed), "r": r, "d_input": D_GRID, "d_privileged": 1}
    return ds


def _label_mapping(raw: list[str]) -> dict:
    values = sorted(set(raw))
    if len(values) != 2:
        raise SingleClass(f"label column must hold exactly two classes, found {len(values)}: {values[:5]}")
    try:
        nums = sorted(values, key=float)
        as_num = [float(v) for v in nums]
    except ValueError:
        return {values[0]: -1.0, values[1]: 1.0}
    if set(as_num) == {-1.0, 1.0}:
        return {v: float(v) for v in nums}
    return {nums[0]: -1.0, nums[1]: 1.0}


def _resolve(header: list[str], cols) -> list[int]:
    out = []
    for c in cols:
        if isinstance(c, int) or (isinstance(c, str) and c.isdigit() and c not in header):
            idx = int(c)
            if not 0 <= idx < len(header):
                raise ParseError(f"column index {idx} out of range (file has {len(header)} columns)")
            out.append(idx)
        else:
            if c not in header:
                raise ParseError(f"unknown column {c!r}; header is {header}")
            out.append(header.index(c))
    return out


def load_csv(
    path,
    input_columns,
    privileged_columns,
    label_column,
    train_fraction: float | None = 0.5,
    seed: int = 0,
    n_train: int | None = None,
    n_test: int | None = None,
    balance: bool = False,
) -> PrivilegedDataset:
    """Read a delimited file into a seeded train/test split.

    Either ``train_fraction`` or explicit ``n_train``/``n_test`` counts fix
    the split. ``balance=True`` subsamples each split to equal class counts.
    The label-to-(+1/-1) mapping is stored in ``meta["label_mapping"]``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    in_idx = _resolve(header, list(input_columns))
    pr_idx = _resolve(header, list(privileged_columns))
    (lab_idx,) = _resolve(header, [label_column])
    used = in_idx + pr_idx + [lab_idx]
    if len(set(used)) != len(used):
        raise ColumnOverlap("input, privileged and label columns must be disjoint")

    feats = in_idx + pr_idx
    data = np.empty((len(rows) - 1, len(feats)))
    raw_labels = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        for j, c in enumerate(feats):
            try:
                data[r - 2, j] = float(row[c])
            except ValueError:
                raise ParseError(f"{path}: row {r}, column {header[c]!r}: cannot parse {row[c]!r} as a number") from None
        raw_labels.append(row[lab_idx].strip())
    if not raw_labels:
        raise ParseError(f"{path}: no data rows")
    mapping = _label_mapping(raw_labels)
    y = np.array([mapping[v] for v in raw_labels])

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    order = rng.permutation(y.shape[0])
    total = y.shape[0]
    if n_train is None:
        if train_fraction is None or not 0.0 < train_fraction <= 1.0:
            raise ValueError("train_fraction must be in (0, 1]")
        n_train = int(round(train_fraction * total))
        n_test = total - n_train
    elif n_test is None:
        n_test = total - n_train
    if n_train + n_test > total:
        raise ValueError(f"requested {n_train}+{n_test} rows, file has {total}")

    if balance:
        tr = _balanced_take(order, y, n_train)
        te = _balanced_take(order[~np.isin(order, tr)], y, n_test)
    else:
        tr, te = order[:n_train], order[n_train : n_train + n_test]

    x_all = data[:, : len(in_idx)]
    p_all = data[:, len(in_idx) :]
    ds = PrivilegedDataset(
        x_all[tr], p_all[tr], y[tr], x_all[te], y[te], p_all[te], f"csv:{path.name}", int(seed)
    )
    ds.meta = {
        "generator": f"csv:{path.name}",
        "seed": int(seed),
        "label_mapping": mapping,
        "input_columns": [header[i] for i in in_idx],
        "privileged_columns": [header[i] for i in pr_idx],
        "d_input": len(in_idx),
        "d_privileged": len(pr_idx),
    }
    return ds


def _balanced_take(order: np.ndarray, y: np.ndarray, count: int) -> np.ndarray:
    n_neg = count // 2
    pos = order[y[order] > 0][: count - n_neg]
    neg = order[y[order] < 0][:n_neg]
    if pos.shape[0] + neg.shape[0] < count:
        raise ValueError(f"not enough rows of each class to draw a balanced split of {count}")
    return order[np.isin(order, np.concatenate([pos, neg]))]


def dump(ds: PrivilegedDataset, out_dir) -> list[Path]:
    """Write ``train.csv``, ``test.csv`` and ``meta.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for split, x, p, y in (
        ("train", ds.train_inputs, ds.train_privileged, ds.train_labels),
        ("test", ds.test_inputs, ds.test_privileged, ds.test_labels),
    ):
        path = out / f"{split}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                [f"input_{j}" for j in range(x.shape[1])] + [f"priv_{j}" for j in range(p.shape[1])] + ["label"]
            )
            for xi, pi, yi in zip(x, p, y):
                w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in pi] + [int(yi)])
        written.append(path)
    meta = dict(ds.meta)
    meta.update({"n_train": ds.n_train, "n_test": ds.n_test})
    mpath = out / "meta.json"
    mpath.write_text(json.dumps(meta, indent=2, sort_keys=True))
    written.append(mpath)
    return written
