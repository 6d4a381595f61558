"""
datasets.py

The Dataset record passed between the loaders, the simulators and the
regression app, the feature encoder that turns a raw claims table into a
design matrix, and the response-stratified partitioning used for the
learn/test and train/validation splits.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import MinMaxScaler, OneHotEncoder

from scoring.domain import TripletBatch
from scoring.exceptions import DomainError, ParseError

logger = logging.getLogger(__name__)

MAX_STRATA = 10


class FeatureKind(str, enum.Enum):
    """Kind of a design-matrix column."""

    INTERCEPT = "intercept"
    CONTINUOUS = "continuous"
    BINARY = "binary"
    ONEHOT = "onehot"


@dataclass(frozen=True)
class FeatureMeta:
    """
    Description of one column of the design matrix.

    Attributes:
        name (str): Column name; one-hot columns are named "<group>=<level>".
        kind (FeatureKind): Column kind.
        minimum, maximum (float | None): Raw range mapped onto [0, 1] (continuous only).
        group (str | None): Source column of a one-hot column.
        level (str | None): Category encoded by a one-hot column.
    """

    name: str
    kind: FeatureKind
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    group: Optional[str] = None
    level: Optional[str] = None


INTERCEPT = FeatureMeta("intercept", FeatureKind.INTERCEPT)


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Positive responses with their design matrix.

    Attributes:
        responses (np.ndarray): n strictly positive claim sizes.
        features (np.ndarray): (n, r0 + 1) design matrix, first column constant 1.
        feature_meta (tuple[FeatureMeta]): One entry per design-matrix column.
        truth (TripletBatch | None): True composite triplets (synthetic data only).
        response_name (str): Name of the response column in CSV files.
    """

    responses: np.ndarray
    features: np.ndarray
    feature_meta: tuple
    truth: Optional[TripletBatch] = None
    response_name: str = "y"
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        responses = np.asarray(self.responses, dtype=float).reshape(-1)
        features = np.asarray(self.features, dtype=float)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "feature_meta", tuple(self.feature_meta))
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(len(responses)))

        if not np.all(np.isfinite(responses)) or not np.all(responses > 0):
            bad = int(np.flatnonzero(~(np.isfinite(responses) & (responses > 0)))[0])
            raise ParseError("responses must be strictly positive", row=bad, column=self.response_name)
        if features.ndim != 2 or features.shape[0] != len(responses):
            raise DomainError(
                f"feature matrix of shape {features.shape} does not match {len(responses)} responses"
            )
        if features.shape[1] != len(self.feature_meta):
            raise DomainError("feature_meta must describe every feature column")
        if features.shape[1] == 0 or not np.all(features[:, 0] == 1.0):
            raise DomainError("the first feature column must be the constant 1")
        if self.truth is not None and len(self.truth) != len(responses):
            raise DomainError("truth must have one triplet per response")

    @property
    def n(self):
        return len(self.responses)

    @property
    def input_dim(self):
        """Number of features r0, not counting the constant column."""
        return self.features.shape[1] - 1

    @property
    def feature_names(self):
        return [meta.name for meta in self.feature_meta[1:]]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            responses=self.responses[indices],
            features=self.features[indices],
            feature_meta=self.feature_meta,
            truth=None if self.truth is None else self.truth.subset(indices),
            response_name=self.response_name,
            row_ids=self.row_ids[indices],
        )

    def with_truth(self, truth):
        return Dataset(
            responses=self.responses,
            features=self.features,
            feature_meta=self.feature_meta,
            truth=truth,
            response_name=self.response_name,
            row_ids=self.row_ids,
        )

    def as_frame(self):
        """Raw-feature table (constant column dropped) plus the response column."""
        frame = pd.DataFrame(self.features[:, 1:], columns=self.feature_names)
        frame[self.response_name] = self.responses
        return frame


class FeatureEncoder:
    """
    Encodes a raw claims table into a design matrix.

    Continuous columns are min-max scaled into [0, 1] (values outside the
    fitted range are clipped), binary columns are kept as 0/1 and categorical
    columns are one-hot encoded. The constant column comes first, the other
    columns follow the schema order.

    Attributes:
        schema (dict): column -> "response" | "continuous" | "binary" | "categorical".

    Methods:
        fit(frame): Learn ranges and categories from a table.
        transform(frame): Build (responses, features, feature_meta).
        to_dict() / from_dict(state): JSON-compatible state for model files.
    """

    def __init__(self, schema):
        self.schema = dict(schema)
        self.response = next(col for col, kind in self.schema.items() if kind == "response")
        self.continuous = [col for col, kind in self.schema.items() if kind == "continuous"]
        self.binary = [col for col, kind in self.schema.items() if kind == "binary"]
        self.categorical = [col for col, kind in self.schema.items() if kind == "categorical"]
        self._scaler = None
        self._onehot = None

    @property
    def fitted(self):
        return self._scaler is not None or self._onehot is not None or not (
            self.continuous or self.categorical
        )

    def fit(self, frame):
        if len(frame) == 0:
            raise DomainError("cannot fit the feature encoder on an empty table")
        if self.continuous:
            self._scaler = MinMaxScaler(clip=True).fit(frame[self.continuous].to_numpy(dtype=float))
        if self.categorical:
            self._onehot = OneHotEncoder(handle_unknown="error", sparse_output=False).fit(
                frame[self.categorical].astype(str).to_numpy()
            )
        return self

    def transform(self, frame):
        """
        Encode a table.

        Returns:
            tuple: (responses, features, feature_meta)

        Raises:
            ParseError: for a category not seen while fitting.
        """
        if not self.fitted:
            raise DomainError("feature encoder must be fitted before transform")
        n = len(frame)
        blocks = {}
        if self.continuous:
            scaled = self._scaler.transform(frame[self.continuous].to_numpy(dtype=float))
            for k, col in enumerate(self.continuous):
                blocks[col] = (
                    scaled[:, [k]],
                    [
                        FeatureMeta(
                            col,
                            FeatureKind.CONTINUOUS,
                            minimum=float(self._scaler.data_min_[k]),
                            maximum=float(self._scaler.data_max_[k]),
                        )
                    ],
                )
        for col in self.binary:
            blocks[col] = (frame[[col]].to_numpy(dtype=float), [FeatureMeta(col, FeatureKind.BINARY)])
        if self.categorical:
            raw = frame[self.categorical].astype(str).to_numpy()
            for k, col in enumerate(self.categorical):
                known = set(self._onehot.categories_[k])
                unseen = [i for i, value in enumerate(raw[:, k]) if value not in known]
                if unseen:
                    raise ParseError(
                        f"unknown category {raw[unseen[0], k]!r}", row=unseen[0], column=col
                    )
            encoded = self._onehot.transform(raw)
            start = 0
            for k, col in enumerate(self.categorical):
                levels = list(self._onehot.categories_[k])
                blocks[col] = (
                    encoded[:, start : start + len(levels)],
                    [
                        FeatureMeta(f"{col}={level}", FeatureKind.ONEHOT, group=col, level=str(level))
                        for level in levels
                    ],
                )
                start += len(levels)

        columns = [np.ones((n, 1))]
        meta = [INTERCEPT]
        for col, kind in self.schema.items():
            if kind == "response":
                continue
            values, col_meta = blocks[col]
            columns.append(values)
            meta.extend(col_meta)
        responses = frame[self.response].to_numpy(dtype=float)
        return responses, np.hstack(columns), tuple(meta)

    def to_dict(self):
        return {
            "schema": self.schema,
            "continuous_min": [] if self._scaler is None else self._scaler.data_min_.tolist(),
            "continuous_max": [] if self._scaler is None else self._scaler.data_max_.tolist(),
            "categories": []
            if self._onehot is None
            else [[str(level) for level in levels] for levels in self._onehot.categories_],
        }

    @classmethod
    def from_dict(cls, state):
        encoder = cls(state["schema"])
        if encoder.continuous:
            bounds = np.array([state["continuous_min"], state["continuous_max"]], dtype=float)
            encoder._scaler = MinMaxScaler(clip=True).fit(bounds)
        if encoder.categorical:
            categories = [list(levels) for levels in state["categories"]]
            width = max(len(levels) for levels in categories)
            rows = np.array(
                [[levels[min(i, len(levels) - 1)] for levels in categories] for i in range(width)],
                dtype=object,
            )
            encoder._onehot = OneHotEncoder(
                categories=categories, handle_unknown="error", sparse_output=False
            ).fit(rows)
        return encoder


def strata_count(n, n_test):
    """Number of response strata that both parts of a split can hold."""
    return max(1, min(MAX_STRATA, n_test, n - n_test, n // 2))


def stratified_indices(responses, test_fraction, seed):
    """
    Reproducible partition of 0..n-1 stratified by response deciles.

    Parameters:
        responses (array-like): Values to stratify on.
        test_fraction (float): Share of the second part, in (0, 1).
        seed (int): Random seed.

    Returns:
        tuple: (first, second) sorted index arrays; the second part has
            round(n * test_fraction) elements.

    Raises:
        DomainError: if either part would be empty.
    """
    responses = np.asarray(responses, dtype=float).reshape(-1)
    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"split fraction must lie in (0, 1), got {test_fraction!r}")
    n = len(responses)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test > n - 1:
        raise DomainError(f"cannot split {n} rows with fraction {test_fraction}")

    k = strata_count(n, n_test)
    strata = None
    if k > 1:
        ranks = pd.Series(responses).rank(method="first")
        strata = pd.qcut(ranks, k, labels=False).to_numpy()
    first, second = train_test_split(
        np.arange(n), test_size=n_test, random_state=seed, shuffle=True, stratify=strata
    )
    logger.debug("split %d rows into %d/%d over %d strata", n, len(first), len(second), k)
    return np.sort(first), np.sort(second)


def split_stratified(dataset: Dataset, test_fraction, seed):
    """Learn/test partition of a Dataset, stratified by claim size."""
    learn, test = stratified_indices(dataset.responses, test_fraction, seed)
    return dataset.subset(learn), dataset.subset(test)
