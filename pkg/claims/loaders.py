"""
loaders.py

Reading and writing of claims tables, truth files and schema sidecars.

Tables are comma separated UTF-8 with a header row. Schemas are KEY=VALUE
files mapping every used column to response, continuous, binary or
categorical.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from scoring.domain import TripletBatch
from scoring.exceptions import DomainError, ParseError

from .datasets import Dataset, FeatureEncoder, stratified_indices

logger = logging.getLogger(__name__)

COLUMN_KINDS = ("response", "continuous", "binary", "categorical")
TRUTH_COLUMNS = ["e_minus", "v", "e_plus"]


def sidecar(path, suffix):
    """Path next to `path` with its suffix replaced: data.csv -> data.schema."""
    path = Path(path)
    return path.with_name(f"{path.stem}{suffix}")


def validate_schema(schema):
    """
    Check a column -> kind mapping.

    Raises:
        ParseError: for an unknown kind or not exactly one response column.
    """
    schema = {str(col).strip(): str(kind).strip().lower() for col, kind in schema.items()}
    for col, kind in schema.items():
        if kind not in COLUMN_KINDS:
            raise ParseError(f"unknown column kind {kind!r}", column=col)
    responses = [col for col, kind in schema.items() if kind == "response"]
    if len(responses) != 1:
        raise ParseError(f"schema needs exactly one response column, found {len(responses)}")
    return schema


def read_schema(path):
    if not Path(path).is_file():
        raise ParseError(f"schema file {path} does not exist")
    return validate_schema(dotenv_values(path, interpolate=False))


def write_schema(path, schema):
    lines = [f"{col}={kind}" for col, kind in validate_schema(schema).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _numeric_column(frame, col):
    values = pd.to_numeric(frame[col], errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        raise ParseError(f"unparsable value {frame[col].iloc[bad[0]]!r}", row=int(bad[0]), column=col)
    return values.astype(float)


def load_frame(path, schema):
    """
    Read the columns named in the schema and check their cells.

    Parameters:
        path (str | Path): CSV file with a header row.
        schema (dict): Validated column -> kind mapping.

    Returns:
        pd.DataFrame: numeric response/continuous/binary columns, string categoricals.

    Raises:
        ParseError: for a missing column, an empty file, an unparsable cell,
            a binary value other than 0/1 or a nonpositive response; the
            message names the data row (zero-based).
    """
    schema = validate_schema(schema)
    categorical = [col for col, kind in schema.items() if kind == "categorical"]
    try:
        frame = pd.read_csv(
            path,
            dtype={col: str for col in categorical},
            float_precision="round_trip",
            encoding="utf-8",
            keep_default_na=False,
            na_values=[""],
        )
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path} is empty")
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path} is not a valid CSV file: {exc}")
    if len(frame) == 0:
        raise ParseError(f"{path} has no data rows")
    missing = [col for col in schema if col not in frame.columns]
    if missing:
        raise ParseError("missing column", column=missing[0])

    frame = frame[list(schema)].copy()
    for col, kind in schema.items():
        if kind == "categorical":
            bad = np.flatnonzero(frame[col].isna().to_numpy())
            if bad.size:
                raise ParseError("missing category", row=int(bad[0]), column=col)
            continue
        frame[col] = _numeric_column(frame, col)
        if kind == "binary":
            bad = np.flatnonzero(~frame[col].isin([0.0, 1.0]).to_numpy())
            if bad.size:
                raise ParseError("binary values must be 0 or 1", row=int(bad[0]), column=col)
        if kind == "response":
            bad = np.flatnonzero(~(frame[col] > 0).to_numpy())
            if bad.size:
                raise ParseError(
                    f"response must be positive, got {frame[col].iloc[bad[0]]!r}", row=int(bad[0]), column=col
                )
    return frame


def encode_frame(frame, encoder: FeatureEncoder, row_ids=None):
    responses, features, meta = encoder.transform(frame)
    return Dataset(responses, features, meta, response_name=encoder.response, row_ids=row_ids)


def load_csv(path, schema, encoder=None):
    """
    Load a claims table as a Dataset.

    Parameters:
        path (str | Path): CSV file.
        schema (dict): column -> kind mapping.
        encoder (FeatureEncoder | None): Fitted encoder; when omitted, a new
            encoder is fitted on the whole file.

    Returns:
        tuple: (Dataset, FeatureEncoder)
    """
    frame = load_frame(path, schema)
    if encoder is None:
        encoder = FeatureEncoder(validate_schema(schema)).fit(frame)
    logger.info("loaded %d rows from %s", len(frame), path)
    return encode_frame(frame, encoder), encoder


def load_learn_test(path, schema, test_fraction, seed, truth_path=None):
    """
    Load a claims table and split it into learn and test parts.

    The split is stratified by the response; the encoder is fitted on the
    learn rows only and applied to both parts.

    Returns:
        tuple: (learn Dataset, test Dataset, FeatureEncoder)
    """
    schema = validate_schema(schema)
    frame = load_frame(path, schema)
    encoder = FeatureEncoder(schema)
    learn_rows, test_rows = stratified_indices(frame[encoder.response], test_fraction, seed)
    encoder.fit(frame.iloc[learn_rows])
    learn = encode_frame(frame.iloc[learn_rows], encoder, row_ids=learn_rows)
    test = encode_frame(frame.iloc[test_rows], encoder, row_ids=test_rows)
    if truth_path is not None:
        truth = read_truth_csv(truth_path)
        if len(truth) != len(frame):
            raise ParseError(f"truth file has {len(truth)} rows, the data file {len(frame)}")
        learn = learn.with_truth(truth.subset(learn_rows))
        test = test.with_truth(truth.subset(test_rows))
    logger.info("split %s into %d learn and %d test rows", path, learn.n, test.n)
    return learn, test, encoder


def write_csv(path, dataset: Dataset):
    """Write the raw features and the response of a Dataset; floats use shortest repr."""
    dataset.as_frame().to_csv(path, index=False, encoding="utf-8")


def write_truth_csv(path, truth: TripletBatch):
    pd.DataFrame(truth.as_matrix(), columns=TRUTH_COLUMNS).to_csv(path, index=False, encoding="utf-8")


def read_truth_csv(path):
    """
    Read an (e_minus, v, e_plus) table as a TripletBatch.

    Raises:
        ParseError: for missing columns, unparsable cells or an empty file.
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path} is empty")
    missing = [col for col in TRUTH_COLUMNS if col not in frame.columns]
    if missing:
        raise ParseError("missing column", column=missing[0])
    if len(frame) == 0:
        raise ParseError(f"{path} has no data rows")
    columns = [_numeric_column(frame, col).to_numpy() for col in TRUTH_COLUMNS]
    try:
        return TripletBatch(*columns)
    except DomainError as exc:
        raise ParseError(str(exc))
