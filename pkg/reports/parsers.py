"""
CSV readers for prediction logs, train-count files, label files and
confusion-matrix dumps.

Every parse failure raises ValidationError(code=PARSE_ERROR) with the
1-based file line (the header is line 1).
"""
import logging
import re
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from distributions.types import ClassDistribution, ConfusionMatrix, PredictionRecord
from utils.enums import ErrorCode

logger = logging.getLogger(__name__)

LABEL_COLUMNS = ['sample_id', 'true_label']
COUNT_COLUMNS = ['class_id', 'count']
CONFUSION_INDEX = 'true\\pred'

_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class ParsedLog:
    records: List[PredictionRecord]
    # number of logit columns; None for a pred_label log
    logit_width: Optional[int]

    @property
    def has_logits(self) -> bool:
        return self.logit_width is not None

    def inferred_classes(self) -> int:
        if self.logit_width is not None:
            return self.logit_width
        labels = [r.true_label for r in self.records] + [r.predicted for r in self.records]
        return max(max(labels, default=0) + 1, 2)


def _parse_error(path, line: int, message: str) -> ValidationError:
    return ValidationError(
        f"{path}: line {line}: {message}",
        code=ErrorCode.PARSE_ERROR,
        params={'path': str(path), 'line': line},
    )


def _read_frame(path, **kwargs) -> pd.DataFrame:
    """
    Blank lines are read as empty rows and then dropped, so frame.attrs['lines']
    keeps the file line of every remaining row.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                            skip_blank_lines=False, **kwargs)
    except FileNotFoundError:
        raise ValidationError(f"{path}: file not found", code=ErrorCode.PARSE_ERROR, params={'path': str(path), 'line': 0})
    except pd.errors.EmptyDataError:
        raise _parse_error(path, 1, "file is empty")
    except pd.errors.ParserError as exc:
        match = _PANDAS_LINE.search(str(exc))
        raise _parse_error(path, int(match.group(1)) if match else 0, str(exc).strip())
    except UnicodeDecodeError as exc:
        raise _parse_error(path, 0, f"not UTF-8 text ({exc.reason})")

    lines = np.arange(len(frame)) + 2
    blank = (frame.isna() | frame.eq('')).all(axis=1).to_numpy()
    if blank.any():
        frame = frame[~blank].copy()
    frame.attrs['lines'] = lines[~blank]
    return frame


def _line(frame: pd.DataFrame, row: int) -> int:
    return int(frame.attrs['lines'][row])


def _first_bad_row(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def _integer_column(frame: pd.DataFrame, column: str, path, minimum: Optional[int] = None) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors='coerce').to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values) | (values != np.round(values))
    if bad.any():
        row = _first_bad_row(bad)
        raise _parse_error(path, _line(frame, row), f"{column} '{frame[column].iloc[row]}' is not an integer")
    values = values.astype(np.int64)
    if minimum is not None and np.any(values < minimum):
        row = _first_bad_row(values < minimum)
        raise _parse_error(path, _line(frame, row), f"{column} {values[row]} is below {minimum}")
    return values


def _float_columns(frame: pd.DataFrame, columns: List[str], path) -> np.ndarray:
    values = frame[columns].apply(pd.to_numeric, errors='coerce').to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise _parse_error(path, _line(frame, int(row)), f"{columns[col]} '{frame[columns[col]].iloc[row]}' is not a finite number")
    return values


class LogParser:

    @staticmethod
    def read_prediction_log(path) -> ParsedLog:
        """
        Header `sample_id,true_label,pred_label` or
        `sample_id,true_label,logit_0,...,logit_{C-1}`.
        """
        frame = _read_frame(path)
        columns = [str(c).strip() for c in frame.columns]
        if columns[:2] != LABEL_COLUMNS or len(columns) < 3:
            raise _parse_error(path, 1, f"expected header starting with sample_id,true_label, got {','.join(columns)}")
        frame.columns = columns
        rest = columns[2:]

        labels = _integer_column(frame, 'true_label', path)
        if rest == ['pred_label']:
            predicted = _integer_column(frame, 'pred_label', path)
            records = [
                PredictionRecord(sample_id=sid, true_label=int(y), predicted=int(p))
                for sid, y, p in zip(frame['sample_id'], labels, predicted)
            ]
            width = None
        elif len(rest) >= 2 and rest == [f"logit_{k}" for k in range(len(rest))]:
            logits = _float_columns(frame, rest, path)
            records = [
                PredictionRecord(sample_id=sid, true_label=int(y), predicted=tuple(row))
                for sid, y, row in zip(frame['sample_id'], labels, logits.tolist())
            ]
            width = len(rest)
        else:
            raise _parse_error(path, 1, "expected pred_label or logit_0..logit_{C-1} after true_label")

        if not records:
            raise _parse_error(path, 2, "prediction log has no records")
        logger.info(f"Read {len(records)} predictions from {path} ({'logits' if width else 'labels'})")
        return ParsedLog(records=records, logit_width=width)

    @staticmethod
    def read_train_counts(path) -> ClassDistribution:
        """Header `class_id,count`, class ids 0..C-1 in order"""
        frame = _read_frame(path)
        columns = [str(c).strip() for c in frame.columns]
        if columns != COUNT_COLUMNS:
            raise _parse_error(path, 1, f"expected header class_id,count, got {','.join(columns)}")
        frame.columns = columns
        class_ids = _integer_column(frame, 'class_id', path)
        mismatch = class_ids != np.arange(class_ids.size)
        if mismatch.any():
            row = _first_bad_row(mismatch)
            raise _parse_error(path, _line(frame, row), f"class_id {class_ids[row]} out of order, expected {row}")
        counts = _integer_column(frame, 'count', path, minimum=0)
        if counts.size < 2:
            raise _parse_error(path, counts.size + 2, "train counts need at least two classes")
        return ClassDistribution.from_counts(counts)

    @staticmethod
    def read_labels(path) -> np.ndarray:
        """Any CSV with a `label` column; row order defines the sample index"""
        frame = _read_frame(path)
        frame.columns = [str(c).strip() for c in frame.columns]
        if 'label' not in frame.columns:
            raise _parse_error(path, 1, "expected a 'label' column")
        return _integer_column(frame, 'label', path, minimum=0)

    @staticmethod
    def read_confusion_csv(path) -> ConfusionMatrix:
        """Read back a dump written by ReportService.confusion_csv"""
        frame = _read_frame(path, index_col=0)
        size = frame.shape[1]
        if frame.shape[0] != size or [str(c).strip() for c in frame.columns] != [str(k) for k in range(size)]:
            raise _parse_error(path, 1, f"expected a square table with columns 0..C-1, got shape {frame.shape}")
        counts = np.empty((size, size), dtype=np.int64)
        for column in range(size):
            counts[:, column] = _integer_column(frame, frame.columns[column], path, minimum=0)
        return ConfusionMatrix(counts=counts)
