import codecs
import io
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import pandas as pd
import regex as re

from src.utils.errors import ErrorCode, RejectKitError

FLOAT_FORMAT = '%.17g'
PARSER_LINE_PATTERN = re.compile(r'line (\d+)')


def decode_text(path: Path) -> str:
    """File text as UTF-8, a leading BOM dropped; undecodable bytes are a PARSE_ERROR on their line."""
    if not path.is_file():
        raise RejectKitError(ErrorCode.FILE_NOT_FOUND, f'{path} does not exist', path=str(path))
    data = path.read_bytes().removeprefix(codecs.BOM_UTF8)
    try:
        return data.decode('utf-8')
    except UnicodeDecodeError as err:
        line = data[: err.start].count(b'\n') + 1
        raise RejectKitError(
            ErrorCode.PARSE_ERROR,
            f'{path}:{line}: invalid UTF-8 ({err.reason})',
            path=str(path),
            line=line,
        ) from err


def read_frame(path: Path, **options: Any) -> pd.DataFrame:
    """
    Every cell as a string, empty cells as ''. Cells missing from short rows (and every cell of
    a blank line, with `skip_blank_lines=False`) are NaN.
    """
    try:
        frame = pd.read_csv(
            io.StringIO(decode_text(path)), dtype=str, keep_default_na=False, **options
        )
    except pd.errors.EmptyDataError as err:
        raise RejectKitError(ErrorCode.PARSE_ERROR, f'{path} is empty', path=str(path), line=1) from err
    except pd.errors.ParserError as err:
        match = PARSER_LINE_PATTERN.search(str(err))
        line = int(match[1]) if match else None
        raise RejectKitError(
            ErrorCode.PARSE_ERROR, f'{path}:{line}: {err}', path=str(path), line=line
        ) from err
    # rows wider than the header turn the first column into an index
    if len(frame) and not isinstance(frame.index, pd.RangeIndex):
        raise RejectKitError(
            ErrorCode.PARSE_ERROR,
            f'{path}:2: rows have more cells than the header',
            path=str(path),
            line=2,
        )
    return frame


def read_csv_dicts(path: Path) -> list[dict[str, str]]:
    return read_frame(path).fillna('').to_dict(orient='records')


def _cell(value: Any) -> Any:
    return int(value) if isinstance(value, bool) else value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Floats with 17 significant digits, None and NaN as empty cells."""
    frame = pd.DataFrame([[_cell(value) for value in row] for row in rows], columns=list(header))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n')
    return path


def parse_optional_float(text: str | None) -> float | None:
    if text is None or not text.strip():
        return None
    return float(text)
