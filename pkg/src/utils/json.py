from pathlib import Path
from typing import Any

import orjson

from src.utils.errors import ErrorCode, RejectKitError

json_options = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def dumps(obj: Any) -> bytes:
    return orjson.dumps(obj, option=json_options) + b'\n'


def write_json(path: Path, obj: Any) -> Path:
    path.write_bytes(dumps(obj))
    return path


def read_json(path: Path) -> Any:
    if not path.exists():
        raise RejectKitError(ErrorCode.FILE_NOT_FOUND, f'{path} does not exist', path=str(path))
    try:
        return orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as err:
        raise RejectKitError(
            ErrorCode.PARSE_ERROR, f'{path} is not valid JSON: {err}', path=str(path)
        ) from err

