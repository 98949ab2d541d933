from dataclasses import dataclass
from enum import IntEnum, StrEnum
from typing import Any


class ExitCode(IntEnum):
    OK = 0
    INPUT_ERROR = 2
    CALIBRATION_DEGENERATE = 3
    BUDGET_INFEASIBLE = 4


class ErrorCode(StrEnum):
    # validation
    DUPLICATE_ID = 'DUPLICATE_ID'
    PROB_OUT_OF_RANGE = 'PROB_OUT_OF_RANGE'
    LABEL_NOT_BINARY = 'LABEL_NOT_BINARY'
    LENGTH_MISMATCH = 'LENGTH_MISMATCH'
    SCHEMA_INVALID = 'SCHEMA_INVALID'
    SCHEMA_MISMATCH = 'SCHEMA_MISMATCH'
    CONFIG_INVALID = 'CONFIG_INVALID'
    # kernels
    DOMAIN = 'DOMAIN'
    EMPTY_INPUT = 'EMPTY_INPUT'
    MECHANISM_MISMATCH = 'MECHANISM_MISMATCH'
    SHAPE_MISMATCH = 'SHAPE_MISMATCH'
    EMPTY_MASK = 'EMPTY_MASK'
    # calibration
    EMPTY_POOL = 'EMPTY_POOL'
    EMPTY_TABLE = 'EMPTY_TABLE'
    CALIBRATION_DEGENERATE = 'CALIBRATION_DEGENERATE'
    BUDGET_INFEASIBLE = 'BUDGET_INFEASIBLE'
    # ingest and synthesis
    FILE_NOT_FOUND = 'FILE_NOT_FOUND'
    PARSE_ERROR = 'PARSE_ERROR'
    MISSING_COLUMN = 'MISSING_COLUMN'
    UNKNOWN_SOURCE = 'UNKNOWN_SOURCE'
    DEGENERATE_SPLIT = 'DEGENERATE_SPLIT'
    SPEC_INVALID = 'SPEC_INVALID'

    @property
    def exit_code(self) -> ExitCode:
        if self is ErrorCode.CALIBRATION_DEGENERATE:
            return ExitCode.CALIBRATION_DEGENERATE
        if self is ErrorCode.BUDGET_INFEASIBLE:
            return ExitCode.BUDGET_INFEASIBLE
        return ExitCode.INPUT_ERROR


class RejectKitError(Exception):
    def __init__(self, code: ErrorCode, message: str, **details: Any) -> None:
        super().__init__(f'{code}: {message}')
        self.code = code
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {'error': str(self.code), 'message': self.message, 'details': self.details}


@dataclass(frozen=True)
class ValidationIssue:
    code: ErrorCode
    sample_id: str | None
    field: str
    line: int | None = None
    message: str = ''

    def __str__(self) -> str:
        where = f' (line {self.line})' if self.line is not None else ''
        return f'{self.code} sample_id={self.sample_id!r} field={self.field!r}{where}: {self.message}'


class TableValidationError(RejectKitError):
    """Raised with every issue found in one validation pass; `code` is the first issue's."""

    def __init__(self, issues: list[ValidationIssue]) -> None:
        self.issues = issues
        super().__init__(
            issues[0].code,
            f'{len(issues)} invalid record field(s), first: {issues[0]}',
            issues=[
                {
                    'code': str(issue.code),
                    'sample_id': issue.sample_id,
                    'field': issue.field,
                    'line': issue.line,
                    'message': issue.message,
                }
                for issue in issues
            ],
        )

    @property
    def codes(self) -> set[ErrorCode]:
        return {issue.code for issue in self.issues}
