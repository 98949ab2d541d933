"""Human-readable output for `--pretty` runs; files stay the source of truth."""

import sys
from collections.abc import Sequence
from typing import Any, TextIO

from humanize import intcomma


def format_value(value: Any) -> str:
    if value is None:
        return '-'
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    if isinstance(value, float):
        return '-' if value != value else f'{value:.4f}'
    if isinstance(value, int):
        return intcomma(value)
    return str(value)


def render_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    cells = [[format_value(value) for value in row] for row in rows]
    widths = [
        max([len(title), *(len(row[i]) for row in cells)]) for i, title in enumerate(header)
    ]
    lines = [
        '  '.join(title.ljust(width) for title, width in zip(header, widths, strict=True)),
        '  '.join('-' * width for width in widths),
    ]
    lines.extend(
        '  '.join(cell.ljust(width) for cell, width in zip(row, widths, strict=True))
        for row in cells
    )
    return '\n'.join(line.rstrip() for line in lines)


def reply(
    title: str,
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
    stream: TextIO | None = None,
) -> None:
    out = stream or sys.stdout
    out.write(f'{title}\n{render_table(header, rows)}\n\n')
