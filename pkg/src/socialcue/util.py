# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Different simpler functions.

Functions: wrap, fill_template, canonical_json, atomic_write_text, write_csv,
percent
"""

import csv
import json
import os
import re
import shutil
import tempfile
import textwrap
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .errors import ValidationError

_PLACEHOLDER = re.compile(r"{([A-Z_]+)}")


def wrap(text, indent=0, dedent=False):
    """Wrap lines of text and optionally indent it for prettier printing."""
    term_width = shutil.get_terminal_size((80, 20)).columns
    if indent:
        indents = {
            "initial_indent": "  " * indent,
            "subsequent_indent": "  " * indent,
        }
    else:
        indents = {}
    wrapper = textwrap.TextWrapper(width=min(80, term_width), **indents)
    if dedent:
        text = textwrap.dedent(text)
    lines = [wrapper.fill(line) for line in text.splitlines()]
    return "\n".join(lines)


def fill_template(text: str, values: Mapping[str, str]) -> str:
    """Replace named placeholders in a prompt template.

    Placeholders are upper case names in braces, e.g. {CUE_QUESTION}. Every
    placeholder in the template must be given a value; extra values are
    ignored.
    """
    missing = sorted(set(_PLACEHOLDER.findall(text)) - set(values))
    if missing:
        raise ValidationError(f"No value for template placeholders {missing}")
    return _PLACEHOLDER.sub(lambda match: values[match.group(1)], text)


def canonical_json(data: Any) -> str:
    """Serialize with sorted keys and no insignificant whitespace."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def atomic_write_text(path: Path, text: str):
    """Write a file so that readers never see it half written."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(handle, "w", encoding="utf-8") as tmp:
            tmp.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> Path:
    """Write rows to a CSV file with a header row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["NA" if cell is None else cell for cell in row])
    return path


def percent(value: Optional[float]) -> str:
    """Render a fraction as a percentage with two decimals."""
    if value is None:
        return "n/a"
    return f"{value * 100:.2f}"
