# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""
Exceptions raised by socialcue.

The command line front end maps each of them to its own exit code.
"""

from typing import Any, Optional


class SocialCueError(Exception):
    """Base class of all errors raised by this package."""


class ValidationError(SocialCueError, ValueError):
    """Input or configuration violates a documented invariant."""

    def __init__(
        self,
        message: str,
        segment_id: Optional[str] = None,
        field: Optional[str] = None,
    ):
        self.segment_id = segment_id
        self.field = field
        context = []
        if segment_id is not None:
            context.append(f"segment {segment_id}")
        if field is not None:
            context.append(f"field {field}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class ManifestError(ValidationError):
    """A manifest line cannot be parsed or is invalid."""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        segment_id: Optional[str] = None,
        field: Optional[str] = None,
    ):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, segment_id=segment_id, field=field)


class BackendError(SocialCueError):
    """A cue backend could not produce an answer."""

    def __init__(self, message: str, segment_id: str, target: str):
        self.segment_id = segment_id
        self.target = target
        super().__init__(f"{message} (segment {segment_id}, {target})")


class CacheMissError(BackendError):
    """A replay backend found no cached response."""


class ParseError(SocialCueError):
    """A model answer contains no yes/no verdict."""

    def __init__(self, raw: str):
        self.raw = raw
        excerpt = raw if len(raw) < 120 else raw[:117] + "..."
        super().__init__(f"No yes/no verdict in answer: {excerpt!r}")


class GraphEvaluationError(SocialCueError):
    """Querying a cue failed during graph evaluation."""

    def __init__(self, cue: str, trace: Any, cause: BaseException):
        self.cue = cue
        self.trace = trace
        super().__init__(f"Querying {cue} failed: {cause}")


class RunAborted(SocialCueError):
    """More segments failed than the failure budget allows."""

    def __init__(self, message: str, report: Any):
        self.report = report
        super().__init__(message)
