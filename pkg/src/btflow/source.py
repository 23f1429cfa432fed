"""Source locations and diagnostics shared by the parser and the model."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SourceSpan:
    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"


@dataclass(frozen=True)
class Diagnostic:
    span: SourceSpan
    severity: str  # "error" | "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.span}: {self.severity}: {self.message}"
