"""Error taxonomy shared by every stage.

Each error class maps onto one process exit code so the CLI can classify
failures without string matching:

    0  success
    2  compile time (lexing, parsing, well-formedness, name resolution)
    3  run time (any mode: interpreter, stack machine, native binary)
    4  toolchain (assembler/linker missing or failing)
"""
from __future__ import annotations

EXIT_OK = 0
EXIT_COMPILE = 2
EXIT_RUNTIME = 3
EXIT_TOOLCHAIN = 4


class LaminaError(Exception):
    """Base class; loc is a (line, col) Loc or None."""

    exit_code = EXIT_COMPILE

    def __init__(self, message, loc=None):
        self.message = message
        self.loc = loc
        super().__init__(str(self))

    def __str__(self):
        if self.loc is not None:
            return f"{self.loc}: {self.message}"
        return self.message


class LexError(LaminaError):
    pass


class ParseError(LaminaError):
    pass


class WellFormednessError(LaminaError):
    """An expression is used at a kind it cannot inhabit."""


class CompileError(LaminaError):
    """AST-to-SM lowering failure (unbound names, duplicate bindings)."""


class CodegenInvariantError(LaminaError):
    """SM input to the code generator violates the layout invariants."""


class RuntimeFailure(LaminaError):
    """Dynamic failure; the message text is identical across all modes."""

    exit_code = EXIT_RUNTIME


class ToolchainError(LaminaError):
    exit_code = EXIT_TOOLCHAIN
