"""lamina: a small language with three coinciding execution modes.

The same source runs under a reference interpreter, a stack-machine
interpreter, and natively after x86-64 code generation; the three modes
produce byte-identical output.
"""

__version__ = "0.1.0"
