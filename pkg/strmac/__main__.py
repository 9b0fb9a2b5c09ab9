"""Allow ``python -m strmac``."""

from .cli import main

main()
