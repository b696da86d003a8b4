from __future__ import annotations

import sys
from typing import Sequence


def main(argv: Sequence[str] | None = None) -> int:
    if sys.version_info < (3, 11):
        raise SystemExit(
            "gaussfestoon requires Python 3.11+. "
            f"Current interpreter: {sys.executable} (Python {sys.version.split()[0]})"
        )
    try:
        from .cli import run
    except ModuleNotFoundError as exc:
        if exc.name in {"numpy", "scipy"}:
            raise SystemExit(
                f"{exc.name} is not installed in this interpreter. "
                "Activate the project venv and run `pip install -r requirements.txt`."
            ) from exc
        raise
    return run(argv)


if __name__ == "__main__":
    raise SystemExit(main())
