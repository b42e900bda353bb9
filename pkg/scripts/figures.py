"""Write the standard SVG figures into a directory (default: figures/)."""
import sys
from pathlib import Path

from vpyramid.cli import main

TRIANGLE = '{"alpha": "1", "triangles": [{"a": 0, "b": 1, "h": {"type": "linear", "slope": -1, "intercept": 1}}]}'
RECT = '{"rectangles": [[0, 0, 3, 2]]}'


def run(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for kind in ("pyramid", "even", "odd", "accordion"):
        main(["plot", "--kind", kind, "--depth", "5", "--out", str(out)])
    main(["plot", "--kind", "covering", "--domain", TRIANGLE, "--steps", "4", "--out", str(out)])
    main(["plot", "--kind", "solution", "--domain", RECT, "--depth", "4", "--out", str(out)])
    print("\n".join(sorted(p.name for p in out.glob("*.svg"))))


if __name__ == "__main__":
    run(Path(sys.argv[1] if len(sys.argv) > 1 else "figures"))
