"""Regenerate tests/data/*.case from the case modules shipped in a PYPOWER wheel.

Usage: python3 tools/convert_pypower_cases.py <dir containing pypower/case*.py>

The wheel is only needed when refreshing the fixtures; the package itself
does not depend on PYPOWER.
"""

import importlib.util
import sys
from pathlib import Path

from regionopf.case import parse_case, save_case

CASES = ["case6ww", "case9", "case14", "case24_ieee_rts", "case30", "case39",
         "case57", "case118", "case300"]


def matrix(name, rows):
    lines = [f"mpc.{name} = ["]
    for row in rows:
        lines.append("\t" + "\t".join(repr(float(v)) for v in row) + ";")
    lines.append("];")
    return lines


def convert(module_path: Path, out: Path):
    spec = importlib.util.spec_from_file_location(module_path.stem, module_path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    ppc = getattr(mod, module_path.stem)()
    text = [f"function mpc = {module_path.stem}", "mpc.version = '2';",
            f"mpc.baseMVA = {float(ppc['baseMVA'])!r};"]
    # PYPOWER pads result columns onto bus/gen/branch; keep the input columns only
    widths = {"bus": 13, "gen": 10, "branch": 13, "gencost": None}
    for key, width in widths.items():
        text += matrix(key, [row[:width] for row in ppc[key]])
    case = parse_case("\n".join(text) + "\n")
    save_case(case, out / f"{module_path.stem}.case")


def main():
    src = Path(sys.argv[1]) / "pypower"
    out = Path(__file__).resolve().parent.parent / "tests" / "data"
    out.mkdir(parents=True, exist_ok=True)
    for name in CASES:
        convert(src / f"{name}.py", out)
        print(name)


if __name__ == "__main__":
    main()
