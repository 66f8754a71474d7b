"""Regenerate the bundled package documents in src/mfit/data/."""

from pathlib import Path

from mfit.bundled import HEADER, all_bundled
from mfit.package import dump_package, parse_package

DATA = Path(__file__).resolve().parents[1] / "src" / "mfit" / "data"


def main():
    DATA.mkdir(exist_ok=True)
    for name, spec in all_bundled().items():
        text = HEADER.format(name=name) + dump_package(spec)
        assert parse_package(text) == spec
        (DATA / f"{name}.yaml").write_text(text)
        print(f"wrote {name}.yaml  thickness={spec.thickness * 1e3:.3f} mm")


if __name__ == "__main__":
    main()
