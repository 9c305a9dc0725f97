import argparse

from app.config import settings

COMMANDS = {
    "coeffs": "write the coefficients of p_n and p_n(nx) to CSV",
    "zeros": "find the zeros of p_n(nx) and write them to CSV and SVG",
    "attractor": "build the predicted zero attractor, optionally overlaid with zeros",
    "validate": "check the zeros against the attractor and the asymptotic formulas",
}


def build_parser() -> argparse.ArgumentParser:
    """Subcommands coeffs, zeros, attractor and validate sharing one set of flags"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration or generating function (JSON or YAML)")
    common.add_argument("--out", default=None, help=f"output directory (default: config, then {settings.output_directory})")
    common.add_argument("--degree", type=int, default=None, help="override the degree n")
    common.add_argument("--precision", type=int, default=None, help="override the working precision in bits")
    common.add_argument("--svg", action=argparse.BooleanOptionalAction, default=None, help="write SVG plots")
    common.add_argument("--reuse", action="store_true", help="read zeros.csv from the output directory instead of solving")

    parser = argparse.ArgumentParser(
        prog="appell",
        description=f"{settings.app_name} {settings.version}: zeros of scaled Appell polynomials and their attractor",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=text, description=text)
    return parser
