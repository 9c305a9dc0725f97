import logging
import os
from typing import Any, Dict, List, Optional

import yaml
from pydantic import ValidationError

from app.errors import AppellError, ConfigError, DataIOError
from app.models.schemas import RunConfig
from app.pipeline.graph import AppellPipeline
from app.cli.parser import build_parser

logger = logging.getLogger(__name__)


def _describe(error: ValidationError) -> str:
    """First validation problem as 'dotted.key: message'"""
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "config"
    return f"{key}: {first['msg']}"


def load_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Read a RunConfig (or a bare generating-function document) from JSON or YAML"""
    if not os.path.exists(path):
        raise DataIOError(f"config file {path} not found")
    try:
        with open(path) as fh:
            document = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path} is not valid JSON or YAML: {e}")
    except OSError as e:
        raise DataIOError(f"could not read {path}: {e}")

    if not isinstance(document, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    if "genfun" not in document and "kind" in document:
        document = {"genfun": document}
    document.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}")


def run_command(command: str, config: RunConfig, out_dir: Optional[str] = None, reuse: bool = False) -> int:
    result = AppellPipeline().run(command, config, out_dir, reuse)
    if result.get("error"):
        logger.error(f"{command} stopped: {result['error']}")
    return result["exit_code"]


def cmd_coeffs(config: RunConfig, out_dir: Optional[str] = None) -> int:
    """p_n.csv and p_n_scaled.csv"""
    return run_command("coeffs", config, out_dir)


def cmd_zeros(config: RunConfig, out_dir: Optional[str] = None) -> int:
    """zeros.csv and zeros.svg; zeros_partial.csv and exit 2 when the iteration does not converge"""
    return run_command("zeros", config, out_dir)


def cmd_attractor(config: RunConfig, out_dir: Optional[str] = None, reuse: bool = False) -> int:
    return run_command("attractor", config, out_dir, reuse)


def cmd_validate(config: RunConfig, out_dir: Optional[str] = None, reuse: bool = False) -> int:
    """report.json, report.txt and density CSVs; 0 iff every check passes"""
    return run_command("validate", config, out_dir, reuse)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "degree": args.degree,
        "precision": args.precision,
        "svg": args.svg,
        "output_dir": args.out,
    }
    try:
        config = load_config(args.config, overrides)
    except AppellError as e:
        logger.error(f"Could not load configuration: {e.detail}")
        return e.exit_code

    if args.command == "coeffs":
        return cmd_coeffs(config)
    if args.command == "zeros":
        return cmd_zeros(config)
    if args.command == "attractor":
        return cmd_attractor(config, reuse=args.reuse)
    return cmd_validate(config, reuse=args.reuse)
