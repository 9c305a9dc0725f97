import logging
import os
from typing import Any, Dict, List, Optional, TypedDict

from langgraph.graph import StateGraph, END

from app.config import settings
from app.errors import AppellError, ConfigError, NonConvergenceError
from app.models.schemas import AsymptoticContext, AttractorGeometry, BigPoly, RootSet, RunConfig, ValidationReport
from app.services import export
from app.services.appell import ASYM_PRECISION, appell_poly, scaled_poly
from app.services.attractor import asymptotic_context, build_attractor
from app.services.rootfind import aberth, default_precision, horner_eval
from app.services.validate import build_report, solve_degrees

logger = logging.getLogger(__name__)

# singular parts carry guard bits over the asymptotic evaluators
CONTEXT_PRECISION = ASYM_PRECISION + 64


class PipelineState(TypedDict):
    """State object for one CLI run"""
    command: str
    config: RunConfig
    out_dir: str
    reuse: bool
    plan: List[str]
    precision: int
    context: Optional[AsymptoticContext]
    poly: Optional[BigPoly]
    scaled: Optional[BigPoly]
    roots: Optional[RootSet]
    compare: Optional[RootSet]
    geometry: Optional[AttractorGeometry]
    report: Optional[ValidationReport]
    outputs: List[str]
    current_step: str
    error: Optional[str]
    exit_code: int


NODES = ["load", "context", "poly", "roots", "geometry", "validate", "write"]


class AppellPipeline:
    """
    Runs one subcommand as a LangGraph workflow; each node records failures in
    the state and the graph stops at the first one
    """

    def __init__(self):
        self.graph = self._build_graph()

    def _build_graph(self):
        workflow = StateGraph(PipelineState)

        workflow.add_node("load", self._load_node)
        workflow.add_node("context", self._context_node)
        workflow.add_node("poly", self._poly_node)
        workflow.add_node("roots", self._roots_node)
        workflow.add_node("geometry", self._geometry_node)
        workflow.add_node("validate", self._validate_node)
        workflow.add_node("write", self._write_node)

        workflow.set_entry_point("load")
        routes = {name: name for name in NODES}
        routes["end"] = END
        for name in NODES:
            workflow.add_conditional_edges(name, self._route, routes)

        return workflow.compile()

    @staticmethod
    def _route(state: PipelineState) -> str:
        """Next node in the plan, or the end on error"""
        if state.get("error"):
            return "end"
        plan = state["plan"]
        step = plan.index(state["current_step"])
        return plan[step + 1] if step + 1 < len(plan) else "end"

    @staticmethod
    def _fail(state: PipelineState, step: str, e: Exception) -> PipelineState:
        if isinstance(e, AppellError):
            state["error"] = e.detail
            state["exit_code"] = e.exit_code
            logger.error(f"{step} failed: {e.detail}")
        else:
            state["error"] = f"Error in {step}: {str(e)}"
            state["exit_code"] = 3
            logger.error(f"Error in {step}: {str(e)}", exc_info=True)
        return state

    def _load_node(self, state: PipelineState) -> PipelineState:
        """Check the configuration against the command and lay out the plan"""
        try:
            config = state["config"]
            command = state["command"]
            n = config.degree
            logger.info(f"Starting {command} for {config.genfun.label()} at degree {n}")

            if command in ("attractor", "validate") and config.rho is None:
                raise ConfigError(f"rho: the {command} command needs a cutoff rho")
            if command in ("zeros", "validate") and n < 1:
                raise ConfigError(f"degree: the {command} command needs degree >= 1, got {n}")

            floor = default_precision(max(n, 1))
            precision = config.precision or settings.precision_override or floor
            if precision < floor:
                logger.warning(f"Precision {precision} is below the recommended {floor} bits for degree {n}")
            state["precision"] = precision

            if command == "coeffs":
                plan = ["load", "poly", "write"]
            elif command == "zeros":
                plan = ["load", "poly", "roots", "write"]
            elif command == "attractor":
                plan = ["load", "context", "geometry", "write"]
                if config.overlay_zeros:
                    plan = ["load", "context", "geometry", "poly", "roots", "write"]
            elif command == "validate":
                plan = ["load", "context", "poly", "roots", "geometry", "validate", "write"]
            else:
                raise ConfigError(f"unknown command {command!r}")
            state["plan"] = plan

            os.makedirs(state["out_dir"], exist_ok=True)
            state["current_step"] = "load"

        except Exception as e:
            return self._fail(state, "load", e)

        return state

    def _context_node(self, state: PipelineState) -> PipelineState:
        """Zeros of g below rho, classified"""
        try:
            config = state["config"]
            state["context"] = asymptotic_context(
                config.genfun, config.rho, CONTEXT_PRECISION, config.tolerances.improper_tol
            )
            state["current_step"] = "context"

        except Exception as e:
            return self._fail(state, "context", e)

        return state

    def _poly_node(self, state: PipelineState) -> PipelineState:
        """p_n and p_n(nx)"""
        try:
            n = state["config"].degree
            state["poly"] = appell_poly(state["config"].genfun, n, state["precision"])
            state["scaled"] = scaled_poly(state["poly"], n)
            state["current_step"] = "poly"
            logger.info(f"Built p_{n} at {state['precision']} bits")

        except Exception as e:
            return self._fail(state, "poly", e)

        return state

    def _reuse_roots(self, state: PipelineState) -> RootSet:
        path = os.path.join(state["out_dir"], "zeros.csv")
        found = export.read_roots_csv(path, state["precision"])
        scaled = state["scaled"]
        norm = max(abs(c) for c in scaled.coeffs)
        residuals = tuple(float(abs(horner_eval(scaled, z)[0]) / norm) for z in found)
        logger.info(f"Reusing {len(found)} zeros from {path}")
        return RootSet(roots=tuple(found), residual_bound=max(residuals, default=0.0), iterations=0,
                       prec=state["precision"], residuals=residuals)

    def _roots_node(self, state: PipelineState) -> PipelineState:
        """Roots of p_n(nx), freshly or from an earlier zeros.csv"""
        try:
            config = state["config"]
            n = config.degree
            compare = config.validation.compare_degree if state["command"] == "validate" else None

            if state["reuse"]:
                state["roots"] = self._reuse_roots(state)
                if compare:
                    state["compare"] = solve_degrees(config.genfun, [compare])[compare]
            elif compare:
                solved = solve_degrees(config.genfun, [n, compare], {n: state["precision"]})
                state["roots"], state["compare"] = solved[n], solved[compare]
            else:
                state["roots"] = aberth(state["scaled"], state["precision"])
            state["current_step"] = "roots"

        except NonConvergenceError as e:
            if isinstance(e.partial, RootSet):
                path = os.path.join(state["out_dir"], "zeros_partial.csv")
                state["outputs"].append(export.write_roots_csv(path, e.partial))
                logger.warning(f"Wrote unconverged roots to {path}")
            return self._fail(state, "roots", e)
        except Exception as e:
            return self._fail(state, "roots", e)

        return state

    def _geometry_node(self, state: PipelineState) -> PipelineState:
        """The predicted attractor from the proper dominant zeros"""
        try:
            config = state["config"]
            state["geometry"] = build_attractor(
                state["context"].dominants, config.resolution, config.tolerances.tie_tol
            )
            state["current_step"] = "geometry"

        except Exception as e:
            return self._fail(state, "geometry", e)

        return state

    def _validate_node(self, state: PipelineState) -> PipelineState:
        try:
            report = build_report(
                state["config"], state["context"], state["scaled"], state["roots"],
                state["geometry"], state.get("compare"),
            )
            state["report"] = report
            state["exit_code"] = 0 if report.passed else 1
            state["current_step"] = "validate"

        except Exception as e:
            return self._fail(state, "validate", e)

        return state

    def _write_node(self, state: PipelineState) -> PipelineState:
        """Emit the artifacts of the command"""
        try:
            config = state["config"]
            out = state["out_dir"]
            command = state["command"]
            outputs = state["outputs"]
            title = f"{config.genfun.label()}, n={config.degree}"

            if command == "coeffs":
                outputs.append(export.write_coeffs_csv(os.path.join(out, "p_n.csv"), state["poly"]))
                outputs.append(export.write_coeffs_csv(os.path.join(out, "p_n_scaled.csv"), state["scaled"]))

            if command in ("zeros", "validate") and not state["reuse"]:
                outputs.append(export.write_roots_csv(os.path.join(out, "zeros.csv"), state["roots"]))
                if config.svg and command == "zeros":
                    outputs.append(export.plot_zeros_svg(
                        os.path.join(out, "zeros.svg"), state["roots"].as_complex(), title))

            if command == "attractor":
                outputs.append(export.write_attractor_csv(os.path.join(out, "attractor.csv"), state["geometry"]))
                if config.svg:
                    zeros = state["roots"].as_complex() if state.get("roots") else None
                    outputs.append(export.plot_attractor_svg(
                        os.path.join(out, "attractor.svg"), state["geometry"], title, zeros,
                        config.d0_boundary_only,
                    ))

            if command == "validate":
                report = state["report"]
                outputs.append(export.write_report_json(os.path.join(out, "report.json"), report))
                outputs.append(export.write_report_text(os.path.join(out, "report.txt"), report))
                outputs += export.write_density_csv(out, report)

            state["current_step"] = "write"
            logger.info(f"{command} wrote {len(outputs)} files to {out}")

        except Exception as e:
            return self._fail(state, "write", e)

        return state

    def run(self, command: str, config: RunConfig, out_dir: Optional[str] = None,
            reuse: bool = False) -> Dict[str, Any]:
        """Run one subcommand and return the final state"""
        initial_state = PipelineState(
            command=command,
            config=config,
            out_dir=out_dir or config.output_dir,
            reuse=reuse,
            plan=["load"],
            precision=0,
            context=None,
            poly=None,
            scaled=None,
            roots=None,
            compare=None,
            geometry=None,
            report=None,
            outputs=[],
            current_step="starting",
            error=None,
            exit_code=0,
        )
        return self.graph.invoke(initial_state)
