"""LangGraph pipeline chaining the debt-cycle stages."""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Sequence, Tuple

from langgraph.graph import END, StateGraph

from debt_cycles.errors import StageError
from debt_cycles.pipeline import report
from debt_cycles.pipeline.stages import STAGES, PipelineState
from debt_cycles.schemas import RunConfig

logger = logging.getLogger(__name__)

# Stages each subcommand runs, in order.
COMMAND_STAGES: Dict[str, Tuple[str, ...]] = {
    "date-cycles": ("load", "date", "stats"),
    "associate": ("load", "date", "associate"),
    "stats": ("load", "date", "associate", "stats"),
    "survival": ("load", "date", "associate", "survival"),
    "amplitude": ("load", "date", "associate", "amplitude"),
    "robustness": ("load", "date", "associate", "survival", "robustness"),
    "run-all": ("load", "date", "associate", "stats", "survival", "amplitude", "robustness"),
}

# Fields left out of the manifest so reruns into other directories hash alike.
_UNRECORDED = {"out_dir", "progress"}


def _tagged(name: str, body: Callable[[PipelineState], PipelineState]) -> Callable:
    def node(state: PipelineState) -> PipelineState:
        logger.info("Stage %s started", name)
        try:
            state = body(state)
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e
        logger.info("Stage %s finished", name)
        return state

    return node


def build_pipeline_graph(stages: Sequence[str]) -> Any:
    """
    Build the LangGraph state graph for a stage sequence.

    Args:
        stages: Stage names in execution order.

    Returns:
        Compiled graph.
    """
    unknown = [s for s in stages if s not in STAGES]
    if unknown or not stages:
        raise ValueError(f"unknown or empty stage list: {list(stages)}")
    graph = StateGraph(PipelineState)
    for name in stages:
        graph.add_node(name, _tagged(name, STAGES[name]))
    graph.set_entry_point(stages[0])
    for a, b in zip(stages, stages[1:]):
        graph.add_edge(a, b)
    graph.add_edge(stages[-1], END)
    return graph.compile()


# Compiled graphs per stage sequence
_pipeline_graphs: Dict[Tuple[str, ...], Any] = {}


def get_pipeline_graph(stages: Sequence[str]) -> Any:
    """
    Get or create the compiled graph for a stage sequence.

    Returns:
        Compiled graph instance.
    """
    key = tuple(stages)
    if key not in _pipeline_graphs:
        _pipeline_graphs[key] = build_pipeline_graph(key)
    return _pipeline_graphs[key]


def run_stages(config: RunConfig, stages: Sequence[str]) -> PipelineState:
    """Run stages in memory and return the final state."""
    initial_state: PipelineState = {"config": config, "tables": {}, "results": {}}
    return get_pipeline_graph(stages).invoke(initial_state)


def run_command(command: str, config: RunConfig) -> Path:
    """
    Run one subcommand's stages and write its output bundle.

    Args:
        command: Subcommand name, a key of COMMAND_STAGES.
        config: Run configuration.

    Returns:
        The output directory.

    Raises:
        StageError: If a stage fails; nothing is left in the output directory.
    """
    if command not in COMMAND_STAGES:
        raise ValueError(f"unknown command {command!r}")
    final_state = run_stages(config, COMMAND_STAGES[command])
    recorded = config.model_dump(mode="json", exclude=_UNRECORDED)
    try:
        return report.write_bundle(
            final_state["tables"],
            final_state["results"],
            config.out_dir,
            config.output_format,
            recorded,
            config.seed,
        )
    except Exception as e:
        raise StageError("write", e) from e
