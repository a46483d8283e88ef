"""Run configuration: physics, robot, IK solver, search and choice settings.

A config file is JSON with optional sections ``physics``, ``robot``,
``solver``, ``search`` and ``choice``; keys override the defaults below.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .geometric.ik import SolverSettings
from .geometric.robot import RobotModel
from .physics.stability import SimulationParams
from .pipeline import ProblemPipeline


@dataclass(frozen=True)
class RobotSettings:
    base_offset: float = 0.40
    shoulder_half_width: float = 0.15
    shoulder_height: float = 0.25
    upper: float = 0.30
    fore: float = 0.25
    joint_limit: float = 2.6


@dataclass(frozen=True)
class SearchSettings:
    search: str = "exhaustive"
    cap: int = 12
    budget: int = 20000

    def __post_init__(self):
        if self.search not in ("exhaustive", "mcts"):
            raise ValueError(f"unknown search {self.search!r}")
        if self.cap < 0 or self.budget <= 0:
            raise ValueError("cap must be >= 0 and budget > 0")


@dataclass(frozen=True)
class ChoiceSettings:
    temperature: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class RunConfig:
    physics: SimulationParams = field(default_factory=SimulationParams)
    robot: RobotSettings = field(default_factory=RobotSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    search: SearchSettings = field(default_factory=SearchSettings)
    choice: ChoiceSettings = field(default_factory=ChoiceSettings)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {f.name: dataclasses.asdict(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _section(cls, values: Optional[Dict[str, Any]], name: str):
    values = values or {}
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {name} setting(s): {', '.join(sorted(unknown))}")
    return cls(**values)


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    sections = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - set(sections)
    if unknown:
        raise ValueError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    return RunConfig(
        physics=_section(SimulationParams, data.get("physics"), "physics"),
        robot=_section(RobotSettings, data.get("robot"), "robot"),
        solver=_section(SolverSettings, data.get("solver"), "solver"),
        search=_section(SearchSettings, data.get("search"), "search"),
        choice=_section(ChoiceSettings, data.get("choice"), "choice"),
    )


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    if path is None:
        return RunConfig()
    return config_from_dict(json.loads(Path(path).read_text()))


def robot_model(settings: RobotSettings, layout) -> RobotModel:
    """Two-arm robot centred behind the layout's middle spot."""
    spots = layout.spots
    return RobotModel.default(spots[len(spots) // 2], settings.base_offset, settings.shoulder_half_width,
                              settings.shoulder_height, settings.upper, settings.fore, settings.joint_limit)


def pipeline_for(problem, config: RunConfig) -> ProblemPipeline:
    return ProblemPipeline(problem, robot_model(config.robot, problem.layout), config.solver, config.physics)
