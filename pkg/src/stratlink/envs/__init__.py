"""Environment builders: toy example, key-and-door mazes, shortcuts, arterial network."""
from .arterial import ArterialSpec, TravelTime, build_arterial_mdp, closure_constraint
from .gridworld import (
    ACTIONS,
    BUILTIN_LAYOUTS,
    GridLayout,
    GridWorld,
    LayoutError,
    landmark_steps,
    load_layout,
    parse_gridworld,
)
from .shortcuts import (
    Shortcut,
    ShortcutsSpec,
    build_shortcuts,
    draw_shortcuts_spec,
    example_shortcuts,
    generate_shortcuts,
    node_classes,
    prep_flags,
    shortcut_family,
)
from .toy import toy_environment

__all__ = [
    "ACTIONS",
    "ArterialSpec",
    "BUILTIN_LAYOUTS",
    "GridLayout",
    "GridWorld",
    "LayoutError",
    "Shortcut",
    "ShortcutsSpec",
    "TravelTime",
    "build_arterial_mdp",
    "build_shortcuts",
    "closure_constraint",
    "draw_shortcuts_spec",
    "example_shortcuts",
    "generate_shortcuts",
    "landmark_steps",
    "load_layout",
    "node_classes",
    "parse_gridworld",
    "prep_flags",
    "shortcut_family",
    "toy_environment",
]
