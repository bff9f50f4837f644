from .core import (
    DT,
    MANEUVERS,
    T_HORIZON,
    Agent,
    Scene,
    ground_truth,
    hidden_agent_count,
    make_scene,
    vehicle_sees,
)
from .dataset import (
    DatasetRecord,
    generate_dataset,
    generate_scene,
    load_dataset,
    make_record,
    perturb_image,
    read_record,
    write_record,
)
from .prompts import (
    ScenePrompt,
    build_prompt,
    perturb_text,
    parse_ego_text,
    task_only_text,
    text_tokenizer,
    vocabulary,
)
from .render import blank_view, render_infra_view, render_vehicle_view

__all__ = [
    "DT", "MANEUVERS", "T_HORIZON", "Agent", "Scene",
    "ground_truth", "hidden_agent_count", "make_scene", "vehicle_sees",
    "DatasetRecord", "generate_dataset", "generate_scene", "load_dataset",
    "make_record", "perturb_image", "read_record", "write_record",
    "ScenePrompt", "build_prompt", "parse_ego_text", "perturb_text", "task_only_text",
    "text_tokenizer", "vocabulary",
    "blank_view", "render_infra_view", "render_vehicle_view",
]
