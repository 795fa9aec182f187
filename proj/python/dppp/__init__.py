"""Prompt-driven pedestrian dataset factory and de-stylization trainer.

Thin python surface over the C++ core: prompt combinatorics, the training
losses, retrieval metrics, pixel operations and the stage runners.
"""

from dppp._dppp import (  # noqa: F401
    __version__,
    batch_hard_triplet_loss,
    build_toy_dataset,
    composite,
    contrast_augment,
    default_catalog_json,
    default_config_json,
    distance_histogram,
    evaluate_retrieval,
    generate_identity_specs,
    id_loss,
    parse_market_filename,
    rank_gallery,
    render_character_prompt,
    render_scene_prompt,
    run_eval,
    run_forge,
    run_synth,
    run_train,
    style_attention,
    supcon_loss,
    topk_indices,
)
