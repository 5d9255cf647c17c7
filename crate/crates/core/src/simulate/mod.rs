//! Synthetic Sentinel-1-like ocean scenes with slicks, calm-water
//! lookalikes, and speckle, plus their ground truth.

mod dataset;
mod render;
mod shape;
mod wind_field;

pub use dataset::{
    files, gen_dataset, plan_scene, scene_id, scene_rel_dir, DatasetConfig, InstanceEntry,
    Manifest, SceneEntry, ScenePaths, ScenePlan, SlickConfig, WindConfig, MANIFEST_FILE,
    SCENES_DIR,
};
pub use render::{
    damping_contrast, render_scene, touches, LookalikeConfig, SceneGroundTruth, Speckle,
    ANTENNA_AZIMUTH_DEG, DEFAULT_LOOKS,
};
pub use shape::{gen_slick_shape, ShapeBounds, SlickShape, SlickSpec, DEFAULT_DAMPING_DB};
pub use wind_field::{
    gen_wind_field, gen_wind_field_with_pockets, Pocket, Provenance, WindField, WindFieldParams,
    DETECTABILITY_MIN_SPEED,
};
