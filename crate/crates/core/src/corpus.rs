//! Built-in example scenes, embedded at compile time.

use crate::scene::{parse_scene, Scene, SceneError};

/// The example suite, in run order.
pub const NAMES: [&str; 9] = [
    "plane",
    "sphere",
    "cylinder",
    "hyperbolic-paraboloid",
    "saddle",
    "paraboloid",
    "cubic",
    "circle",
    "segment",
];

/// Scenes shipped alongside the suite but not part of it.
pub const EXTRAS: [&str; 1] = ["circle-rotation"];

fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "plane" => include_str!("../corpus/plane.json"),
        "sphere" => include_str!("../corpus/sphere.json"),
        "cylinder" => include_str!("../corpus/cylinder.json"),
        "hyperbolic-paraboloid" => include_str!("../corpus/hyperbolic-paraboloid.json"),
        "saddle" => include_str!("../corpus/saddle.json"),
        "paraboloid" => include_str!("../corpus/paraboloid.json"),
        "cubic" => include_str!("../corpus/cubic.json"),
        "circle" => include_str!("../corpus/circle.json"),
        "segment" => include_str!("../corpus/segment.json"),
        "circle-rotation" => include_str!("../corpus/circle-rotation.json"),
        _ => return None,
    })
}

/// `None` for unknown names.
pub fn scene(name: &str) -> Option<Result<Scene, SceneError>> {
    source(name).map(|text| parse_scene(text, name))
}

pub fn suite() -> Result<Vec<Scene>, SceneError> {
    NAMES.iter().map(|n| scene(n).expect("suite names are embedded")).collect()
}
