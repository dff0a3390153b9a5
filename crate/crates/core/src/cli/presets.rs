//! Scenario files shipped with the binary.

pub const NAMES: &[&str] = &[
    "conservation_smoke",
    "subthreshold_2d",
    "bubbling_k1",
    "selfsimilar_diag",
    "estimate_suite",
];

pub fn text(name: &str) -> Option<&'static str> {
    Some(match name {
        "conservation_smoke" => include_str!("../../presets/conservation_smoke.toml"),
        "subthreshold_2d" => include_str!("../../presets/subthreshold_2d.toml"),
        "bubbling_k1" => include_str!("../../presets/bubbling_k1.toml"),
        "selfsimilar_diag" => include_str!("../../presets/selfsimilar_diag.toml"),
        "estimate_suite" => include_str!("../../presets/estimate_suite.toml"),
        _ => return None,
    })
}
