//! Configuration bundles shipped with the library.

pub const PRESET_NAMES: [&str; 6] = [
    "pc_floating",
    "cc_floating",
    "pc_grounded",
    "cc_grounded",
    "circuit_sec6",
    "lowfreq_410",
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "pc_floating" => include_str!("../presets/pc_floating.cfg"),
        "cc_floating" => include_str!("../presets/cc_floating.cfg"),
        "pc_grounded" => include_str!("../presets/pc_grounded.cfg"),
        "cc_grounded" => include_str!("../presets/cc_grounded.cfg"),
        "circuit_sec6" => include_str!("../presets/circuit_sec6.cfg"),
        "lowfreq_410" => include_str!("../presets/lowfreq_410.cfg"),
        _ => return None,
    })
}
