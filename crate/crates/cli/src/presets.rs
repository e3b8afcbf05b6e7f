//! Circuit files bundled with the binary.

pub const PRESETS: [(&str, &str); 7] = [
    ("idm_channel", include_str!("../presets/idm_channel.toml")),
    ("simple_nor", include_str!("../presets/simple_nor.toml")),
    ("advanced_nor", include_str!("../presets/advanced_nor.toml")),
    ("heater_loop", include_str!("../presets/heater_loop.toml")),
    ("sr_latch", include_str!("../presets/sr_latch.toml")),
    ("fig3_feedback", include_str!("../presets/fig3_feedback.toml")),
    ("storage_loop", include_str!("../presets/storage_loop.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
