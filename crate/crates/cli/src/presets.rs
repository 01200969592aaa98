//! Configurations shipped with the tool, one per reproduced figure panel.

use crate::config::Config;
use crate::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("flat", include_str!("../presets/flat.json")),
    ("fig2", include_str!("../presets/fig2.json")),
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig4a", include_str!("../presets/fig4a.json")),
    ("fig4c", include_str!("../presets/fig4c.json")),
    ("fig4d", include_str!("../presets/fig4d.json")),
    ("fig4e", include_str!("../presets/fig4e.json")),
    ("supp_dynobs", include_str!("../presets/supp_dynobs.json")),
    ("supp_scaling", include_str!("../presets/supp_scaling.json")),
    ("nu_blue", include_str!("../presets/nu_blue.json")),
    ("supp_intercell", include_str!("../presets/supp_intercell.json")),
    ("supp_selfsim", include_str!("../presets/supp_selfsim.json")),
    ("supp_ingap", include_str!("../presets/supp_ingap.json")),
    ("supp_2dcheck", include_str!("../presets/supp_2dcheck.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Result<&'static str, CliError> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        CliError::config(format!("unknown preset `{name}` (known: {})", names().collect::<Vec<_>>().join(", ")))
    })
}

pub fn load(name: &str) -> Result<Config, CliError> {
    Config::from_json(text(name)?).map_err(|e| CliError::config(format!("preset {name}: {e}")))
}
