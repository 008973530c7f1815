//! Scenarios shipped with the binary.

use std::path::Path;

pub struct Bundled {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(Bundled { name: $name, text: include_str!(concat!("../scenarios/", $name, ".cfg")) }),*]
    };
}

pub const BUNDLED: &[Bundled] = bundled!["fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "table1", "hbeta"];

pub fn find(name: &str) -> Option<&'static Bundled> {
    let stem = name.strip_suffix(".cfg").unwrap_or(name);
    BUNDLED.iter().find(|b| b.name == stem)
}

/// `.cfg` files in `dir`, sorted by name. A missing directory yields none.
pub fn custom(dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    out.sort();
    Ok(out)
}
