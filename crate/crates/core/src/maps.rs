//! Built-in maps and map loading by name or path.

use std::fs;
use std::path::Path;

use crate::env::{parse_map, GridMap};
use crate::{Error, Result};

const BUILTIN: &[(&str, &str)] = &[
    ("trap_world", include_str!("../../../maps/trap_world.map")),
    ("shortcut_world", include_str!("../../../maps/shortcut_world.map")),
    ("po_world", include_str!("../../../maps/po_world.map")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Option<GridMap> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, text)| parse_map(text).expect("built-in maps are valid"))
}

/// Resolves a built-in name first, then a file path.
pub fn load(name_or_path: &str) -> Result<GridMap> {
    if let Some(map) = builtin(name_or_path) {
        return Ok(map);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::NotFound(format!("map {name_or_path:?}")));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_map(&text)
}
