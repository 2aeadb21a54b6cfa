//! Path checks and file helpers shared by the subcommands.

use std::path::{Path, PathBuf};

use covariant_core::report::write_json;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::Failure;

/// Supported config file version.
pub const CONFIG_VERSION: u64 = 1;

pub fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file `{}` does not exist", path.display())))
    }
}

/// The parent directory of an output path must exist.
pub fn require_writable(path: &Path) -> Result<(), Failure> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if parent.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("output directory `{}` does not exist", parent.display())))
    }
}

pub fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<(), Failure> {
    paths.into_iter().try_for_each(|p| require_file(p))
}

pub fn check_outputs<'a>(paths: impl IntoIterator<Item = &'a Option<PathBuf>>) -> Result<(), Failure> {
    paths.into_iter().flatten().try_for_each(|p| require_writable(p))
}

/// Read a versioned JSON config. A missing or unsupported `version` is a
/// domain error.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(covariant_core::Error::from)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(covariant_core::Error::from)?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(CONFIG_VERSION) => {}
        Some(v) => return Err(Failure::Domain(covariant_core::Error::InvalidArgument(format!("{}: unsupported config version {v}", path.display())))),
        None => return Err(Failure::Domain(covariant_core::Error::InvalidArgument(format!("{}: config lacks a `version` field", path.display())))),
    }
    Ok(serde_json::from_value(value).map_err(covariant_core::Error::from)?)
}

pub fn write_report<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    if let Some(p) = path {
        write_json(p, value)?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(covariant_core::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Deserialize, Debug)]
    struct Cfg {
        n: u32,
    }

    fn write(dir: &tempfile::TempDir, text: &str) -> PathBuf {
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn config_version_is_checked() {
        let dir = tempfile::TempDir::new().unwrap();
        let ok: Cfg = load_config(&write(&dir, r#"{"version": 1, "n": 3}"#)).unwrap();
        assert_eq!(ok.n, 3);
        for bad in [r#"{"version": 2, "n": 3}"#, r#"{"n": 3}"#, "not json"] {
            assert!(matches!(load_config::<Cfg>(&write(&dir, bad)), Err(Failure::Domain(_))), "{bad}");
        }
    }

    #[test]
    fn path_checks_are_usage_errors() {
        assert!(matches!(require_file(Path::new("/no/such/file")), Err(Failure::Usage(_))));
        assert!(matches!(require_writable(Path::new("/no/such/dir/out.json")), Err(Failure::Usage(_))));
        assert!(require_writable(Path::new("relative.json")).is_ok());
        check_outputs([&None, &Some(PathBuf::from("x.json"))]).unwrap();
    }
}
