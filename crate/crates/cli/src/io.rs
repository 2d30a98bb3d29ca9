//! Reading inputs and writing outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

/// Parse a JSON document, naming the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Outcome<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Failure::config(format!("invalid {what} at `{path}`: {}", e.into_inner()))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Outcome<T> {
    parse_json(&read_text(path)?, what)
}

/// Inline JSON, or the path of a JSON file.
pub fn json_arg<T: DeserializeOwned>(arg: &str, what: &str) -> Outcome<T> {
    if arg.trim_start().starts_with('{') {
        parse_json(arg, what)
    } else {
        read_json(Path::new(arg), what)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

/// Write `text` to `out`, or to standard output without a path.
pub fn emit(out: Option<&Path>, text: &str) -> Outcome<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::config(format!("cannot write to standard output: {e}"))),
    }
}
