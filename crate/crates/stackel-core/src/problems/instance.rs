//! Versioned TOML instance files.
//!
//! ```toml
//! version = 1
//!
//! [charging]
//! b = [10.0, 10.0]
//! s = [1.0, 1.0]
//! capacity = 20.0
//! ```
//!
//! A file holds exactly one of the `[charging]` or `[dispatch]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChargingInstance, DispatchInstance};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Charging(ChargingInstance),
    Dispatch(DispatchInstance),
}

impl Instance {
    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Charging(_) => "charging",
            Instance::Dispatch(_) => "dispatch",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct File {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    charging: Option<ChargingInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dispatch: Option<DispatchInstance>,
}

#[derive(Deserialize)]
struct VersionOnly {
    version: Option<u32>,
}

pub fn serialize_instance(inst: &Instance) -> String {
    let file = match inst {
        Instance::Charging(c) => File { version: FORMAT_VERSION, charging: Some(c.clone()), dispatch: None },
        Instance::Dispatch(d) => File { version: FORMAT_VERSION, charging: None, dispatch: Some(d.clone()) },
    };
    toml::to_string(&file).expect("instances always serialize")
}

fn line_of(text: &str, span: Option<std::ops::Range<usize>>) -> usize {
    span.map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0)
}

/// Name in the first backtick pair of a serde message, e.g. "missing field `b`".
fn field_of(msg: &str) -> String {
    let mut parts = msg.split('`');
    parts.next();
    parts.next().unwrap_or("").to_string()
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    Error::Parse { line: line_of(text, e.span()), field: field_of(&msg), msg }
}

pub fn parse_instance_str(text: &str) -> Result<Instance> {
    let v: VersionOnly = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    match v.version {
        None => return Err(Error::Parse { line: 0, field: "version".into(), msg: "missing field `version`".into() }),
        Some(found) if found != FORMAT_VERSION => return Err(Error::Version { found, expected: FORMAT_VERSION }),
        Some(_) => {}
    }
    let f: File = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let inst = match (f.charging, f.dispatch) {
        (Some(c), None) => Instance::Charging(c),
        (None, Some(d)) => Instance::Dispatch(d),
        (None, None) => {
            return Err(Error::Parse {
                line: 0,
                field: "charging".into(),
                msg: "no [charging] or [dispatch] table".into(),
            })
        }
        (Some(_), Some(_)) => {
            return Err(Error::Parse { line: 0, field: "dispatch".into(), msg: "more than one instance table".into() })
        }
    };
    match &inst {
        Instance::Charging(c) => c.validate()?,
        Instance::Dispatch(d) => d.validate()?,
    }
    Ok(inst)
}

pub fn parse_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    parse_instance_str(&text)
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<()> {
    std::fs::write(path, serialize_instance(inst))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatch_default_round_trips_byte_identically() {
        let inst = Instance::Dispatch(DispatchInstance::default_instance());
        let text = serialize_instance(&inst);
        let back = parse_instance_str(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(serialize_instance(&back), text);
    }

    #[test]
    fn charging_round_trip_keeps_initial_price() {
        let inst = Instance::Charging(ChargingInstance::default_instance());
        let text = serialize_instance(&inst);
        assert!(text.contains("initial_price = 1.0"));
        assert_eq!(parse_instance_str(&text).unwrap(), inst);
    }

    #[test]
    fn missing_field_is_named() {
        let text = "version = 1\n\n[charging]\nb = [1.0]\ncapacity = 3.0\n";
        match parse_instance_str(text) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "s"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line() {
        let text = "version = 1\n\n[charging]\nb = [1.0]\ns = [\"x\"]\ncapacity = 3.0\n";
        match parse_instance_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let text = "version = 7\n\n[charging]\nb = [1.0]\ns = [1.0]\ncapacity = 3.0\n";
        assert!(matches!(parse_instance_str(text), Err(Error::Version { found: 7, expected: 1 })));
    }
}
