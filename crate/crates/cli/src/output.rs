use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sigbasis::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Rendered command output.
pub enum Rendered {
    Text(String),
    Json { command: String, config: Value, result: Value },
    Csv { command: String, config: Value, header: Vec<String>, rows: Vec<Vec<String>> },
    Bytes(Vec<u8>),
}

impl Rendered {
    pub fn json(command: &str, config: &impl Serialize, result: &impl Serialize) -> Result<Self> {
        Ok(Rendered::Json {
            command: command.into(),
            config: serde_json::to_value(config)?,
            result: serde_json::to_value(result)?,
        })
    }

    pub fn csv(command: &str, config: &impl Serialize, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        Ok(Rendered::Csv { command: command.into(), config: serde_json::to_value(config)?, header, rows })
    }

    fn into_bytes(self) -> Result<Vec<u8>> {
        Ok(match self {
            Rendered::Text(s) => {
                let mut s = s;
                if !s.ends_with('\n') {
                    s.push('\n');
                }
                s.into_bytes()
            }
            Rendered::Json { command, config, result } => {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "command": command,
                    "config": config,
                    "result": result,
                });
                let mut s = serde_json::to_string_pretty(&doc)?;
                s.push('\n');
                s.into_bytes()
            }
            Rendered::Csv { command, config, header, rows } => {
                let mut s = format!("# schema_version={SCHEMA_VERSION}\n# command={command}\n# config={config}\n");
                s.push_str(&header.join(","));
                s.push('\n');
                for r in rows {
                    s.push_str(&r.join(","));
                    s.push('\n');
                }
                s.into_bytes()
            }
            Rendered::Bytes(b) => b,
        })
    }

    pub fn emit(self, out: Option<&Path>) -> Result<()> {
        let bytes = self.into_bytes()?;
        match out {
            Some(p) => File::create(p)?.write_all(&bytes)?,
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                lock.write_all(&bytes)?;
                lock.flush()?;
            }
        }
        Ok(())
    }
}

/// Strips the output envelope, if present.
pub fn unwrap_envelope(v: Value) -> Value {
    match v {
        Value::Object(mut m) if m.contains_key("schema_version") && m.contains_key("result") => {
            m.remove("result").unwrap_or(Value::Null)
        }
        other => other,
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant(_) => 2,
        _ => 1,
    }
}
