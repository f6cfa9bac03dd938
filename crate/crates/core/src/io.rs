//! Channel file formats.
//!
//! JSON: `{"num_inputs": n, "num_outputs": m, "rows": [[...], ...]}` with an
//! optional free-form `"generator"` object recording how the channel was
//! produced. CSV: one row per input; lines starting with `#` are skipped.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{validate_channel, Channel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub num_inputs: usize,
    pub num_outputs: usize,
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl ChannelFile {
    pub fn from_channel(channel: &Channel) -> Self {
        Self {
            num_inputs: channel.num_inputs(),
            num_outputs: channel.num_outputs(),
            rows: channel.to_rows(),
            generator: None,
        }
    }

    pub fn into_channel(self) -> Result<Channel> {
        if self.rows.len() != self.num_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.num_inputs,
                found: self.rows.len(),
            });
        }
        let ch = validate_channel(&self.rows)?;
        if ch.num_outputs() != self.num_outputs {
            return Err(Error::DimensionMismatch {
                expected: self.num_outputs,
                found: ch.num_outputs(),
            });
        }
        Ok(ch)
    }
}

pub fn channel_from_json_str(s: &str) -> Result<Channel> {
    serde_json::from_str::<ChannelFile>(s)?.into_channel()
}

pub fn channel_to_json_string(channel: &Channel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ChannelFile::from_channel(channel))?)
}

pub fn channel_from_csv_str(s: &str) -> Result<Channel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(s.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number {f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    validate_channel(&rows)
}

/// Reads JSON or CSV, chosen by extension (`.csv` means CSV, anything else
/// is parsed as JSON).
pub fn read_channel(path: &Path) -> Result<Channel> {
    let text = fs::read_to_string(path)?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        channel_from_csv_str(&text)
    } else {
        channel_from_json_str(&text)
    }
}

pub fn write_channel_file(path: &Path, file: &ChannelFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
