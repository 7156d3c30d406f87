//! CSV and JSON emission with the resolved config embedded.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `#`-prefixed preamble naming the artifact version and every resolved key.
fn preamble(cfg: &RunConfig) -> String {
    let mut s = format!("# sd-lab {VERSION}\n# command = {}\n", cfg.command);
    for (k, v) in cfg.pairs() {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s
}

pub fn csv_bytes<T: Serialize>(cfg: &RunConfig, records: &[T]) -> Result<Vec<u8>, CliError> {
    let mut buf = preamble(cfg).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in records {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Parse records written by [`csv_bytes`], skipping the preamble.
pub fn read_csv_records<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    r.deserialize().map(|rec| rec.map_err(CliError::from)).collect()
}

/// The resolved config as recorded in a preamble or JSON document.
pub fn embedded_config(cfg: &RunConfig) -> serde_json::Map<String, serde_json::Value> {
    cfg.pairs()
        .into_iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
        .collect()
}

pub fn json_bytes<T: Serialize>(cfg: &RunConfig, records: &T) -> Result<Vec<u8>, CliError> {
    let doc = serde_json::json!({
        "version": VERSION,
        "command": cfg.command,
        "config": embedded_config(cfg),
        "records": records,
    });
    let mut out = serde_json::to_vec_pretty(&doc)?;
    out.push(b'\n');
    Ok(out)
}

/// Records from a document written by [`json_bytes`].
pub fn read_json_records<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CliError> {
    let mut doc: serde_json::Value = serde_json::from_slice(bytes)?;
    let records = doc
        .get_mut("records")
        .map(serde_json::Value::take)
        .ok_or_else(|| CliError::Format("document has no records".into()))?;
    Ok(serde_json::from_value(records)?)
}

/// Encode in the configured format.
pub fn encode<T: Serialize>(cfg: &RunConfig, records: &[T]) -> Result<Vec<u8>, CliError> {
    match cfg.get("format") {
        "json" => json_bytes(cfg, &records),
        _ => csv_bytes(cfg, records),
    }
}

pub fn extension(cfg: &RunConfig) -> &'static str {
    match cfg.get("format") {
        "json" => "json",
        _ => "csv",
    }
}
