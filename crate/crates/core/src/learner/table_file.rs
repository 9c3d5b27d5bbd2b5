//! Versioned text format for trained `(Q, M)` pairs.
//!
//! ```text
//! # hitl-table v1
//! # map = trap_world
//! # mode = full
//! # gamma = 0.95
//! # m_update_mode = corrected
//! # config_hash = 3f2a...
//! # n_actions = 4
//! # default_value = 0
//! obs_key,action,q,m,visits
//! 9223372041149743105,0,-1.25,4.5,311
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{ObsKey, ObservationMode};
use crate::{Error, Result};

use super::{MUpdateMode, ValueTable};

const MAGIC: &str = "hitl-table v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub map: String,
    pub mode: ObservationMode,
    pub gamma: f64,
    pub m_update_mode: MUpdateMode,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableFile {
    pub meta: TableMeta,
    pub q: ValueTable,
    pub m: ValueTable,
}

#[derive(Serialize, Deserialize)]
struct Record {
    obs_key: u64,
    action: usize,
    q: f64,
    m: f64,
    visits: u64,
}

impl TableFile {
    pub fn to_text(&self) -> String {
        let mut out = format!("# {MAGIC}\n");
        let meta = &self.meta;
        for (k, v) in [
            ("map", meta.map.clone()),
            ("mode", meta.mode.to_string()),
            ("gamma", meta.gamma.to_string()),
            ("m_update_mode", meta.m_update_mode.to_string()),
            ("config_hash", meta.config_hash.clone()),
            ("n_actions", self.q.n_actions().to_string()),
            ("default_value", self.q.default_value().to_string()),
        ] {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut keys = self.q.keys();
        keys.extend(self.m.keys());
        keys.sort_unstable();
        keys.dedup();
        // Header is emitted by serialize() on the first record; write it by hand for empty tables.
        if keys.is_empty() {
            w.write_record(["obs_key", "action", "q", "m", "visits"]).expect("in-memory write");
        }
        for key in keys {
            for action in 0..self.q.n_actions() {
                w.serialize(Record {
                    obs_key: key.0,
                    action,
                    q: self.q.get(key, action),
                    m: self.m.get(key, action),
                    visits: self.q.visits(key, action),
                })
                .expect("in-memory write");
            }
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv output is utf-8"));
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(|l| l.trim_start_matches('#').trim()) != Some(MAGIC) {
            return Err(Error::format(origin, format!("missing `{MAGIC}` header")));
        }
        let mut fields = BTreeMap::new();
        for line in text.lines().skip(1).take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').split_once('=') {
                fields.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let field =
            |name: &str| fields.get(name).ok_or_else(|| Error::format(origin, format!("missing header field {name}")));
        let bad = |name: &str| Error::format(origin, format!("bad value for {name}"));
        let meta = TableMeta {
            map: field("map")?.clone(),
            mode: field("mode")?.parse().map_err(|_| bad("mode"))?,
            gamma: field("gamma")?.parse().map_err(|_| bad("gamma"))?,
            m_update_mode: field("m_update_mode")?.parse().map_err(|_| bad("m_update_mode"))?,
            config_hash: field("config_hash")?.clone(),
        };
        let n_actions: usize = field("n_actions")?.parse().map_err(|_| bad("n_actions"))?;
        let default_value: f64 = field("default_value")?.parse().map_err(|_| bad("default_value"))?;
        if !(1..=super::MAX_ACTIONS).contains(&n_actions) {
            return Err(bad("n_actions"));
        }
        let mut q = ValueTable::new(n_actions, default_value);
        let mut m = ValueTable::new(n_actions, default_value);
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        for rec in reader.deserialize::<Record>() {
            let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
            if rec.action >= n_actions {
                return Err(Error::format(origin, format!("action {} out of range", rec.action)));
            }
            q.insert(ObsKey(rec.obs_key), rec.action, rec.q, rec.visits);
            m.insert(ObsKey(rec.obs_key), rec.action, rec.m, rec.visits);
        }
        Ok(TableFile { meta, q, m })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
