//! Uniformly sampled time series and their on-disk formats.
//!
//! CSV: `#`-prefixed `key: value` metadata lines, a header row `t,<col>...`,
//! then one row per sample. LF line endings, `.` decimal separator.
//!
//! Binary (all integers and floats little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `HLTJ`                              |
//! | 4            | format version, u32 (= 1)                 |
//! | 8            | metadata length `m`, u64                  |
//! | m            | metadata, UTF-8 JSON                      |
//! | 8            | row count `r`, u64                        |
//! | 8            | column count `c`, u64                     |
//! | 8·r·c        | values, f64, row-major                    |

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HLTJ";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub params_digest: String,
    pub seed: u64,
    /// The process reached a state with zero total rate and stayed there.
    #[serde(default)]
    pub absorbed: bool,
    /// Number of step halvings performed by the fixed-step simulator.
    #[serde(default)]
    pub step_halvings: u32,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub columns: Vec<String>,
    /// Row-major samples, `columns.len()` values per row.
    pub values: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, columns: Vec<String>, meta: TrajectoryMeta) -> Self {
        Trajectory {
            t0,
            dt,
            columns,
            values: Vec::new(),
            meta,
        }
    }

    pub fn from_column(
        t0: f64,
        dt: f64,
        name: &str,
        values: Vec<f64>,
        meta: TrajectoryMeta,
    ) -> Self {
        Trajectory {
            t0,
            dt,
            columns: vec![name.to_string()],
            values,
            meta,
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.values.len() / self.columns.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.width());
        self.values.extend_from_slice(row);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(j)
            .step_by(self.width())
            .copied()
            .collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|j| self.column(j))
    }

    /// Drops the leading `fraction` of samples and shifts `t0` accordingly.
    pub fn without_burn_in(&self, fraction: f64) -> Trajectory {
        let skip = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
        let w = self.width();
        Trajectory {
            t0: self.time(skip),
            dt: self.dt,
            columns: self.columns.clone(),
            values: self.values[skip * w..].to_vec(),
            meta: self.meta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !self.t0.is_finite() {
            return Err(Error::InvalidParams("t0 must be finite".into()));
        }
        if self.columns.is_empty() || !self.values.len().is_multiple_of(self.columns.len()) {
            return Err(Error::InvalidParams("values do not fill whole rows".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# model: {}", self.meta.model);
        let _ = writeln!(s, "# params_digest: {}", self.meta.params_digest);
        let _ = writeln!(s, "# seed: {}", self.meta.seed);
        let _ = writeln!(s, "# t0: {:?}", self.t0);
        let _ = writeln!(s, "# dt: {:?}", self.dt);
        let _ = writeln!(s, "# absorbed: {}", self.meta.absorbed);
        let _ = writeln!(s, "# step_halvings: {}", self.meta.step_halvings);
        for (k, v) in &self.meta.extra {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push('t');
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for i in 0..self.len() {
            let _ = write!(s, "{:?}", self.time(i));
            for v in self.row(i) {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Trajectory> {
        let mut meta = TrajectoryMeta::default();
        let mut t0 = None;
        let mut dt = None;
        let mut columns: Option<Vec<String>> = None;
        let mut values = Vec::new();
        let mut rows = 0usize;
        for (ln, line) in text.lines().enumerate() {
            let line_no = ln + 1;
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once(':')
                    .ok_or_else(|| perr("metadata line without ':'".into()))?;
                let (k, v) = (k.trim(), v.trim());
                let num = |v: &str| v.parse::<f64>().map_err(|e| perr(format!("{k}: {e}")));
                match k {
                    "model" => meta.model = v.to_string(),
                    "params_digest" => meta.params_digest = v.to_string(),
                    "seed" => meta.seed = v.parse().map_err(|e| perr(format!("seed: {e}")))?,
                    "t0" => t0 = Some(num(v)?),
                    "dt" => dt = Some(num(v)?),
                    "absorbed" => {
                        meta.absorbed = v.parse().map_err(|e| perr(format!("absorbed: {e}")))?
                    }
                    "step_halvings" => {
                        meta.step_halvings =
                            v.parse().map_err(|e| perr(format!("step_halvings: {e}")))?
                    }
                    _ => {
                        meta.extra.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            match &columns {
                None => {
                    let mut fields = line.split(',');
                    if fields.next() != Some("t") {
                        return Err(perr("header must start with 't'".into()));
                    }
                    let cols: Vec<String> = fields.map(str::to_string).collect();
                    if cols.is_empty() || cols.iter().any(|c| c.is_empty()) {
                        return Err(perr("header needs at least one named column".into()));
                    }
                    columns = Some(cols);
                }
                Some(cols) => {
                    let mut n = 0;
                    for (i, f) in line.split(',').enumerate() {
                        let v: f64 = f.parse().map_err(|e| perr(format!("field {i}: {e}")))?;
                        if i > 0 {
                            values.push(v);
                        }
                        n += 1;
                    }
                    if n != cols.len() + 1 {
                        return Err(perr(format!("expected {} fields, got {n}", cols.len() + 1)));
                    }
                    rows += 1;
                }
            }
        }
        let columns = columns.ok_or(Error::Parse {
            line: 0,
            msg: "missing header row".into(),
        })?;
        let traj = Trajectory {
            t0: t0.unwrap_or(0.0),
            dt: dt.ok_or(Error::Parse {
                line: 0,
                msg: "missing '# dt:' metadata".into(),
            })?,
            columns,
            values,
            meta,
        };
        debug_assert_eq!(traj.len(), rows);
        traj.validate().map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(traj)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let header = BinaryHeader {
            t0: self.t0,
            dt: self.dt,
            columns: self.columns.clone(),
            meta: self.meta.clone(),
        };
        let meta = serde_json::to_vec(&header).expect("metadata serializes");
        let mut out = Vec::with_capacity(32 + meta.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.width() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Trajectory> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.err("bad magic"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(r.err(&format!("unsupported version {version}")));
        }
        let meta_len = r.u64()?;
        let meta_len = usize::try_from(meta_len).map_err(|_| r.err("metadata length overflow"))?;
        let header: BinaryHeader = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| r.err(&format!("metadata: {e}")))?;
        let rows = r.u64()?;
        let width = r.u64()?;
        if width as usize != header.columns.len() {
            return Err(r.err("column count disagrees with metadata"));
        }
        let count = rows
            .checked_mul(width)
            .and_then(|c| c.checked_mul(8))
            .and_then(|b| usize::try_from(b).ok())
            .ok_or_else(|| r.err("payload size overflow"))?;
        let payload = r.take(count)?;
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes"));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let traj = Trajectory {
            t0: header.t0,
            dt: header.dt,
            columns: header.columns,
            values,
            meta: header.meta,
        };
        traj.validate().map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(traj)
    }
}

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    t0: f64,
    dt: f64,
    columns: Vec<String>,
    meta: TrajectoryMeta,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            line: 0,
            msg: format!("byte {}: {msg}", self.pos),
        }
    }
}

/// Short hex digest of any serializable parameter bundle.
pub fn params_digest<T: Serialize>(params: &T) -> String {
    let json = serde_json::to_vec(params).expect("params serialize");
    let hash = Sha256::digest(&json);
    hex::encode(&hash[..8])
}
