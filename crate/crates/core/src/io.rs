//! Output files: JSON lines with 17 significant digits, CSV grids,
//! little-endian complex vector dumps, and the per-run manifest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Round-trip exact decimal form, or `null` for non-finite values.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (Some(i), _, _) if !n.is_f64() => out.push_str(&i.to_string()),
            (_, Some(u), _) if !n.is_f64() => out.push_str(&u.to_string()),
            (_, _, Some(f)) => out.push_str(&format_f64(f)),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(x, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(x, out);
            }
            out.push('}');
        }
    }
}

/// One JSON line (without newline); floats carry 17 significant digits.
pub fn to_json_line<T: Serialize>(record: &T) -> Result<String> {
    let v = serde_json::to_value(record)?;
    let mut s = String::new();
    write_value(&v, &mut s);
    Ok(s)
}

/// JSON-lines sink whose first record names the manifest.
pub struct JsonlWriter<W: Write> {
    out: W,
}

impl JsonlWriter<BufWriter<File>> {
    pub fn create(path: &Path, kind: &str) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), kind)
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W, kind: &str) -> Result<Self> {
        let mut w = Self { out };
        w.record(&serde_json::json!({ "manifest": MANIFEST_NAME, "kind": kind }))?;
        Ok(w)
    }

    pub fn record<T: Serialize>(&mut self, r: &T) -> Result<()> {
        writeln!(self.out, "{}", to_json_line(r)?)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// CSV with a `# manifest:` comment line and a header row.
pub fn write_csv<W: Write>(mut out: W, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "# manifest: {MANIFEST_NAME}")?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::input(format!("csv: {e}"));
    w.write_record(columns).map_err(csv_err)?;
    for r in rows {
        if r.len() != columns.len() {
            return Err(Error::input(format!("row has {} values, header has {}", r.len(), columns.len())));
        }
        w.write_record(r.iter().map(|&x| if x.is_finite() { format!("{x:.16e}") } else { "nan".into() }))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), columns, rows)
}

/// Writes `(re, im)` pairs as little-endian `f64` plus a `<path>.json` sidecar.
pub fn write_complex_dump(path: &Path, data: &[Complex64], meta: Value) -> Result<PathBuf> {
    let mut out = BufWriter::new(File::create(path)?);
    for z in data {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    out.flush()?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    let sidecar = PathBuf::from(sidecar);
    let doc = serde_json::json!({
        "manifest": MANIFEST_NAME,
        "length": data.len(),
        "layout": "complex128 little-endian, re then im",
        "meta": meta,
    });
    std::fs::write(&sidecar, format!("{}\n", to_json_line(&doc)?))?;
    Ok(sidecar)
}

pub fn read_complex_dump(path: &Path) -> Result<Vec<Complex64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::input(format!("{} is not a complex128 dump", path.display())));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

/// Provenance written once per invocation next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: RunConfig,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub outputs: Vec<String>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn start(command: &str, args: Vec<String>, config: RunConfig) -> Self {
        Self {
            tool: "wsep".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            config,
            started_unix: unix_now(),
            finished_unix: None,
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = Some(unix_now());
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let x: f64 = 0.1 + 0.2;
        let line = to_json_line(&serde_json::json!({ "x": x, "n": 3, "s": "a\"b" })).unwrap();
        let back: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(back["x"].as_f64().unwrap().to_bits(), x.to_bits());
        assert_eq!(back["n"].as_u64(), Some(3));
        assert_eq!(back["s"], "a\"b");
        assert!(line.contains("3.0000000000000004e-1"));
    }

    #[test]
    fn non_finite_is_null() {
        let line = to_json_line(&vec![f64::NAN, 1.0]).unwrap();
        assert!(line.starts_with("[null,"));
    }

    #[test]
    fn serialization_is_deterministic() {
        let r = serde_json::json!({ "b": [1.5, -2.25e-300], "a": { "z": 1, "y": 2.0 } });
        assert_eq!(to_json_line(&r).unwrap(), to_json_line(&r).unwrap());
    }

    #[test]
    fn jsonl_header_references_manifest() {
        let mut w = JsonlWriter::new(Vec::new(), "spectrum").unwrap();
        w.record(&serde_json::json!({ "e": 1.0 })).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["manifest"], MANIFEST_NAME);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["a", "b"], &[vec![1.0, 2.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# manifest: {MANIFEST_NAME}"));
        assert_eq!(lines[1], "a,b");
        assert!(write_csv(Vec::new(), &["a"], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn complex_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let data = vec![Complex64::new(1.0, -2.0), Complex64::new(f64::MIN_POSITIVE, 3.5e100)];
        let sidecar = write_complex_dump(&path, &data, serde_json::json!({ "k": 0 })).unwrap();
        assert_eq!(read_complex_dump(&path).unwrap(), data);
        let meta: Value = serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
        assert_eq!(meta["length"], 2);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 32);
    }
}
