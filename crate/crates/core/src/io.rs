//! CSV and JSON exports. Floats are written with 17 significant digits so
//! files are byte-stable across runs.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::analysis::{CouplingKey, Spectrum};
use crate::emission::FieldTrace;
use crate::engine::{MagnetizationTrace, TraceSample};
use crate::error::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

pub fn write_trace_csv<W: Write>(w: W, trace: &MagnetizationTrace) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "m_x", "m_y", "m_z"])?;
    for s in &trace.samples {
        out.write_record([fmt_f64(s.t), fmt_f64(s.m[0]), fmt_f64(s.m[1]), fmt_f64(s.m[2])])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]; the encoding interval is supplied
/// by the caller since the file stores wall-clock times.
pub fn read_trace_csv<R: Read>(r: R, encoding_interval: f64, n_h: usize) -> Result<MagnetizationTrace> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "m_x", "m_y", "m_z"] {
        return Err(Error::InvalidParameter(format!("unexpected trace header {headers:?}")));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = parse_row(&rec, 4)?;
        samples.push(TraceSample {
            t: v[0],
            m: [v[1], v[2], v[3]],
        });
    }
    Ok(MagnetizationTrace {
        samples,
        n_h,
        encoding_interval,
    })
}

fn parse_row(rec: &csv::StringRecord, n: usize) -> Result<Vec<f64>> {
    if rec.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} columns at line {}, got {}",
            rec.position().map(|p| p.line()).unwrap_or(0),
            rec.len()
        )));
    }
    rec.iter()
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| {
                Error::InvalidParameter(format!(
                    "bad number `{s}` at line {}: {e}",
                    rec.position().map(|p| p.line()).unwrap_or(0)
                ))
            })
        })
        .collect()
}

pub fn write_field_csv<W: Write>(w: W, field: &FieldTrace) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "b0"])?;
    for s in &field.samples {
        out.write_record([fmt_f64(s.t), fmt_f64(s.b0)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_signal_csv<W: Write>(w: W, times: &[f64], values: &[f64]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["stage", "t", "estimate"])?;
    for (k, (t, v)) in times.iter().zip(values).enumerate() {
        out.write_record([(k + 1).to_string(), fmt_f64(*t), fmt_f64(*v)])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `stage,t,estimate` rows; returns (times, values).
pub fn read_signal_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["stage", "t", "estimate"] {
        return Err(Error::InvalidParameter(format!("unexpected signal header {headers:?}")));
    }
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let row = parse_row(&rec?, 3)?;
        t.push(row[1]);
        v.push(row[2]);
    }
    Ok((t, v))
}

pub fn write_spectrum_csv<W: Write>(w: W, spec: &Spectrum) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["freq_hz", "magnitude"])?;
    for (f, m) in spec.freqs.iter().zip(&spec.magnitude) {
        out.write_record([fmt_f64(*f), fmt_f64(*m)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_samples_csv<W: Write>(w: W, keys: &[CouplingKey], samples: &[Vec<f64>]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(keys.iter().map(|k| format!("{k}_hz")))?;
    for s in samples {
        out.write_record(s.iter().map(|v| fmt_f64(*v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `bytes` to `path` through a temporary file and a rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip_is_exact() {
        let trace = MagnetizationTrace {
            samples: vec![
                TraceSample {
                    t: 0.1,
                    m: [1.0 / 3.0, -2e-17, 0.5],
                },
                TraceSample {
                    t: 0.2,
                    m: [std::f64::consts::PI, 0.0, -1.0],
                },
            ],
            n_h: 3,
            encoding_interval: 0.1,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let back = read_trace_csv(buf.as_slice(), 0.1, 3).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn signal_round_trip_and_errors() {
        let mut buf = Vec::new();
        write_signal_csv(&mut buf, &[0.5, 1.0], &[1e-4, -3e-5]).unwrap();
        let (t, v) = read_signal_csv(buf.as_slice()).unwrap();
        assert_eq!(t, vec![0.5, 1.0]);
        assert_eq!(v, vec![1e-4, -3e-5]);
        assert!(read_signal_csv("stage,t,estimate\n1,0.1,abc\n".as_bytes()).is_err());
        assert!(read_signal_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("jc-io-{}", std::process::id()));
        let p = dir.join("x.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
