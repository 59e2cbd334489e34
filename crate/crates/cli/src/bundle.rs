//! A run bundle is a directory holding `archive.csv` (every evaluation) and
//! `run.toml` (the config that produced it plus run metadata).

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use spot_core::spot::{EvalArchive, SpotResult};
use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub const ARCHIVE_FILE: &str = "archive.csv";
pub const META_FILE: &str = "run.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub count: usize,
    pub msg: String,
    pub xbest: Vec<f64>,
    pub ybest: f64,
    #[serde(rename = "seedSPOT")]
    pub seed_spot: u64,
    #[serde(rename = "seedFun")]
    pub seed_fun: Option<u64>,
    /// Seed the next noisy evaluation would receive.
    #[serde(rename = "nextSeed")]
    pub next_seed: Option<u64>,
    /// Unix seconds.
    pub created: u64,
    pub updated: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Best-so-far value after each evaluation, stored when `plots` is set.
    #[serde(rename = "bestTrace")]
    pub best_trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub run: RunInfo,
    pub config: RunConfig,
}

impl RunMeta {
    pub fn from_result(config: &RunConfig, result: &SpotResult, seed_spot: u64, created: Option<u64>) -> Self {
        let now = unix_now();
        let archive = &result.archive;
        Self {
            run: RunInfo {
                count: archive.len(),
                msg: result.msg.clone(),
                xbest: result.xbest.clone(),
                ybest: result.ybest,
                seed_spot,
                seed_fun: config.seed_fun,
                next_seed: archive.last_seed().map(|s| s.wrapping_add(1)),
                created: created.unwrap_or(now),
                updated: now,
                warnings: result.warnings.clone(),
                best_trace: config.plots.unwrap_or(false).then(|| archive.best_trace()),
            },
            config: config.clone(),
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Shortest round-trip decimal; exponent form outside `[1e-5, 1e16)`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// Writes a numeric table with the given header. Values use the shortest
/// representation that parses back to the same f64.
pub fn write_table<W: Write>(w: W, header: &[String], rows: &DMatrix<f64>) -> CliResult<()> {
    let mut out = csv_writer(w);
    out.write_record(header).map_err(io_err)?;
    for r in 0..rows.nrows() {
        out.write_record(rows.row(r).iter().map(|v| fmt_num(*v))).map_err(io_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn x_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

pub fn write_archive<W: Write>(w: W, archive: &EvalArchive) -> CliResult<()> {
    let d = archive.dim().unwrap_or(0);
    let mut header = x_header(d);
    header.extend(["y", "seed", "replicate"].map(String::from));
    let mut out = csv_writer(w);
    out.write_record(&header).map_err(io_err)?;
    for r in 0..archive.len() {
        let mut rec: Vec<String> = archive.points()[r].iter().map(|v| fmt_num(*v)).collect();
        rec.push(fmt_num(archive.values()[r]));
        rec.push(archive.seeds()[r].map_or_else(|| "NA".to_string(), |s| s.to_string()));
        rec.push(archive.replicates()[r].to_string());
        out.write_record(&rec).map_err(io_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_archive<R: Read>(r: R) -> CliResult<EvalArchive> {
    let bad = |m: String| CliError::Bundle(m);
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols[cols.len() - 3..] != ["y", "seed", "replicate"] {
        return Err(bad(format!("unexpected archive header {cols:?}")));
    }
    let d = cols.len() - 3;
    if cols[..d].iter().zip(x_header(d)).any(|(a, b)| *a != b) {
        return Err(bad(format!("unexpected archive header {cols:?}")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut seeds = Vec::new();
    let mut reps = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> CliResult<f64> {
            rec[i].parse::<f64>().map_err(|_| bad(format!("row {}: bad number {:?}", line + 1, &rec[i])))
        };
        for c in 0..d {
            xs.push(num(c)?);
        }
        ys.push(num(d)?);
        seeds.push(match &rec[d + 1] {
            "NA" => None,
            s => Some(s.parse::<u64>().map_err(|_| bad(format!("row {}: bad seed {s:?}", line + 1)))?),
        });
        reps.push(rec[d + 2].parse::<usize>().map_err(|_| bad(format!("row {}: bad replicate", line + 1)))?);
    }
    let n = ys.len();
    if n == 0 {
        return Err(bad("archive has no rows".into()));
    }
    let x = DMatrix::from_row_slice(n, d, &xs);
    let archive = EvalArchive::from_parts(&x, &DVector::from_vec(ys), Some(seeds)).map_err(|e| bad(e.to_string()))?;
    if archive.replicates() != reps.as_slice() {
        return Err(bad("replicate column does not match repeated x values".into()));
    }
    Ok(archive)
}

pub fn save(dir: &Path, archive: &EvalArchive, meta: &RunMeta) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    write_archive(std::fs::File::create(dir.join(ARCHIVE_FILE))?, archive)?;
    let text = toml::to_string(meta).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    std::fs::write(dir.join(META_FILE), text)?;
    Ok(())
}

pub fn load(dir: &Path) -> CliResult<(EvalArchive, RunMeta)> {
    let bad = |m: String| CliError::Bundle(format!("{}: {m}", dir.display()));
    let meta_text = std::fs::read_to_string(dir.join(META_FILE)).map_err(|e| bad(format!("{META_FILE}: {e}")))?;
    let meta: RunMeta = toml::from_str(&meta_text).map_err(|e| bad(format!("{META_FILE}: {e}")))?;
    let file = std::fs::File::open(dir.join(ARCHIVE_FILE)).map_err(|e| bad(format!("{ARCHIVE_FILE}: {e}")))?;
    let archive = read_archive(file).map_err(|e| match e {
        CliError::Bundle(m) => bad(m),
        other => other,
    })?;
    if archive.len() != meta.run.count {
        return Err(bad(format!(
            "archive has {} rows but metadata count is {}",
            archive.len(),
            meta.run.count
        )));
    }
    if archive.dim() != Some(meta.config.lower.len()) {
        return Err(bad("archive width does not match the configured bounds".into()));
    }
    Ok((archive, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_round_trip_is_exact() {
        let mut a = EvalArchive::new();
        a.push(vec![0.1 + 0.2, -1e-300], 1.0 / 3.0, Some(7));
        a.push(vec![0.1 + 0.2, -1e-300], f64::INFINITY, Some(8));
        a.push(vec![5.0, 6.0], 2.5, None);
        let mut buf = Vec::new();
        write_archive(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,y,seed,replicate\n"));
        assert!(!text.contains('\r'));
        assert!(text.contains(",NA,1\n"));
        assert!(text.contains("-1e-300"));
        let b = read_archive(buf.as_slice()).unwrap();
        assert_eq!(a, b);
        let mut again = Vec::new();
        write_archive(&mut again, &b).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn numbers_parse_back_exactly() {
        for v in [0.0, -0.0, 1.0, 1e-5, 9.99e-6, 1e16, 123456.789, f64::MAX, f64::MIN_POSITIVE, 5e-324, f64::INFINITY] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(1e-7), "1e-7");
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let cases = [
            "x1,y,seed\n1,2,NA\n",
            "x1,y,seed,replicate\n1,abc,NA,1\n",
            "x1,y,seed,replicate\n1,2,NA,2\n",
            "x2,y,seed,replicate\n1,2,NA,1\n",
            "x1,y,seed,replicate\n",
        ];
        for text in cases {
            let err = read_archive(text.as_bytes()).unwrap_err();
            assert_eq!(err.exit_code(), 4, "{text}");
        }
    }
}
