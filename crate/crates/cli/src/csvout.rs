//! Deterministic CSV output: fixed column order, shortest-roundtrip float
//! formatting, rows sorted by the caller. Every row carries the artifact
//! version, the configuration hash and the master seed.

use std::io::Write;
use std::path::PathBuf;

use spherecrit_core::Result;

use crate::config::ExperimentConfig;

pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Write `<output_dir>/<name>.csv` with the standard meta columns prepended.
pub fn write_report(
    cfg: &ExperimentConfig,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("{}.csv", cfg.name));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    write!(f, "experiment,version,config_hash,seed")?;
    for c in columns {
        write!(f, ",{c}")?;
    }
    writeln!(f)?;
    let meta = format!(
        "{},{},{},{}",
        cfg.name,
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        cfg.seed
    );
    for row in rows {
        write!(f, "{meta}")?;
        for cell in row {
            write!(f, ",{cell}")?;
        }
        writeln!(f)?;
    }
    Ok(path)
}
