//! JSON reports and CSV tables.

use anyhow::{Context, Result};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed_rng: u64,
    pub tol: f64,
    pub result: T,
}

pub struct Ctx {
    pub command: String,
    pub seed_rng: u64,
    pub tol: f64,
}

impl Ctx {
    pub fn report<T: Serialize>(&self, result: T) -> Report<'_, T> {
        Report { tool: "orbit", version: VERSION, command: &self.command, seed_rng: self.seed_rng, tol: self.tol, result }
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Pretty JSON to the file, or stdout when no path is given.
pub fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv(out: Option<&Path>, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn is_json(path: Option<&Path>) -> bool {
    path.and_then(|p| p.extension()).is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Column names `<prefix><basis>_re`, `<prefix><basis>_im` for each basis element.
pub fn element_columns(prefix: &str, basis: &[String]) -> Vec<String> {
    basis.iter().flat_map(|b| [format!("{prefix}{b}_re"), format!("{prefix}{b}_im")]).collect()
}

pub fn element_row(v: &orbit_core::GVector) -> Vec<f64> {
    (0..v.dim()).flat_map(|j| [v.re[j], v.im[j]]).collect()
}
