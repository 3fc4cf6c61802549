//! Records and rows. Single results print as `key = value` lines (TOML) or one JSON object;
//! sweeps print as CSV with a header or a JSON array. Field names are the same either way.

use std::io::{self, Write};

use anyhow::Result;
use serde::Serialize;

/// Bumped whenever a field is renamed or removed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Direct {
    pub schema_version: u32,
    pub command: &'static str,
    pub signature: String,
    pub value_re: f64,
    pub value_im: f64,
    pub err: f64,
    pub evals: usize,
}

#[derive(Serialize)]
pub struct Regularized {
    pub schema_version: u32,
    pub command: &'static str,
    pub signature: String,
    pub value_re: f64,
    pub value_im: f64,
    pub err: f64,
    pub evals: usize,
    pub sheets: usize,
    pub delta: f64,
    pub eps_p: f64,
    pub digamma: f64,
}

#[derive(Serialize)]
pub struct Prefactor {
    pub schema_version: u32,
    pub command: &'static str,
    pub signature: String,
    pub prefactor_re: f64,
    pub prefactor_im: f64,
    pub prefactor_abs: f64,
}

#[derive(Serialize)]
pub struct Verify {
    pub schema_version: u32,
    pub command: &'static str,
    pub signature: String,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub lhs_err: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub prefactor_re: f64,
    pub prefactor_im: f64,
    pub direct_re: f64,
    pub direct_im: f64,
    pub direct_err: f64,
    pub fitted_phase_re: f64,
    pub fitted_phase_im: f64,
    pub predicted_phase_re: f64,
    pub predicted_phase_im: f64,
    pub rel_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Serialize)]
pub struct Genus {
    pub schema_version: u32,
    pub command: &'static str,
    pub edges: usize,
    pub genus: i64,
    pub genus_from_cells: i64,
}

#[derive(Serialize)]
pub struct MonodromyRow {
    pub schema_version: u32,
    pub facet: String,
    pub measured_re: f64,
    pub measured_im: f64,
    pub expected_re: f64,
    pub expected_im: f64,
    pub abs_err: f64,
    /// Per-factor windings, space separated.
    pub windings: String,
}

#[derive(Serialize)]
pub struct ContinueRow {
    pub schema_version: u32,
    pub param: String,
    pub x: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub err: f64,
    pub prefactor_re: f64,
    pub prefactor_im: f64,
    pub status: String,
}

#[derive(Serialize)]
pub struct TraceRow {
    pub schema_version: u32,
    pub eps_p: f64,
    pub r: f64,
    pub p_re: f64,
    pub p_im: f64,
}

pub struct Emitter {
    json: bool,
    out: io::BufWriter<io::Stdout>,
}

impl Emitter {
    pub fn new(json: bool) -> Self {
        Emitter { json, out: io::BufWriter::new(io::stdout()) }
    }

    pub fn record<T: Serialize>(&mut self, r: &T) -> Result<()> {
        if self.json {
            serde_json::to_writer_pretty(&mut self.out, r)?;
            writeln!(self.out)?;
        } else {
            write!(self.out, "{}", toml::to_string(r)?)?;
        }
        Ok(())
    }

    pub fn rows<T: Serialize>(&mut self, rows: &[T]) -> Result<()> {
        if self.json {
            serde_json::to_writer_pretty(&mut self.out, rows)?;
            writeln!(self.out)?;
        } else {
            let mut w = csv::Writer::from_writer(&mut self.out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn finish(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
