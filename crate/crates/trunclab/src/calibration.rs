//! The calibration table as CSV.
//!
//! Leading `#` lines document the method and the seeding; each row carries
//! the settings and seed that reproduce it.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use trunclab_core::percolation::{LatticeFamily, SEED_RULE};
use trunclab_core::thresholds::{CalibrationRow, CalibrationTable, METHOD};

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("calibration table: {0}")]
    Io(#[from] io::Error),
    #[error("calibration table: {0}")]
    Csv(#[from] csv::Error),
    #[error("calibration table row {row}: {msg}")]
    Row { row: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
struct Record {
    family: String,
    d: usize,
    k: Option<u32>,
    p_hat: f64,
    uncertainty: f64,
    bracket_lo: f64,
    bracket_hi: f64,
    l_schedule: String,
    bracket_tol: f64,
    scan_step: f64,
    trials_per_probe: u64,
    master_seed: u64,
    reference: Option<f64>,
}

impl From<&CalibrationRow> for Record {
    fn from(r: &CalibrationRow) -> Self {
        let (family, d, k) = match r.family {
            LatticeFamily::Hypercubic { d } => ("hypercubic", d, None),
            LatticeFamily::Slab { d, k } => ("slab", d, Some(k)),
        };
        Self {
            family: family.into(),
            d,
            k,
            p_hat: r.p_hat,
            uncertainty: r.uncertainty,
            bracket_lo: r.bracket_lo,
            bracket_hi: r.bracket_hi,
            l_schedule: r.l_schedule.iter().map(u32::to_string).collect::<Vec<_>>().join(";"),
            bracket_tol: r.bracket_tol,
            scan_step: r.scan_step,
            trials_per_probe: r.trials_per_probe,
            master_seed: r.master_seed,
            reference: r.reference,
        }
    }
}

impl Record {
    fn into_row(self) -> Result<CalibrationRow, String> {
        let family = match (self.family.as_str(), self.k) {
            ("hypercubic", None) => LatticeFamily::Hypercubic { d: self.d },
            ("slab", Some(k)) => LatticeFamily::Slab { d: self.d, k },
            (f, _) => return Err(format!("bad family `{f}` or K")),
        };
        family.validate().map_err(|e| e.to_string())?;
        let l_schedule = self
            .l_schedule
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| format!("bad L schedule `{}`", self.l_schedule))
            })
            .collect::<Result<_, _>>()?;
        Ok(CalibrationRow {
            family,
            p_hat: self.p_hat,
            uncertainty: self.uncertainty,
            bracket_lo: self.bracket_lo,
            bracket_hi: self.bracket_hi,
            l_schedule,
            bracket_tol: self.bracket_tol,
            scan_step: self.scan_step,
            trials_per_probe: self.trials_per_probe,
            master_seed: self.master_seed,
            reference: self.reference,
        })
    }
}

pub fn header_lines() -> Vec<String> {
    vec![
        "# trunclab calibration table".into(),
        format!(
            "# method: {METHOD}; p_hat is where the left-right crossing probability of the \
             (L+2)x(L+1) box equals 1/2 at the largest L of l_schedule"
        ),
        "# uncertainty: half the final bracket plus 1.96 x 0.5/sqrt(trials) divided by the crossing slope".into(),
        format!("# seeds: master_seed per row; {SEED_RULE}"),
        "# reference: literature value for orientation only, never used in decisions".into(),
    ]
}

pub fn write_table<W: Write>(table: &CalibrationTable, mut out: W) -> Result<(), CalibrationError> {
    for line in header_lines() {
        writeln!(out, "{line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    if table.rows.is_empty() {
        w.write_record([
            "family",
            "d",
            "k",
            "p_hat",
            "uncertainty",
            "bracket_lo",
            "bracket_hi",
            "l_schedule",
            "bracket_tol",
            "scan_step",
            "trials_per_probe",
            "master_seed",
            "reference",
        ])?;
    }
    for row in &table.rows {
        w.serialize(Record::from(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: io::Read>(input: R) -> Result<CalibrationTable, CalibrationError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut table = CalibrationTable::new();
    for (i, record) in r.deserialize::<Record>().enumerate() {
        let row = record?
            .into_row()
            .map_err(|msg| CalibrationError::Row { row: i + 1, msg })?;
        table.upsert(row);
    }
    Ok(table)
}

/// Load the table at `path`, or an empty table when the file does not exist.
pub fn load(path: &Path) -> Result<CalibrationTable, CalibrationError> {
    match fs::File::open(path) {
        Ok(f) => read_table(io::BufReader::new(f)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(CalibrationTable::new()),
        Err(e) => Err(e.into()),
    }
}

pub fn save(table: &CalibrationTable, path: &Path) -> Result<(), CalibrationError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_table(table, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}
