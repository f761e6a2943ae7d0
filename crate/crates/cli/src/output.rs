//! Report and path files. Every CSV starts with a `# massfield <kind> v<N>`
//! comment line so that schema changes are visible in golden comparisons.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use massfield::{MassField, SamplePath, TestReport, TimeGrid};

use crate::runner::{RunError, TestOutcome};

pub const AGGREGATE_HEADER: &str = "# massfield aggregate v1";
pub const PATHS_HEADER: &str = "# massfield paths v1";
pub const FIELDS_HEADER: &str = "# massfield fields v1";
pub const ATOMS_HEADER: &str = "# massfield atoms v1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub fn write_reports(dir: &Path, test: &str, reports: &[TestReport]) -> Result<(), RunError> {
    let path = dir.join(format!("{test}.json"));
    let mut json = serde_json::to_string_pretty(reports).expect("reports serialize");
    json.push('\n');
    std::fs::write(&path, json).map_err(io_err(&path))
}

/// CSV writer behind a version comment line.
fn versioned(path: &Path, header: &str) -> Result<csv::Writer<BufWriter<File>>, RunError> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(file, "{header}").map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn pass_label(pass: Option<bool>) -> &'static str {
    match pass {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "none",
    }
}

/// One row per report.
pub fn write_aggregate(path: &Path, outcomes: &[TestOutcome]) -> Result<(), RunError> {
    let mut w = versioned(path, AGGREGATE_HEADER)?;
    w.write_record([
        "test",
        "check",
        "mandatory",
        "params",
        "statistic",
        "threshold",
        "pass",
        "seed",
        "note",
    ])
    .map_err(csv_err(path))?;
    for o in outcomes {
        for r in &o.reports {
            let params = r
                .params
                .iter()
                .filter(|(k, _)| k.as_str() != "test")
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                o.test,
                &r.name,
                if o.mandatory { "yes" } else { "no" },
                &params,
                &r.statistic.to_string(),
                &r.threshold.to_string(),
                pass_label(r.pass),
                &r.seed.to_string(),
                r.note.as_deref().unwrap_or(""),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn keep(grid: TimeGrid, every: usize) -> impl Iterator<Item = usize> {
    let n = grid.n_steps();
    (0..=n).filter(move |k| k % every == 0 || *k == n)
}

/// `t,value` for one path.
pub fn write_path(path: &Path, z: &SamplePath, every: usize) -> Result<(), RunError> {
    let mut w = versioned(path, PATHS_HEADER)?;
    w.write_record(["t", "value"]).map_err(csv_err(path))?;
    let grid = z.grid();
    for k in keep(grid, every) {
        w.serialize((grid.time(k), z.value(k)))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `replicate,x,t,value` for the cumulative field at every x-grid point.
pub fn write_fields(path: &Path, fields: &[MassField], every: usize) -> Result<(), RunError> {
    let mut w = versioned(path, FIELDS_HEADER)?;
    w.write_record(["replicate", "x", "t", "value"])
        .map_err(csv_err(path))?;
    for (rep, f) in fields.iter().enumerate() {
        let grid = f.grid();
        for (j, &x) in f.x_grid().iter().enumerate() {
            for k in keep(grid, every) {
                w.serialize((rep, x, grid.time(k), f.cumulative(j, k)))
                    .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// `replicate,xi,birth_level,t,value` for every excursion atom, over the
/// atom's support only.
pub fn write_atoms(
    path: &Path,
    atoms: &[Vec<massfield::ExcursionAtom>],
    every: usize,
) -> Result<(), RunError> {
    let mut w = versioned(path, ATOMS_HEADER)?;
    w.write_record(["replicate", "xi", "birth_level", "t", "value"])
        .map_err(csv_err(path))?;
    for (rep, list) in atoms.iter().enumerate() {
        for a in list {
            let grid = a.path.grid();
            let end = a.path.support_end();
            for k in keep(grid, every).filter(|&k| k >= a.path.onset() && k <= end) {
                w.serialize((rep, a.xi, a.birth_level, grid.time(k), a.path.value(k)))
                    .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}
