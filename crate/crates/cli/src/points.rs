use std::path::Path;

use entroball::{BoxDomain, EmpiricalMeasure};

use crate::error::{CliError, Result};

/// Reads one atom per CSV row. A first row that does not parse as numbers is
/// taken as a header and skipped; rows are numbered from 1 after it.
pub fn load_points_csv(path: &Path, domain: &BoxDomain) -> Result<EmpiricalMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let err = |row, message: String| CliError::Points {
        path: path.to_owned(),
        row,
        message,
    };
    let mut points = Vec::new();
    let mut row = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, row + 1, e))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse).collect();
        let point = match parsed {
            Ok(p) => p,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(err(row + 1, format!("not a number ({e})"))),
        };
        row += 1;
        if point.len() != domain.dim() {
            return Err(err(
                row,
                format!("expected {} columns, found {}", domain.dim(), point.len()),
            ));
        }
        if !domain.contains(&point) {
            return Err(err(row, format!("point {point:?} lies outside the domain")));
        }
        points.push(point);
    }
    if points.is_empty() {
        return Err(err(0, "no points".into()));
    }
    Ok(EmpiricalMeasure::new(domain, points)?)
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_owned(),
            source,
        },
        kind => CliError::Points {
            path: path.to_owned(),
            row,
            message: format!("{kind:?}"),
        },
    }
}
