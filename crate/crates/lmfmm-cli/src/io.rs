use std::path::Path;

use lmfmm::expansions::Point2;
use lmfmm::fmm::Particle;
use num_complex::Complex64;

use crate::CliError;

/// Decimal text with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let h = r.headers().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if h.iter().collect::<Vec<_>>() != header {
        return Err(CliError::Usage(format!("{}: expected header {}, found {}", path.display(), header.join(","), h.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(r)
}

fn rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::new();
    for (i, rec) in reader(path, header)?.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        out.push(vals);
    }
    Ok(out)
}

pub fn read_sources(path: &Path) -> Result<Vec<Particle>, CliError> {
    Ok(rows(path, &["x", "y", "q_re", "q_im"])?
        .into_iter()
        .map(|v| Particle { position: [v[0], v[1]], charge: Complex64::new(v[2], v[3]) })
        .collect())
}

pub fn read_targets(path: &Path) -> Result<Vec<Point2>, CliError> {
    Ok(rows(path, &["x", "y"])?.into_iter().map(|v| [v[0], v[1]]).collect())
}

pub fn write_potentials(path: &Path, targets: &[Point2], phi: &[Complex64]) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["x", "y", "phi_re", "phi_im"]).map_err(err)?;
    for (x, v) in targets.iter().zip(phi) {
        w.write_record([num(x[0]), num(x[1]), num(v.re), num(v.im)]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
