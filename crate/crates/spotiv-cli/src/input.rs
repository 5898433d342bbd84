//! CSV loading. Expected header: `y,d,z1,...,x1,...`; every field
//! numeric. Instruments are the leading block after `d`, found by the
//! `z` name prefix or fixed with `--pz`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use spotiv::{Dataset, OutcomeKind};

pub fn load_csv(path: &Path, pz_flag: Option<usize>, center: bool) -> Result<Dataset, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let headers = rdr
        .headers()
        .map_err(|e| format!("{}: bad header: {e}", path.display()))?
        .clone();

    if headers.len() < 3 {
        return Err(format!(
            "{}: need at least columns y, d, z1; header has {} fields",
            path.display(),
            headers.len()
        ));
    }
    if &headers[0] != "y" {
        return Err(format!(
            "{}: first column must be 'y', found '{}'",
            path.display(),
            &headers[0]
        ));
    }
    if &headers[1] != "d" {
        return Err(format!(
            "{}: second column must be 'd', found '{}'",
            path.display(),
            &headers[1]
        ));
    }
    let p = headers.len() - 2;
    let p_z = match pz_flag {
        Some(k) => {
            if k == 0 || k > p {
                return Err(format!(
                    "--pz {k} out of range: the file has {p} columns after d"
                ));
            }
            k
        }
        None => {
            let k = (2..headers.len())
                .take_while(|&i| headers[i].starts_with('z'))
                .count();
            if k == 0 {
                return Err(format!(
                    "{}: no instrument columns found; name them z1, z2, ... or pass --pz",
                    path.display()
                ));
            }
            k
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| format!("{}: {e}", path.display()))?;
        let line = record.position().map(|pos| pos.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(format!(
                "line {line}: {} fields, header declares {}",
                record.len(),
                headers.len()
            ));
        }
        let mut row = Vec::with_capacity(record.len());
        for (idx, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                format!(
                    "line {line}: column '{}': cannot parse '{field}' as a number",
                    &headers[idx]
                )
            })?;
            if !value.is_finite() {
                return Err(format!(
                    "line {line}: column '{}': non-finite value",
                    &headers[idx]
                ));
            }
            row.push(value);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(format!("{}: no data rows", path.display()));
    }

    let y = DVector::from_fn(n, |i, _| rows[i][0]);
    let mut d = DVector::from_fn(n, |i, _| rows[i][1]);
    let mut w = DMatrix::from_fn(n, p, |i, j| rows[i][j + 2]);
    if center {
        let d_mean = d.mean();
        d.apply(|v| *v -= d_mean);
        for j in 0..p {
            let mean = w.column(j).mean();
            for i in 0..n {
                w[(i, j)] -= mean;
            }
        }
    }
    let kind = if y.iter().all(|&v| v == 0.0 || v == 1.0) {
        OutcomeKind::Binary
    } else {
        OutcomeKind::Continuous
    };
    Dataset::new(y, d, w, p_z, kind).map_err(|e| e.to_string())
}
