//! Pearson correlation between relation embeddings.

use std::path::Path;

use crate::model::{Matrix, ModelParams};
use crate::{Error, Result};

/// Pearson correlation of every pair of forward relation embeddings.
///
/// Pairs involving a zero-variance embedding get 0 (diagonal stays 1).
pub fn relation_correlation(params: &ModelParams) -> Matrix {
    let n = params.shape.n_relations;
    let rows: Vec<&[f64]> = (0..n).map(|r| params.relation_emb.row(r)).collect();
    pearson_matrix(&rows)
}

pub fn pearson_matrix(rows: &[&[f64]]) -> Matrix {
    let n = rows.len();
    let centered: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .map(|x| {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            (c, norm)
        })
        .collect();
    for (i, (_, norm)) in centered.iter().enumerate() {
        if *norm == 0.0 {
            log::warn!("relation {i} has a zero-variance embedding; its correlations are reported as 0");
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        out.set(i, i, 1.0);
        for j in i + 1..n {
            let (a, na) = &centered[i];
            let (b, nb) = &centered[j];
            let r = if *na == 0.0 || *nb == 0.0 {
                0.0
            } else {
                (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
            };
            out.set(i, j, r);
            out.set(j, i, r);
        }
    }
    out
}

/// CSV with a header row and a leading column of relation names.
pub fn write_correlation_csv(path: &Path, names: &[String], corr: &Matrix) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Integrity(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["relation".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(corr.row(i).iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
