//! Dataset files: `dataset.csv` holds one row per time step (observations,
//! then latents when known); `dataset.json` holds the model matrices, the
//! exact log-marginal likelihood and the generating configuration.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{fmt_f64, write_csv, write_text, ExperimentConfig};
use crate::error::{Error, Result};
use crate::lgssm::{kalman_logmarginal, Dataset, LgssmParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub steps: usize,
    pub d_z: usize,
    pub d_x: usize,
    /// Row-major.
    pub transition: Vec<Vec<f64>>,
    /// Row-major.
    pub emission: Vec<Vec<f64>>,
    pub kalman_log_marginal: f64,
    pub config: ExperimentConfig,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what} matrix is empty or ragged")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl DatasetMeta {
    pub fn model(&self) -> Result<LgssmParams> {
        LgssmParams::new(
            matrix(&self.transition, "transition")?,
            matrix(&self.emission, "emission")?,
        )
    }
}

pub fn write_dataset(
    dir: &Path,
    cfg: &ExperimentConfig,
    model: &LgssmParams,
    data: &Dataset,
) -> Result<DatasetMeta> {
    let (d_z, d_x) = (model.d_z(), model.d_x());
    let mut csv = String::from("t");
    for j in 0..d_x {
        csv.push_str(&format!(",x_{j}"));
    }
    if data.latents.is_some() {
        for j in 0..d_z {
            csv.push_str(&format!(",z_{j}"));
        }
    }
    csv.push('\n');
    for (t, x) in data.observations.iter().enumerate() {
        csv.push_str(&(t + 1).to_string());
        let z = data.latents.as_ref().map(|l| &l[t]);
        for v in x.iter().chain(z.into_iter().flat_map(|z| z.iter())) {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        csv.push('\n');
    }
    let meta = DatasetMeta {
        steps: data.len(),
        d_z,
        d_x,
        transition: rows(&model.transition),
        emission: rows(&model.emission),
        kalman_log_marginal: kalman_logmarginal(model, &data.observations)?,
        config: cfg.clone(),
    };
    write_csv(&dir.join("dataset.csv"), cfg, &csv)?;
    write_text(&dir.join("dataset.json"), &serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetMeta, Dataset)> {
    let meta_path = dir.join("dataset.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)?;

    let csv_path = dir.join("dataset.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let bad = |line: usize, msg: &str| Error::Config(format!("{}:{line}: {msg}", csv_path.display()));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file"))?.1.split(',').collect();
    let n_x = header.iter().filter(|h| h.starts_with("x_")).count();
    let n_z = header.iter().filter(|h| h.starts_with("z_")).count();
    if n_x != meta.d_x || (n_z != 0 && n_z != meta.d_z) || header.len() != 1 + n_x + n_z {
        return Err(bad(1, "header does not match the model dimensions"));
    }

    let mut observations = Vec::new();
    let mut latents = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(i + 1, &e.to_string()))?;
        if values.len() != n_x + n_z {
            return Err(bad(i + 1, "wrong number of columns"));
        }
        observations.push(DVector::from_column_slice(&values[..n_x]));
        if n_z > 0 {
            latents.push(DVector::from_column_slice(&values[n_x..]));
        }
    }
    let mut data = Dataset::from_observations(observations)?;
    if n_z > 0 {
        data.latents = Some(latents);
    }
    if data.len() != meta.steps {
        return Err(Error::Config(format!(
            "{} has {} steps, metadata says {}",
            csv_path.display(),
            data.len(),
            meta.steps
        )));
    }
    Ok((meta, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lgssm::{simulate, EmissionKind};
    use crate::rng::Stream;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let mut s = Stream::new(4, "t");
        let model = LgssmParams::from_alpha(0.42, 3, 2, EmissionKind::Dense, &mut s).unwrap();
        let data = simulate(&model, 7, &mut s).unwrap();
        let meta = write_dataset(dir.path(), &cfg, &model, &data).unwrap();
        let (meta2, data2) = load_dataset(dir.path()).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(data, data2);
        assert_eq!(meta2.model().unwrap(), model);
    }

    #[test]
    fn ragged_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let mut s = Stream::new(4, "t");
        let model = LgssmParams::from_alpha(0.42, 1, 1, EmissionKind::Dense, &mut s).unwrap();
        let data = simulate(&model, 2, &mut s).unwrap();
        write_dataset(dir.path(), &cfg, &model, &data).unwrap();
        std::fs::write(dir.path().join("dataset.csv"), "# config: {}\nt,x_0,z_0\n1,0.5\n2,0.1,0.2\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}
