//! Least-squares linear map from source to target prosody vectors.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Direction, PairVectors};
use crate::error::{ProsodyError, Result};
use crate::midlevel::{feature_label, feature_labels, ProsodyVector, DIM};

/// 100 input weights followed by the intercept.
pub const N_WEIGHT_COLUMNS: usize = DIM + 1;
/// Relative singular value cutoff for the unregularized solve.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub direction: Direction,
    pub ridge_lambda: f64,
    /// Row `j` predicts target dimension `j`; the last column is the intercept.
    pub weights: Vec<Vec<f64>>,
    pub feature_labels: Vec<String>,
    pub n_train: usize,
    pub seed: Option<u64>,
}

impl LinearModel {
    /// Fits `y ≈ W·[x; 1]` minimizing squared error plus `ridge_lambda`
    /// times the squared norm of the non-intercept weights.
    pub fn fit(
        direction: Direction,
        xs: &[[f64; DIM]],
        ys: &[[f64; DIM]],
        ridge_lambda: f64,
    ) -> Result<Self> {
        if xs.is_empty() {
            return Err(ProsodyError::InvalidArgument("empty training set".into()));
        }
        if xs.len() != ys.len() {
            return Err(ProsodyError::Dimension {
                expected: xs.len(),
                found: ys.len(),
            });
        }
        if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
            return Err(ProsodyError::InvalidArgument(format!(
                "ridge lambda must be finite and non-negative, got {ridge_lambda}"
            )));
        }
        if xs.iter().chain(ys).flatten().any(|v| !v.is_finite()) {
            return Err(ProsodyError::NonFinite("training data".into()));
        }
        let n = xs.len();
        if n < N_WEIGHT_COLUMNS {
            log::warn!(
                "fitting {N_WEIGHT_COLUMNS} coefficients per dimension from only {n} pairs"
            );
        }

        let x_mean = column_means(xs);
        let y_mean = column_means(ys);
        let xc = DMatrix::from_fn(n, DIM, |i, j| xs[i][j] - x_mean[j]);
        let yc = DMatrix::from_fn(n, DIM, |i, j| ys[i][j] - y_mean[j]);

        let svd = xc.svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let s = &svd.singular_values;
        let s_max = s.iter().copied().fold(0.0, f64::max);
        let filter: Vec<f64> = s
            .iter()
            .map(|&si| {
                if ridge_lambda > 0.0 {
                    si / (si * si + ridge_lambda)
                } else if si > RANK_TOLERANCE * s_max {
                    1.0 / si
                } else {
                    0.0
                }
            })
            .collect();

        // beta (inputs × targets) = V · diag(filter) · Uᵀ · Yc
        let mut uty = u.transpose() * yc;
        for (k, f) in filter.iter().enumerate() {
            uty.row_mut(k).scale_mut(*f);
        }
        let beta = v_t.transpose() * uty;

        let weights = (0..DIM)
            .map(|j| {
                let mut row: Vec<f64> = (0..DIM).map(|i| beta[(i, j)]).collect();
                let fitted_mean: f64 = row.iter().zip(&x_mean).map(|(w, m)| w * m).sum();
                row.push(y_mean[j] - fitted_mean);
                row
            })
            .collect();

        let model = Self {
            direction,
            ridge_lambda,
            weights,
            feature_labels: feature_labels(),
            n_train: n,
            seed: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != DIM {
            return Err(ProsodyError::Dimension {
                expected: DIM,
                found: self.weights.len(),
            });
        }
        if let Some(row) = self.weights.iter().find(|r| r.len() != N_WEIGHT_COLUMNS) {
            return Err(ProsodyError::Dimension {
                expected: N_WEIGHT_COLUMNS,
                found: row.len(),
            });
        }
        if self.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(ProsodyError::NonFinite("model weights".into()));
        }
        if self.feature_labels != feature_labels() {
            return Err(ProsodyError::InvalidArgument(
                "model feature labels differ from the canonical order".into(),
            ));
        }
        Ok(())
    }

    /// `W · [x; 1]`.
    pub fn predict_values(&self, x: &[f64]) -> Result<[f64; DIM]> {
        if x.len() != DIM {
            return Err(ProsodyError::Dimension {
                expected: DIM,
                found: x.len(),
            });
        }
        let mut y = [0.0; DIM];
        for (yj, row) in y.iter_mut().zip(&self.weights) {
            *yj = row[..DIM].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[DIM];
        }
        Ok(y)
    }

    /// Prediction for the translation of `x`; carries the source utterance id.
    pub fn predict(&self, x: &ProsodyVector) -> Result<ProsodyVector> {
        Ok(ProsodyVector {
            utterance_id: x.utterance_id.clone(),
            track_id: x.track_id.clone(),
            values: self.predict_values(&x.values)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|source| ProsodyError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        std::fs::write(path, json + "\n").map_err(|e| ProsodyError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ProsodyError::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|source| ProsodyError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        model.validate()?;
        Ok(model)
    }
}

fn column_means(rows: &[[f64; DIM]]) -> [f64; DIM] {
    let mut mean = [0.0; DIM];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

/// Fits a linear model on the training pairs of one direction.
pub fn fit_linear(
    train: &[PairVectors],
    direction: Direction,
    ridge_lambda: f64,
    seed: Option<u64>,
) -> Result<LinearModel> {
    let xs: Vec<[f64; DIM]> = train.iter().map(|p| p.source.values).collect();
    let ys: Vec<[f64; DIM]> = train.iter().map(|p| p.target.values).collect();
    let mut model = LinearModel::fit(direction, &xs, &ys, ridge_lambda)?;
    model.seed = seed;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    /// Target dimension (row).
    pub target: usize,
    /// Source dimension (column).
    pub source: usize,
    pub weight: f64,
    /// `<SRC> <source label> → <TGT> <target label>`.
    pub label: String,
}

impl std::fmt::Display for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.label, self.weight)
    }
}

/// The `k` non-intercept weights of largest magnitude, ties ordered by label.
pub fn top_coefficients(model: &LinearModel, k: usize) -> Vec<Coefficient> {
    let src = model.direction.source();
    let tgt = model.direction.target();
    let labels: Vec<String> = (0..DIM).map(|d| feature_label(d).expect("in range")).collect();
    let mut all: Vec<Coefficient> = (0..DIM)
        .flat_map(|j| (0..DIM).map(move |i| (j, i)))
        .map(|(j, i)| Coefficient {
            target: j,
            source: i,
            weight: model.weights[j][i],
            label: format!("{src} {} → {tgt} {}", labels[i], labels[j]),
        })
        .collect();
    all.sort_by(|a, b| {
        b.weight
            .abs()
            .total_cmp(&a.weight.abs())
            .then_with(|| a.label.cmp(&b.label))
    });
    all.truncate(k);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::noise;

    fn random_rows(n: usize, seed: u64) -> Vec<[f64; DIM]> {
        let flat = noise(1.0, n * DIM, seed);
        flat.chunks(DIM).map(|c| c.try_into().unwrap()).collect()
    }

    fn zero_model() -> LinearModel {
        LinearModel {
            direction: Direction::EnEs,
            ridge_lambda: 0.0,
            weights: vec![vec![0.0; N_WEIGHT_COLUMNS]; DIM],
            feature_labels: feature_labels(),
            n_train: 0,
            seed: None,
        }
    }

    #[test]
    fn identity_data_is_reproduced() {
        let xs = random_rows(150, 3);
        let m = LinearModel::fit(Direction::EnEs, &xs, &xs, 0.0).unwrap();
        let residual: f64 = xs
            .iter()
            .map(|x| {
                let y = m.predict_values(x).unwrap();
                y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum();
        assert!(residual < 1e-8, "{residual}");
        for j in 0..DIM {
            for i in 0..N_WEIGHT_COLUMNS {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((m.weights[j][i] - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn ridge_shrinks() {
        let xs = random_rows(120, 4);
        let ys = random_rows(120, 5);
        let norm = |m: &LinearModel| -> f64 {
            m.weights.iter().flat_map(|r| &r[..DIM]).map(|w| w * w).sum::<f64>().sqrt()
        };
        let mut last = f64::INFINITY;
        for lambda in [0.0, 1.0, 100.0, 1e4, 1e8] {
            let n = norm(&LinearModel::fit(Direction::EsEn, &xs, &ys, lambda).unwrap());
            assert!(n <= last);
            last = n;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn rank_deficient_inputs() {
        // Fewer samples than inputs: still finite and interpolating.
        let xs = random_rows(40, 6);
        let ys = random_rows(40, 7);
        let m = LinearModel::fit(Direction::EnEs, &xs, &ys, 0.0).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let p = m.predict_values(x).unwrap();
            assert!(p.iter().zip(y).all(|(a, b)| (a - b).abs() < 1e-8));
        }
    }

    #[test]
    fn fit_errors() {
        assert!(LinearModel::fit(Direction::EnEs, &[], &[], 0.0).is_err());
        let xs = random_rows(3, 1);
        assert!(LinearModel::fit(Direction::EnEs, &xs, &xs[..2], 0.0).is_err());
        assert!(LinearModel::fit(Direction::EnEs, &xs, &xs, -1.0).is_err());
    }

    #[test]
    fn prediction_forms() {
        let mut m = zero_model();
        for (j, row) in m.weights.iter_mut().enumerate() {
            row[j] = 1.0;
        }
        let x = random_rows(1, 8)[0];
        assert_eq!(m.predict_values(&x).unwrap(), x);

        let mut m = zero_model();
        for (j, row) in m.weights.iter_mut().enumerate() {
            row[DIM] = j as f64;
        }
        let y = m.predict_values(&x).unwrap();
        assert!(y.iter().enumerate().all(|(j, v)| *v == j as f64));
        assert!(m.predict_values(&x[..5]).is_err());
    }

    #[test]
    fn prediction_matches_dot_products() {
        let w = random_rows(DIM, 11);
        let b = noise(1.0, DIM, 12);
        let mut m = zero_model();
        for j in 0..DIM {
            m.weights[j][..DIM].copy_from_slice(&w[j]);
            m.weights[j][DIM] = b[j];
        }
        for x in random_rows(20, 13) {
            let y = m.predict_values(&x).unwrap();
            for j in 0..DIM {
                let mut oracle = b[j];
                for i in 0..DIM {
                    oracle += w[j][i] * x[i];
                }
                assert!((y[j] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let xs = random_rows(110, 14);
        let ys = random_rows(110, 15);
        let mut m = LinearModel::fit(Direction::EsEn, &xs, &ys, 0.5).unwrap();
        m.seed = Some(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(LinearModel::load(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"direction\": \"es-en\""));

        m.weights[3].pop();
        m.save(&path).unwrap();
        assert!(LinearModel::load(&path).is_err());
    }

    #[test]
    fn coefficient_labels() {
        let mut m = zero_model();
        m.weights[90][11] = -0.32;
        let top = top_coefficients(&m, 1);
        assert_eq!(top[0].to_string(), "EN lengthening_p5_10 → ES cpps_p0_5: -0.32");
        assert_eq!((top[0].target, top[0].source), (90, 11));
    }

    #[test]
    fn zero_matrix_label_order() {
        let top = top_coefficients(&zero_model(), 3);
        assert_eq!(top.len(), 3);
        assert!(top.iter().all(|c| c.weight == 0.0));
        assert!(top.windows(2).all(|w| w[0].label < w[1].label));
        assert_eq!(top[0].label, "EN cpps_p0_5 → ES cpps_p0_5");
    }

    #[test]
    fn coefficients_match_exhaustive_sort() {
        let w = random_rows(DIM, 21);
        let mut m = zero_model();
        for j in 0..DIM {
            m.weights[j][..DIM].copy_from_slice(&w[j]);
            m.weights[j][DIM] = 1e6;
        }
        let mut oracle: Vec<f64> = w.iter().flatten().map(|v| v.abs()).collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top = top_coefficients(&m, 50);
        for (c, o) in top.iter().zip(&oracle) {
            assert_eq!(c.weight.abs(), *o);
            assert_eq!(c.weight, w[c.target][c.source]);
        }
    }
}
