//! Spearman rank correlations between the prosody features of matched pairs.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Language;
use crate::error::{ProsodyError, Result};
use crate::midlevel::{feature_label, BaseFeature, DIM, N_FEATURES, N_SPANS};

/// Ranks starting at 1, tied values sharing the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share rank mean(i+1..=j).
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Rank vector centred at zero together with its norm; `None` if constant.
fn centered_ranks(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let r = average_ranks(x);
    let mean = (r.len() as f64 + 1.0) / 2.0;
    let c: Vec<f64> = r.into_iter().map(|v| v - mean).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0).then_some((c, norm))
}

fn check_lengths(x: usize, y: usize) -> Result<()> {
    if x != y {
        return Err(ProsodyError::Dimension {
            expected: x,
            found: y,
        });
    }
    if x < 3 {
        return Err(ProsodyError::InvalidArgument(format!(
            "Spearman correlation needs at least 3 points, got {x}"
        )));
    }
    Ok(())
}

/// Spearman's ρ with average-rank ties; `None` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_lengths(x.len(), y.len())?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(ProsodyError::NonFinite("spearman input".into()));
    }
    Ok(match (centered_ranks(x), centered_ranks(y)) {
        (Some((a, na)), Some((b, nb))) => Some(pearson_centered(&a, na, &b, nb)),
        _ => None,
    })
}

fn pearson_centered(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Prosody vectors of one language, row-aligned by pair id.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageSample {
    pub language: Language,
    pub pair_ids: Vec<String>,
    pub vectors: Vec<[f64; DIM]>,
}

impl LanguageSample {
    fn column(&self, d: usize) -> Vec<f64> {
        self.vectors.iter().map(|v| v[d]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub row_language: Language,
    pub col_language: Language,
    /// Number of pairs.
    pub n: usize,
    /// Row-major 100×100; `None` where a feature was constant.
    pub values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * DIM + col]
    }

    pub fn transpose(&self) -> CorrelationMatrix {
        let mut values = vec![None; DIM * DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                values[j * DIM + i] = self.values[i * DIM + j];
            }
        }
        CorrelationMatrix {
            row_language: self.col_language,
            col_language: self.row_language,
            n: self.n,
            values,
        }
    }

    pub fn undefined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// 101×101 CSV grid; headers are `<LANG>:<label>`, undefined cells `NA`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| ProsodyError::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let labels: Vec<String> = (0..DIM).map(|d| feature_label(d).expect("in range")).collect();
        write!(w, "").map_err(io)?;
        for l in &labels {
            write!(w, ",{}:{l}", self.col_language).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for (i, l) in labels.iter().enumerate() {
            write!(w, "{}:{l}", self.row_language).map_err(io)?;
            for j in 0..DIM {
                match self.get(i, j) {
                    Some(rho) => write!(w, ",{rho}"),
                    None => write!(w, ",NA"),
                }
                .map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Entry (i, j) is ρ between feature i of `rows` and feature j of `cols` across pairs.
pub fn correlation_matrix(rows: &LanguageSample, cols: &LanguageSample) -> Result<CorrelationMatrix> {
    if rows.pair_ids != cols.pair_ids {
        let detail = rows
            .pair_ids
            .iter()
            .zip(&cols.pair_ids)
            .position(|(a, b)| a != b)
            .map(|i| format!("row {i}: {} vs {}", rows.pair_ids[i], cols.pair_ids[i]))
            .unwrap_or_else(|| {
                format!("{} vs {} pairs", rows.pair_ids.len(), cols.pair_ids.len())
            });
        return Err(ProsodyError::PairMismatch(detail));
    }
    let n = rows.pair_ids.len();
    check_lengths(n, cols.vectors.len())?;
    check_lengths(n, rows.vectors.len())?;
    if rows.vectors.iter().chain(&cols.vectors).flatten().any(|v| !v.is_finite()) {
        return Err(ProsodyError::NonFinite("correlation input".into()));
    }

    let rank_all = |s: &LanguageSample| -> Vec<Option<(Vec<f64>, f64)>> {
        (0..DIM).into_par_iter().map(|d| centered_ranks(&s.column(d))).collect()
    };
    let r = rank_all(rows);
    let c = rank_all(cols);
    let values: Vec<Option<f64>> = (0..DIM * DIM)
        .into_par_iter()
        .map(|k| match (&r[k / DIM], &c[k % DIM]) {
            (Some((a, na)), Some((b, nb))) => Some(pearson_centered(a, *na, b, *nb)),
            _ => None,
        })
        .collect();

    Ok(CorrelationMatrix {
        row_language: rows.language,
        col_language: cols.language,
        n,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonal {
    pub row: usize,
    pub col: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSummary {
    pub row_language: Language,
    pub col_language: Language,
    pub n: usize,
    pub threshold: f64,
    /// Share of same-feature, same-span entries with ρ ≥ threshold.
    pub fraction_at_or_above: f64,
    /// Mean diagonal ρ per base feature over its defined spans.
    pub feature_means: [Option<f64>; N_FEATURES],
    /// Largest |ρ| entries off the diagonal.
    pub top_off_diagonal: Vec<OffDiagonal>,
}

pub const DEFAULT_TOP_OFF_DIAGONAL: usize = 20;

pub fn summarize_diagonal(m: &CorrelationMatrix, threshold: f64, top_k: usize) -> DiagonalSummary {
    let diagonal: Vec<Option<f64>> = (0..DIM).map(|d| m.get(d, d)).collect();
    let above = diagonal.iter().flatten().filter(|&&r| r >= threshold).count();

    let mut feature_means = [None; N_FEATURES];
    for (f, mean) in feature_means.iter_mut().enumerate() {
        let defined: Vec<f64> = (0..N_SPANS).filter_map(|s| diagonal[f * N_SPANS + s]).collect();
        if !defined.is_empty() {
            *mean = Some(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }

    let mut off: Vec<OffDiagonal> = (0..DIM)
        .flat_map(|i| (0..DIM).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .filter_map(|(row, col)| m.get(row, col).map(|rho| OffDiagonal { row, col, rho }))
        .collect();
    off.sort_by(|a, b| {
        b.rho
            .abs()
            .total_cmp(&a.rho.abs())
            .then_with(|| (a.row, a.col).cmp(&(b.row, b.col)))
    });
    off.truncate(top_k);

    DiagonalSummary {
        row_language: m.row_language,
        col_language: m.col_language,
        n: m.n,
        threshold,
        fraction_at_or_above: above as f64 / DIM as f64,
        feature_means,
        top_off_diagonal: off,
    }
}

impl fmt::Display for DiagonalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} vs {} over {} pairs",
            self.row_language, self.col_language, self.n
        )?;
        writeln!(
            f,
            "same feature and span with rho >= {}: {:.4}",
            self.threshold, self.fraction_at_or_above
        )?;
        writeln!(f, "mean same-span rho by feature:")?;
        for (feature, mean) in BaseFeature::ALL.iter().zip(&self.feature_means) {
            match mean {
                Some(m) => writeln!(f, "  {:<18} {m:>8.4}", feature.name())?,
                None => writeln!(f, "  {:<18} {:>8}", feature.name(), "NA")?,
            }
        }
        writeln!(f, "strongest off-diagonal entries:")?;
        for e in &self.top_off_diagonal {
            writeln!(
                f,
                "  {}:{} vs {}:{}  rho = {:.4}",
                self.row_language,
                feature_label(e.row).map_err(|_| fmt::Error)?,
                self.col_language,
                feature_label(e.col).map_err(|_| fmt::Error)?,
                e.rho
            )?;
        }
        Ok(())
    }
}
