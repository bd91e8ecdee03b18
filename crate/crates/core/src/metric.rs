//! Prosodic dissimilarity: unweighted Euclidean distance between prosody vectors.

use std::fmt;

use rayon::prelude::*;

use crate::error::{ProsodyError, Result};
use crate::midlevel::ProsodyVector;

pub const DEFAULT_NEIGHBORS: usize = 4;

/// `sqrt(Σ (a_i - b_i)²)` over equal-length finite slices.
pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ProsodyError::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(ProsodyError::NonFinite("distance operand".into()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

pub fn dissimilarity(a: &ProsodyVector, b: &ProsodyVector) -> Result<f64> {
    euclidean(&a.values, &b.values).map_err(|e| match e {
        ProsodyError::NonFinite(_) => {
            ProsodyError::NonFinite(format!("{} or {}", a.utterance_id, b.utterance_id))
        }
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub utterance_id: String,
    pub dissimilarity: f64,
    /// 1-based rank within its block.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub anchor: String,
    /// Ascending dissimilarity.
    pub similar: Vec<Neighbor>,
    /// Descending dissimilarity.
    pub dissimilar: Vec<Neighbor>,
}

/// The `k` most similar and `k` most dissimilar pool members.
///
/// Ties in distance are broken by utterance id. The pool must not contain
/// the anchor itself.
pub fn neighbors(anchor: &ProsodyVector, pool: &[&ProsodyVector], k: usize) -> Result<Neighbors> {
    if pool.is_empty() {
        return Err(ProsodyError::InvalidArgument("retrieval pool is empty".into()));
    }
    if k > pool.len() {
        return Err(ProsodyError::InvalidArgument(format!(
            "k = {k} exceeds pool size {}",
            pool.len()
        )));
    }
    if pool.iter().any(|p| p.utterance_id == anchor.utterance_id) {
        return Err(ProsodyError::InvalidArgument(format!(
            "pool contains the anchor {}",
            anchor.utterance_id
        )));
    }

    let mut ranked: Vec<(f64, &str)> = pool
        .par_iter()
        .map(|p| dissimilarity(anchor, p).map(|d| (d, p.utterance_id.as_str())))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

    let block = |items: &mut dyn Iterator<Item = &(f64, &str)>| {
        items
            .enumerate()
            .map(|(i, &(d, id))| Neighbor {
                utterance_id: id.to_string(),
                dissimilarity: d,
                rank: i + 1,
            })
            .collect::<Vec<_>>()
    };
    Ok(Neighbors {
        anchor: anchor.utterance_id.clone(),
        similar: block(&mut ranked.iter().take(k)),
        dissimilar: block(&mut ranked.iter().rev().take(k)),
    })
}

impl fmt::Display for Neighbors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "anchor {}", self.anchor)?;
        for (title, rows) in [("similar", &self.similar), ("dissimilar", &self.dissimilar)] {
            writeln!(f, "{title}")?;
            writeln!(f, "{:<24} {:>14} {:>5}", "utterance_id", "dissimilarity", "rank")?;
            for n in rows {
                writeln!(f, "{:<24} {:>14.6} {:>5}", n.utterance_id, n.dissimilarity, n.rank)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midlevel::DIM;

    fn zeros() -> [f64; DIM] {
        [0.0; DIM]
    }

    fn v(id: &str, values: [f64; DIM]) -> ProsodyVector {
        ProsodyVector::new(id, values)
    }

    #[test]
    fn basic_distances() {
        let a = v("EN_a", zeros());
        assert_eq!(dissimilarity(&a, &a).unwrap(), 0.0);
        let mut unit = zeros();
        unit[37] = 1.0;
        assert_eq!(dissimilarity(&a, &v("EN_b", unit)).unwrap(), 1.0);
        let mut tri = zeros();
        tri[0] = 3.0;
        tri[1] = 4.0;
        assert_eq!(dissimilarity(&v("EN_c", tri), &a).unwrap(), 5.0);
    }

    #[test]
    fn rejects_non_finite_and_mismatch() {
        let mut bad = zeros();
        bad[3] = f64::NAN;
        assert!(matches!(
            dissimilarity(&v("EN_a", zeros()), &v("EN_b", bad)),
            Err(ProsodyError::NonFinite(_))
        ));
        assert!(matches!(
            euclidean(&[1.0], &[1.0, 2.0]),
            Err(ProsodyError::Dimension { .. })
        ));
    }

    fn at(id: &str, x: f64) -> ProsodyVector {
        let mut values = zeros();
        values[0] = x;
        v(id, values)
    }

    #[test]
    fn ordering_and_ties() {
        let anchor = at("EN_0", 0.0);
        let pool = [at("EN_3", 3.0), at("EN_1", 1.0), at("EN_2", 2.0)];
        let refs: Vec<&ProsodyVector> = pool.iter().collect();
        let n = neighbors(&anchor, &refs, 1).unwrap();
        assert_eq!(n.similar[0].utterance_id, "EN_1");
        assert_eq!(n.dissimilar[0].utterance_id, "EN_3");

        let pool = [at("EN_b", 1.0), at("EN_a", -1.0), at("EN_c", 5.0)];
        let refs: Vec<&ProsodyVector> = pool.iter().collect();
        let n = neighbors(&anchor, &refs, 2).unwrap();
        assert_eq!(n.similar[0].utterance_id, "EN_a");
        assert_eq!(n.similar[1].utterance_id, "EN_b");
        assert_eq!(n.similar[1].rank, 2);
    }

    #[test]
    fn pool_errors() {
        let anchor = at("EN_0", 0.0);
        assert!(neighbors(&anchor, &[], 1).is_err());
        let one = at("EN_1", 1.0);
        assert!(neighbors(&anchor, &[&one], 2).is_err());
        assert!(neighbors(&anchor, &[&anchor], 1).is_err());
    }

    #[test]
    fn table_format() {
        let anchor = at("EN_0", 0.0);
        let pool = [at("EN_1", 1.0), at("EN_2", 2.0)];
        let refs: Vec<&ProsodyVector> = pool.iter().collect();
        let text = neighbors(&anchor, &refs, 1).unwrap().to_string();
        assert!(text.contains("EN_1") && text.contains("1.000000"));
        assert!(text.contains("EN_2") && text.contains("2.000000"));
    }
}
