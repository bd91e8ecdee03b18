//! Speaker-aware train/test split of the matched pairs.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusManifest, MatchedPair};
use crate::error::{ProsodyError, Result};

/// Shuffles tried (seeds `seed`, `seed + 1`, ...) before giving up.
pub const SPLIT_ATTEMPTS: u32 = 64;
const MAX_SHARED_SPEAKERS: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Pairs in input order.
    pub train: Vec<MatchedPair>,
    pub test: Vec<MatchedPair>,
    pub seed: u64,
    /// Zero-based attempt that produced this split.
    pub attempt: u32,
    /// Speakers with pairs on both sides, sorted.
    pub shared_speakers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Train,
    Test,
}

/// Seeded greedy speaker assignment with at most one speaker on both sides.
///
/// Speakers are shuffled and moved to the test side until the pairs spoken
/// only by test speakers reach `test_fraction` of the total. Pairs whose
/// speakers ended up on different sides go wherever the fewest speakers
/// become shared. Attempts that share more than one speaker are retried with
/// the next seed.
pub fn split_pairs(pairs: &[MatchedPair], test_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ProsodyError::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let speakers: Vec<&str> = pairs
        .iter()
        .flat_map(|p| p.speakers())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if speakers.len() < 2 {
        return Err(ProsodyError::InvalidArgument(format!(
            "splitting needs at least 2 distinct speakers, found {}",
            speakers.len()
        )));
    }
    let target = test_fraction * pairs.len() as f64;

    let mut last_failure = String::new();
    for attempt in 0..SPLIT_ATTEMPTS {
        let mut order = speakers.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64)));
        match attempt_split(pairs, &order, target) {
            Ok(sides) => {
                let spec = assemble(pairs, &sides, seed, attempt);
                if attempt > 0 {
                    log::info!("split satisfied on attempt {}", attempt + 1);
                }
                return Ok(spec);
            }
            Err(message) => {
                log::debug!("split attempt {} rejected: {message}", attempt + 1);
                last_failure = message;
            }
        }
    }
    Err(ProsodyError::SplitConstraint {
        attempts: SPLIT_ATTEMPTS,
        message: last_failure,
    })
}

fn attempt_split(pairs: &[MatchedPair], order: &[&str], target: f64) -> std::result::Result<Vec<Side>, String> {
    let all_in = |p: &MatchedPair, set: &HashSet<&str>| p.speakers().iter().all(|s| set.contains(s));

    let mut test_speakers: HashSet<&str> = HashSet::new();
    for &s in &order[..order.len() - 1] {
        test_speakers.insert(s);
        let count = pairs.iter().filter(|p| all_in(p, &test_speakers)).count();
        if count as f64 >= target {
            break;
        }
    }

    let mut sides = Vec::with_capacity(pairs.len());
    let mut mixed = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let on_test = p.speakers().iter().filter(|s| test_speakers.contains(*s)).count();
        sides.push(if on_test == 0 { Side::Train } else { Side::Test });
        if on_test > 0 && on_test < p.speakers().len() {
            mixed.push(i);
        }
    }

    if let Some(&first) = mixed.first() {
        // Sharing at most one speaker means one speaker must occur in every
        // mixed pair; it stays shared while the others keep a single side.
        let mut best: Option<(usize, f64, &str, Vec<Side>)> = None;
        for candidate in pairs[first].speakers() {
            if !mixed.iter().all(|&i| pairs[i].speakers().contains(&candidate)) {
                continue;
            }
            let side = if test_speakers.contains(candidate) { Side::Train } else { Side::Test };
            let mut trial = sides.clone();
            for &i in &mixed {
                trial[i] = side;
            }
            let shared = shared_speakers(pairs, &trial).len();
            let test_count = trial.iter().filter(|&&s| s == Side::Test).count();
            let gap = (test_count as f64 - target).abs();
            let better = best.as_ref().is_none_or(|(bs, bg, bc, _)| {
                (shared, gap, candidate) < (*bs, *bg, *bc)
            });
            if better {
                best = Some((shared, gap, candidate, trial));
            }
        }
        match best {
            Some((_, _, _, trial)) => sides = trial,
            None => {
                return Err(format!(
                    "{} pairs cross the speaker partition and no single speaker covers them",
                    mixed.len()
                ))
            }
        }
    }

    let shared = shared_speakers(pairs, &sides);
    if shared.len() > MAX_SHARED_SPEAKERS {
        return Err(format!("{} speakers shared between train and test", shared.len()));
    }
    if !sides.contains(&Side::Train) || !sides.contains(&Side::Test) {
        return Err("one side of the split is empty".into());
    }
    Ok(sides)
}

fn shared_speakers(pairs: &[MatchedPair], sides: &[Side]) -> Vec<String> {
    let mut seen: HashMap<&str, (bool, bool)> = HashMap::new();
    for (p, side) in pairs.iter().zip(sides) {
        for s in p.speakers() {
            let e = seen.entry(s).or_default();
            match side {
                Side::Train => e.0 = true,
                Side::Test => e.1 = true,
            }
        }
    }
    let mut shared: Vec<String> = seen
        .into_iter()
        .filter(|(_, (train, test))| *train && *test)
        .map(|(s, _)| s.to_string())
        .collect();
    shared.sort();
    shared
}

fn assemble(pairs: &[MatchedPair], sides: &[Side], seed: u64, attempt: u32) -> SplitSpec {
    let pick = |want: Side| -> Vec<MatchedPair> {
        pairs
            .iter()
            .zip(sides)
            .filter(|(_, &s)| s == want)
            .map(|(p, _)| p.clone())
            .collect()
    };
    SplitSpec {
        train: pick(Side::Train),
        test: pick(Side::Test),
        seed,
        attempt,
        shared_speakers: shared_speakers(pairs, sides),
    }
}

/// Writes `pair_id,partition` rows, train first, under a comment header.
pub fn write_split(path: impl AsRef<Path>, spec: &SplitSpec) -> Result<()> {
    let path = path.as_ref();
    let io = |e| ProsodyError::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(
        w,
        "# seed={} attempt={} train={} test={} shared_speakers={}",
        spec.seed,
        spec.attempt,
        spec.train.len(),
        spec.test.len(),
        spec.shared_speakers.join(";")
    )
    .map_err(io)?;
    writeln!(w, "pair_id,partition").map_err(io)?;
    for (rows, name) in [(&spec.train, "train"), (&spec.test, "test")] {
        for p in rows {
            writeln!(w, "{},{name}", p.pair_id).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Pair ids of a split file, before they are matched against a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: Option<u64>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    /// Looks the pair ids up in the manifest.
    pub fn resolve(&self, manifest: &CorpusManifest) -> Result<(Vec<MatchedPair>, Vec<MatchedPair>)> {
        let index: HashMap<&str, &MatchedPair> =
            manifest.pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
        let lookup = |ids: &[String]| -> Result<Vec<MatchedPair>> {
            ids.iter()
                .map(|id| {
                    index.get(id.as_str()).map(|p| (*p).clone()).ok_or_else(|| {
                        ProsodyError::InvalidPair {
                            pair_id: id.clone(),
                            message: "listed in the split but absent from the manifest".into(),
                        }
                    })
                })
                .collect()
        };
        Ok((lookup(&self.train)?, lookup(&self.test)?))
    }
}

pub fn read_split(path: impl AsRef<Path>) -> Result<SplitAssignment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ProsodyError::io(path, e))?;
    let seed = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .flat_map(str::split_whitespace)
        .find_map(|field| field.strip_prefix("seed=")?.parse().ok());

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| ProsodyError::csv(path, e))?.clone();
    if headers.iter().ne(["pair_id", "partition"]) {
        return Err(ProsodyError::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: "split header must be pair_id,partition".into(),
        });
    }
    let mut seen = HashSet::new();
    let mut split = SplitAssignment {
        seed,
        train: Vec::new(),
        test: Vec::new(),
    };
    for row in reader.records() {
        let row = row.map_err(|e| ProsodyError::csv(path, e))?;
        let malformed = |message: String| ProsodyError::MalformedRow {
            path: path.to_path_buf(),
            line: row.position().map_or(0, |p| p.line()),
            message,
        };
        let id = row[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(malformed(format!("pair {id} listed twice")));
        }
        match &row[1] {
            "train" => split.train.push(id),
            "test" => split.test.push(id),
            other => return Err(malformed(format!("unknown partition {other:?}"))),
        }
    }
    Ok(split)
}
