//! Turning raw sequence files and feature tables into 3-trail distributions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::formats::trail_lines;
use crate::model::TrailDistribution;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceMode {
    /// Every contiguous window of three states in a sequence file.
    Window3,
    /// Ordered triples of distinct items sharing a value, read from a CSV
    /// feature table with one item per row.
    Cooccurrence,
}

#[derive(Clone, Debug)]
pub struct Sliced<T: Scalar> {
    pub distribution: TrailDistribution<T>,
    /// Total trail weight before normalisation.
    pub trails: u64,
    pub warnings: Vec<String>,
}

pub fn slice_sequences<T: Scalar>(path: impl AsRef<Path>, mode: SliceMode) -> Result<Sliced<T>> {
    let text = fs::read_to_string(path)?;
    match mode {
        SliceMode::Window3 => window3(&text, None),
        SliceMode::Cooccurrence => cooccurrence(&text),
    }
}

/// Windows of every sequence in a trail-file formatted text.
pub fn window3<T: Scalar>(text: &str, n: Option<usize>) -> Result<Sliced<T>> {
    let (lines, declared) = trail_lines(text, n)?;
    let mut counts: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
    let mut short = 0;
    let mut seen = 0;
    for l in &lines {
        seen = l.states.iter().fold(seen, |m, &s| m.max(s + 1));
        if l.states.len() < 3 {
            short += 1;
            continue;
        }
        for w in l.states.windows(3) {
            *counts.entry((w[0], w[1], w[2])).or_insert(0) += l.count;
        }
    }
    let mut warnings = Vec::new();
    if short > 0 {
        warnings.push(format!("{short} sequences shorter than 3 skipped"));
    }
    let trails = counts.values().sum();
    Ok(Sliced {
        distribution: TrailDistribution::from_counts(declared.unwrap_or(seen), &counts)?,
        trails,
        warnings,
    })
}

/// Feature table: a CSV header of feature names, then one row per item.
/// Items become states in row order. Empty cells are missing values.
pub fn cooccurrence<T: Scalar>(text: &str) -> Result<Sliced<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let features = rdr.headers()?.len();
    let mut groups: BTreeMap<(usize, String), Vec<usize>> = BTreeMap::new();
    let mut n = 0;
    for (item, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for f in 0..features {
            match rec.get(f) {
                Some(v) if !v.is_empty() => groups.entry((f, v.to_string())).or_default().push(item),
                _ => {}
            }
        }
        n = item + 1;
    }
    let mut counts: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
    for members in groups.values() {
        for &i in members {
            for &j in members {
                for &k in members {
                    if i != j && j != k && i != k {
                        *counts.entry((i, j, k)).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::NoTrails);
    }
    let trails = counts.values().sum();
    Ok(Sliced {
        distribution: TrailDistribution::from_counts(n, &counts)?,
        trails,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_of_one_sequence() {
        let s: Sliced<f64> = window3("1 2 3 4\n", None).unwrap();
        assert_eq!(s.trails, 2);
        assert_eq!(s.distribution.get(0, 1, 2), 0.5);
        assert_eq!(s.distribution.get(1, 2, 3), 0.5);
    }

    #[test]
    fn short_sequences_are_skipped() {
        let s: Sliced<f64> = window3("1 2\n1 2 3 x3\n", None).unwrap();
        assert_eq!(s.trails, 3);
        assert_eq!(s.warnings.len(), 1);
        assert!(matches!(window3::<f64>("", None), Err(Error::NoTrails)));
    }

    #[test]
    fn one_shared_value_gives_six_triples() {
        let s: Sliced<f64> = cooccurrence("colour\nred\nred\nred\nblue\n").unwrap();
        assert_eq!(s.trails, 6);
        assert_eq!(s.distribution.n(), 4);
        assert!((s.distribution.get(2, 0, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(s.distribution.get(0, 0, 1), 0.0);
    }
}
