//! Mixture, trail and distribution files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Mixture, MixtureFile, Representation, TrailDistribution, TrailMultiset};
use crate::Scalar;

pub fn mixture_to_json<T: Scalar>(m: &Mixture<T>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&m.to_file())?)
}

pub fn mixture_from_json<T: Scalar>(text: &str) -> Result<Mixture<T>> {
    let f: MixtureFile<T> = serde_json::from_str(text)?;
    Mixture::from_file(f)
}

pub fn write_mixture<T: Scalar>(path: impl AsRef<Path>, m: &Mixture<T>) -> Result<()> {
    let mut s = mixture_to_json(m)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_mixture<T: Scalar>(path: impl AsRef<Path>) -> Result<Mixture<T>> {
    mixture_from_json(&fs::read_to_string(path)?)
}

/// Reads `# key=value` header comments.
fn header(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix('#')?.trim();
    body.split_once('=').map(|(k, v)| (k.trim(), v.trim()))
}

fn header_usize(line: usize, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad header value '{v}'"),
    })
}

/// One parsed line of a trail file: 0-based states and a weight.
pub(crate) struct TrailLine {
    pub states: Vec<usize>,
    pub count: u64,
}

/// Parses a trail file into its lines plus the `# n=` header if present.
/// State ids are 1-based in the file. With `n` known, larger ids are errors.
pub(crate) fn trail_lines(text: &str, n: Option<usize>) -> Result<(Vec<TrailLine>, Option<usize>)> {
    let mut declared = n;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if let Some(("n", v)) = header(t) {
                declared = declared.or(Some(header_usize(line, v)?));
            }
            continue;
        }
        let mut tokens: Vec<&str> = t.split_whitespace().collect();
        let mut count = 1;
        if let Some(last) = tokens.last() {
            if let Some(c) = last.strip_prefix('x') {
                count = c.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad count '{last}'"),
                })?;
                tokens.pop();
            }
        }
        let mut states = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let id: usize = match tok.parse() {
                Ok(id) if id >= 1 && declared.is_none_or(|n| id <= n) => id,
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown state '{tok}'"),
                    })
                }
            };
            states.push(id - 1);
        }
        out.push(TrailLine { states, count });
    }
    Ok((out, declared))
}

/// Parses a trail file. `n` defaults to the `# n=` header, then to the
/// largest id seen.
pub fn parse_trails(text: &str, n: Option<usize>) -> Result<TrailMultiset> {
    let (lines, declared) = trail_lines(text, n)?;
    let seen = lines.iter().flat_map(|l| l.states.iter()).max().map_or(0, |m| m + 1);
    let mut ms = TrailMultiset::new(declared.unwrap_or(seen));
    for l in lines {
        ms.add(l.states, l.count);
    }
    if ms.total() == 0 {
        return Err(Error::NoTrails);
    }
    Ok(ms)
}

pub fn format_trails(ms: &TrailMultiset) -> String {
    let mut out = format!("# n={}\n", ms.n);
    for (t, c) in &ms.trails {
        let ids: Vec<String> = t.iter().map(|s| (s + 1).to_string()).collect();
        out.push_str(&ids.join(" "));
        if *c != 1 {
            out.push_str(&format!(" x{c}"));
        }
        out.push('\n');
    }
    out
}

/// Distribution file: header comments for `n` and the representation,
/// then one `i j k p` line per non-zero trail with 1-based states.
pub fn format_distribution<T: Scalar>(d: &TrailDistribution<T>) -> String {
    let mut out = format!("# n={}\n", d.n());
    match d.representation() {
        Representation::Exact => out.push_str("# exact\n"),
        Representation::Empirical { samples } => out.push_str(&format!("# samples={samples}\n")),
    }
    let mut entries = d.entries();
    entries.sort_by_key(|e| (e.0, e.1, e.2));
    for (i, j, k, p) in entries {
        if p > T::zero() {
            out.push_str(&format!("{} {} {} {:.16e}\n", i + 1, j + 1, k + 1, p.to_f()));
        }
    }
    out
}

pub fn parse_distribution<T: Scalar>(text: &str, n: Option<usize>) -> Result<TrailDistribution<T>> {
    let mut declared = n;
    let mut repr = Representation::Exact;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            match header(t) {
                Some(("n", v)) => declared = declared.or(Some(header_usize(line, v)?)),
                Some(("samples", v)) => {
                    repr = Representation::Empirical {
                        samples: header_usize(line, v)? as u64,
                    }
                }
                _ => {}
            }
            continue;
        }
        let tok: Vec<&str> = t.split_whitespace().collect();
        if tok.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: "expected 'i j k p'".into(),
            });
        }
        let mut ids = [0usize; 3];
        for (slot, s) in ids.iter_mut().zip(&tok[..3]) {
            *slot = match s.parse::<usize>() {
                Ok(id) if id >= 1 && declared.is_none_or(|n| id <= n) => id - 1,
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown state '{s}'"),
                    })
                }
            };
        }
        let p: f64 = tok[3].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad probability '{}'", tok[3]),
        })?;
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("bad probability '{}'", tok[3]),
            });
        }
        entries.push((ids[0], ids[1], ids[2], T::of(p)));
    }
    if entries.is_empty() {
        return Err(Error::NoTrails);
    }
    let seen = entries.iter().map(|e| e.0.max(e.1).max(e.2)).max().unwrap_or(0) + 1;
    TrailDistribution::from_entries(declared.unwrap_or(seen), repr, entries)
}

pub fn write_distribution<T: Scalar>(path: impl AsRef<Path>, d: &TrailDistribution<T>) -> Result<()> {
    fs::write(path, format_distribution(d))?;
    Ok(())
}

/// Kinds of input file accepted where a 3-trail distribution is expected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    Mixture,
    Distribution,
    Trails,
}

/// Guesses the file kind: JSON objects are mixtures, four-column lines with a
/// fractional last column are distributions, anything else is trails.
pub fn detect_kind(text: &str) -> InputKind {
    if text.trim_start().starts_with('{') {
        return InputKind::Mixture;
    }
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    match first {
        Some(l) => {
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() == 4 && tok[3].contains(['.', 'e', 'E']) && !tok[3].starts_with('x') {
                InputKind::Distribution
            } else {
                InputKind::Trails
            }
        }
        None => InputKind::Trails,
    }
}

/// Loads a 3-trail distribution from a distribution file, a trail file
/// (windows of length three) or a mixture file (its exact distribution).
pub fn read_distribution<T: Scalar>(path: impl AsRef<Path>, n: Option<usize>) -> Result<TrailDistribution<T>> {
    distribution_from_text(&fs::read_to_string(path)?, n)
}

pub fn distribution_from_text<T: Scalar>(text: &str, n: Option<usize>) -> Result<TrailDistribution<T>> {
    match detect_kind(text) {
        InputKind::Mixture => Ok(crate::model::exact_trail_distribution(&mixture_from_json::<T>(text)?)),
        InputKind::Distribution => parse_distribution(text, n),
        InputKind::Trails => parse_trails(text, n)?.to_distribution(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{appendix_mixture, exact_trail_distribution};

    #[test]
    fn mixture_json_round_trip_is_exact() {
        let m = appendix_mixture();
        let back: Mixture<f64> = mixture_from_json(&mixture_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(mixture_to_json(&m).unwrap().contains("\"L\": 2"));
    }

    #[test]
    fn trail_file_counts_and_ids() {
        let ms = parse_trails("# n=5\n1 2 3 x4\n\n2 3 4\n", None).unwrap();
        assert_eq!(ms.n, 5);
        assert_eq!(ms.trails[&vec![0, 1, 2]], 4);
        assert_eq!(ms.total(), 5);
        assert_eq!(parse_trails(&format_trails(&ms), None).unwrap(), ms);
    }

    #[test]
    fn unknown_state_has_line_number() {
        match parse_trails("1 2 3\n1 0 2\n", None) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_trails("1 2 9\n", Some(4)),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_trails("", None), Err(Error::NoTrails)));
    }

    #[test]
    fn distribution_round_trip() {
        let d = exact_trail_distribution(&appendix_mixture());
        let text = format_distribution(&d);
        assert_eq!(detect_kind(&text), InputKind::Distribution);
        let back: TrailDistribution<f64> = parse_distribution(&text, None).unwrap();
        assert!(back.is_exact());
        assert_eq!(crate::eval::trail_error(&d, &back).unwrap(), 0.0);
    }

    #[test]
    fn detection() {
        assert_eq!(detect_kind("{\"n\": 1}"), InputKind::Mixture);
        assert_eq!(detect_kind("1 2 3 x2\n"), InputKind::Trails);
        assert_eq!(detect_kind("1 2 3 4\n"), InputKind::Trails);
    }
}
