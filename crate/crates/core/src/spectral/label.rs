use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Every set must carry all labels.
    Exact,
    /// Minimise the number of repeated labels within sets.
    LeastOverlap,
}

/// Labels `a: [r] → [L]` such that every set in `sets` (each of `L`
/// component indices) carries all `L` labels.
///
/// Exact mode returns the lexicographically smallest feasible assignment.
/// Least-overlap mode returns the lexicographically smallest assignment
/// with the fewest collisions, a collision being a label repeated within a set.
pub fn label_assignment(sets: &[Vec<usize>], r: usize, l: usize, mode: LabelMode) -> Result<Vec<usize>> {
    validate(sets, r, l)?;
    match mode {
        LabelMode::Exact => feasible_labelings(sets, r, l, 1)?
            .into_iter()
            .next()
            .ok_or(Error::InfeasibleLabeling),
        LabelMode::LeastOverlap => Ok(least_overlap(sets, r, l).0),
    }
}

fn validate(sets: &[Vec<usize>], r: usize, l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::InvalidArgument("L must be positive".into()));
    }
    for s in sets {
        if s.len() != l {
            return Err(Error::InvalidArgument(format!(
                "component set of size {}, expected {l}",
                s.len()
            )));
        }
        if let Some(&q) = s.iter().find(|&&q| q >= r) {
            return Err(Error::InvalidArgument(format!("component {} out of range", q + 1)));
        }
    }
    Ok(())
}

struct Search<'a> {
    sets_of: Vec<Vec<usize>>,
    sets: &'a [Vec<usize>],
    l: usize,
    a: Vec<usize>,
    limit: usize,
    out: Vec<Vec<usize>>,
}

impl Search<'_> {
    /// Labels of the assigned members of set `s`, as a bitmask.
    fn used(&self, s: usize) -> u64 {
        self.sets[s]
            .iter()
            .filter(|&&q| self.a[q] != usize::MAX)
            .fold(0, |m, &q| m | (1 << self.a[q]))
    }

    /// Every set touching `q` still has as many free labels as unassigned members.
    fn forward_ok(&self, q: usize) -> bool {
        self.sets_of[q].iter().all(|&s| {
            let used = self.used(s).count_ones() as usize;
            let open = self.sets[s].iter().filter(|&&p| self.a[p] == usize::MAX).count();
            used + open <= self.l
        })
    }
}

fn index_sets(sets: &[Vec<usize>], r: usize) -> Vec<Vec<usize>> {
    let mut sets_of = vec![Vec::new(); r];
    for (s, set) in sets.iter().enumerate() {
        for &q in set {
            if !sets_of[q].contains(&s) {
                sets_of[q].push(s);
            }
        }
    }
    sets_of
}

/// Up to `limit` feasible assignments in increasing lexicographic order,
/// one per relabeling class (labels appear in order of first use).
pub fn feasible_labelings(sets: &[Vec<usize>], r: usize, l: usize, limit: usize) -> Result<Vec<Vec<usize>>> {
    validate(sets, r, l)?;
    if l > 64 {
        return Err(Error::InvalidArgument("at most 64 chains".into()));
    }
    let mut s = Search {
        sets_of: index_sets(sets, r),
        sets,
        l,
        a: vec![usize::MAX; r],
        limit: limit.max(1),
        out: Vec::new(),
    };
    if r > 0 {
        s.step(0, 0);
    }
    Ok(s.out)
}

impl Search<'_> {
    /// `next` is the smallest label not yet used anywhere.
    fn step(&mut self, q: usize, next: usize) {
        if self.out.len() >= self.limit {
            return;
        }
        if q == self.a.len() {
            self.out.push(self.a.clone());
            return;
        }
        let top = next.min(self.l - 1);
        for v in 0..=top {
            if self.sets_of[q].iter().any(|&s| self.used(s) & (1 << v) != 0) {
                continue;
            }
            self.a[q] = v;
            if self.forward_ok(q) {
                self.step(q + 1, next.max(v + 1));
            }
            self.a[q] = usize::MAX;
            if self.out.len() >= self.limit {
                return;
            }
        }
    }
}

/// Branch and bound over canonical assignments; returns the best assignment
/// and its collision count.
pub fn least_overlap(sets: &[Vec<usize>], r: usize, l: usize) -> (Vec<usize>, usize) {
    let sets_of = index_sets(sets, r);
    let mut a = vec![usize::MAX; r];
    let mut best = (vec![0; r], usize::MAX);
    fn go(
        q: usize,
        next: usize,
        cost: usize,
        a: &mut Vec<usize>,
        sets: &[Vec<usize>],
        sets_of: &[Vec<usize>],
        l: usize,
        best: &mut (Vec<usize>, usize),
    ) {
        if cost >= best.1 {
            return;
        }
        if q == a.len() {
            *best = (a.clone(), cost);
            return;
        }
        let top = next.min(l - 1);
        for v in 0..=top {
            let extra = sets_of[q]
                .iter()
                .filter(|&&s| sets[s].iter().any(|&p| p != q && a[p] == v))
                .count();
            a[q] = v;
            go(q + 1, next.max(v + 1), cost + extra, a, sets, sets_of, l, best);
            a[q] = usize::MAX;
        }
    }
    if r == 0 {
        return (Vec::new(), 0);
    }
    go(0, 0, 0, &mut a, sets, &sets_of, l, &mut best);
    best
}
