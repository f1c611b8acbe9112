//! Experiment grids over generated instances and the degenerate-chain sweep.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::em::{em_fit, refine, EmConfig, EmInit};
use crate::error::{Error, Result};
use crate::eval::{recovery_error, trail_error};
use crate::io::{generate_mixture, GeneratorSpec};
use crate::model::{exact_trail_distribution, sample_distribution, Mixture, TrailDistribution};
use crate::params::{spectrum_summary, SpectrumSummary};
use crate::spectral::{ca_svd, gkv_svd, RecoveryOptions};

/// Offset between an instance seed and the seed of its trail sample.
pub const SAMPLE_SEED_OFFSET: u64 = 1000;

pub const CSV_HEADER: [&str; 10] = [
    "method",
    "n",
    "L",
    "r",
    "samples",
    "seed",
    "trail_error",
    "recovery_error",
    "wall_ms",
    "em_iters",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    CaSvd,
    GkvSvd,
    Em,
    CaSvdEm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CaSvd, Method::GkvSvd, Method::Em, Method::CaSvdEm];

    pub fn name(self) -> &'static str {
        match self {
            Method::CaSvd => "ca-svd",
            Method::GkvSvd => "gkv-svd",
            Method::Em => "em",
            Method::CaSvdEm => "ca-svd+em",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (ca-svd, gkv-svd, em, ca-svd+em)")))
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Exact 3-trail distribution or an empirical one from `Count` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleSize {
    Exact,
    Count(u64),
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Exact => f.write_str("exact"),
            SampleSize::Count(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for SampleSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(SampleSize::Exact);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("sample size '{s}' is neither 'exact' nor a count")))?;
        if v < 1.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(Error::InvalidArgument(format!(
                "sample size '{s}' is not a positive integer"
            )));
        }
        Ok(SampleSize::Count(v as u64))
    }
}

impl Serialize for SampleSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleSize::Exact => s.serialize_str("exact"),
            SampleSize::Count(c) => s.serialize_u64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for SampleSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Str(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(c) => return Ok(SampleSize::Count(c)),
            Raw::Float(f) => f.to_string(),
            Raw::Str(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A grid of generated instances and the methods run on each.
///
/// Instance seeds are `seeds`, or `0..repeats` when `seeds` is empty.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub n: Vec<usize>,
    #[serde(rename = "L")]
    pub l: Vec<usize>,
    pub r: Vec<usize>,
    pub samples: Vec<SampleSize>,
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_em_iters")]
    pub em_iters: usize,
    #[serde(default = "default_refine_iters")]
    pub refine_iters: usize,
    /// Estimate `r` from the data instead of passing the generator's value.
    #[serde(default)]
    pub estimate_r: bool,
    #[serde(default)]
    pub output: Option<std::path::PathBuf>,
}

fn one() -> usize {
    1
}

fn default_em_iters() -> usize {
    100
}

fn default_refine_iters() -> usize {
    5
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be at least 1".into()));
        }
        if self.n.is_empty() || self.l.is_empty() || self.r.is_empty() || self.samples.is_empty() {
            return Err(Error::InvalidArgument(
                "every grid axis needs at least one value".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods given".into()));
        }
        Ok(())
    }

    pub fn instance_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Grid cells in output order; cells with `r < L` or `n < 2L` are skipped.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &l in &self.l {
                for &r in &self.r {
                    if r < l || n < 2 * l {
                        continue;
                    }
                    for &samples in &self.samples {
                        for seed in self.instance_seeds() {
                            out.push(Cell { n, l, r, samples, seed });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub r: usize,
    pub samples: SampleSize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub method: Method,
    #[serde(flatten)]
    pub cell: Cell,
    /// NaN when the method failed.
    pub trail_error: f64,
    pub recovery_error: f64,
    pub wall_ms: f64,
    pub em_iters: usize,
    pub error: Option<String>,
}

/// The generated mixture and the input distribution of a cell.
pub fn cell_instance(cell: &Cell) -> Result<(Mixture<f64>, TrailDistribution<f64>)> {
    let m: Mixture<f64> = generate_mixture(&GeneratorSpec::new(cell.n, cell.l, cell.r, cell.seed).recoverable())?;
    let d = match cell.samples {
        SampleSize::Exact => exact_trail_distribution(&m),
        SampleSize::Count(c) => sample_distribution(&m, c, cell.seed + SAMPLE_SEED_OFFSET)?,
    };
    Ok((m, d))
}

/// Runs one method on a distribution, returning the learned mixture and the
/// number of EM iterations.
pub fn run_method(
    method: Method,
    dist: &TrailDistribution<f64>,
    l: usize,
    r: Option<usize>,
    seed: u64,
    em_iters: usize,
    refine_iters: usize,
) -> Result<(Mixture<f64>, usize)> {
    let opts = RecoveryOptions {
        seed,
        ..Default::default()
    };
    match method {
        Method::CaSvd => Ok((ca_svd(dist, l, r, &opts)?.mixture, 0)),
        Method::GkvSvd => Ok((gkv_svd(dist, l, &opts)?.mixture, 0)),
        Method::Em => {
            let cfg = EmConfig {
                max_iters: em_iters,
                init: EmInit::Random(seed),
                ..Default::default()
            };
            let fit = em_fit(dist, l, &cfg)?;
            Ok((fit.mixture, fit.iterations))
        }
        Method::CaSvdEm => {
            let seed_mixture = ca_svd(dist, l, r, &opts)?.mixture;
            let fit = refine(dist, &seed_mixture, refine_iters)?;
            Ok((fit.mixture, fit.iterations))
        }
    }
}

fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> Vec<Row> {
    let failed = |method: Method, e: &Error| Row {
        method,
        cell: *cell,
        trail_error: f64::NAN,
        recovery_error: f64::NAN,
        wall_ms: f64::NAN,
        em_iters: 0,
        error: Some(e.to_string()),
    };
    let (truth, dist) = match cell_instance(cell) {
        Ok(x) => x,
        Err(e) => return spec.methods.iter().map(|&m| failed(m, &e)).collect(),
    };
    let truth_dist = exact_trail_distribution(&truth);
    let r = (!spec.estimate_r).then_some(cell.r);
    spec.methods
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let out = run_method(method, &dist, cell.l, r, cell.seed, spec.em_iters, spec.refine_iters);
            let wall_ms = t.elapsed().as_secs_f64() * 1e3;
            let scored = out.and_then(|(m, iters)| {
                let te = trail_error(&truth_dist, &exact_trail_distribution(&m))?;
                let re = recovery_error(&truth, &m)?.value;
                Ok((te, re, iters))
            });
            match scored {
                Ok((trail_error, recovery_error, em_iters)) => Row {
                    method,
                    cell: *cell,
                    trail_error,
                    recovery_error,
                    wall_ms,
                    em_iters,
                    error: None,
                },
                Err(e) => failed(method, &e),
            }
        })
        .collect()
}

/// Runs every cell in parallel; rows come back in cell order, then method order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let cells = spec.cells();
    let per_cell: Vec<Vec<Row>> = cells.par_iter().map(|c| run_cell(spec, c)).collect();
    Ok(per_cell.into_iter().flatten().collect())
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.16e}")
    }
}

/// Rows as CSV; failed runs have empty metric fields.
pub fn rows_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let c = &row.cell;
        w.write_record([
            row.method.to_string(),
            c.n.to_string(),
            c.l.to_string(),
            c.r.to_string(),
            c.samples.to_string(),
            c.seed.to_string(),
            num(row.trail_error),
            num(row.recovery_error),
            num(row.wall_ms),
            row.em_iters.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub r: usize,
    pub samples: SampleSize,
    pub runs: usize,
    pub failures: usize,
    pub trail_error_q25: f64,
    pub trail_error_median: f64,
    pub trail_error_q75: f64,
    pub recovery_error_q25: f64,
    pub recovery_error_median: f64,
    pub recovery_error_q75: f64,
    pub wall_ms_median: f64,
}

/// Quartiles per (method, n, L, r, samples) over the successful seeds.
pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, usize, usize, usize, SampleSize)> = Vec::new();
    for row in rows {
        let k = (row.method, row.cell.n, row.cell.l, row.cell.r, row.cell.samples);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, n, l, r, samples)| {
            let group: Vec<&Row> = rows
                .iter()
                .filter(|x| (x.method, x.cell.n, x.cell.l, x.cell.r, x.cell.samples) == (method, n, l, r, samples))
                .collect();
            let ok: Vec<&&Row> = group.iter().filter(|x| x.error.is_none()).collect();
            let sorted = |f: fn(&Row) -> f64| {
                let mut v: Vec<f64> = ok.iter().map(|x| f(x)).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let te = sorted(|x| x.trail_error);
            let re = sorted(|x| x.recovery_error);
            let ms = sorted(|x| x.wall_ms);
            SummaryRow {
                method,
                n,
                l,
                r,
                samples,
                runs: group.len(),
                failures: group.len() - ok.len(),
                trail_error_q25: quantile(&te, 0.25),
                trail_error_median: quantile(&te, 0.5),
                trail_error_q75: quantile(&te, 0.75),
                recovery_error_q25: quantile(&re, 0.25),
                recovery_error_median: quantile(&re, 0.5),
                recovery_error_q75: quantile(&re, 0.75),
                wall_ms_median: quantile(&ms, 0.5),
            }
        })
        .collect()
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from(
        "method,n,L,r,samples,runs,failures,trail_error_q25,trail_error_median,trail_error_q75,\
         recovery_error_q25,recovery_error_median,recovery_error_q75,wall_ms_median\n",
    );
    for s in summary {
        let vals = [
            s.trail_error_q25,
            s.trail_error_median,
            s.trail_error_q75,
            s.recovery_error_q25,
            s.recovery_error_median,
            s.recovery_error_q75,
            s.wall_ms_median,
        ];
        let vals: Vec<String> = vals.iter().map(|&v| num(v)).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.method,
            s.n,
            s.l,
            s.r,
            s.samples,
            s.runs,
            s.failures,
            vals.join(",")
        ));
    }
    out
}

/// Which chains are pulled together in the degenerate sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// `M¹ ← (1−λ)M¹ + λM²`.
    One,
    /// Additionally `M³ ← (1−λ)M³ + λM⁴`.
    Two,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Scenario::One),
            "2" => Ok(Scenario::Two),
            _ => Err(Error::InvalidArgument(format!("scenario must be 1 or 2, got '{s}'"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::One => "1",
            Scenario::Two => "2",
        })
    }
}

/// `0, 0.1, …, 1`.
pub fn default_lambdas() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Moves chains of `base` towards each other by `lambda`.
pub fn degenerate_mixture(base: &Mixture<f64>, scenario: Scenario, lambda: f64) -> Result<Mixture<f64>> {
    let need = match scenario {
        Scenario::One => 2,
        Scenario::Two => 4,
    };
    if base.l() < need {
        return Err(Error::InvalidArgument(format!(
            "scenario {scenario} needs at least {need} chains"
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} is outside [0, 1]")));
    }
    let mut chains = base.chains().to_vec();
    chains[0] = base.chain(0) * (1.0 - lambda) + base.chain(1) * lambda;
    if scenario == Scenario::Two {
        chains[2] = base.chain(2) * (1.0 - lambda) + base.chain(3) * lambda;
    }
    Mixture::new(base.start().clone(), chains)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub scenario: Scenario,
    pub seed: u64,
    pub lambda: f64,
    pub summary: SpectrumSummary,
}

/// Spectrum summaries of the exact distributions along the sweep, for fully
/// connected base mixtures drawn with each seed.
pub fn degenerate_sweep(
    n: usize,
    l: usize,
    scenario: Scenario,
    seeds: &[u64],
    lambdas: &[f64],
) -> Result<Vec<SweepPoint>> {
    let jobs: Vec<(u64, f64)> = seeds
        .iter()
        .flat_map(|&s| lambdas.iter().map(move |&x| (s, x)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, lambda)| {
            let base = generate_mixture(&GeneratorSpec::new(n, l, l, seed))?;
            let m = degenerate_mixture(&base, scenario, lambda)?;
            let summary = spectrum_summary(&exact_trail_distribution(&m))?;
            Ok(SweepPoint {
                scenario,
                seed,
                lambda,
                summary,
            })
        })
        .collect()
}

/// Long CSV with header `scenario,seed,lambda,chosen_L,i,sigma_bar,ratio`.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("scenario,seed,lambda,chosen_L,i,sigma_bar,ratio\n");
    for p in points {
        for (i, s) in p.summary.sigma_bar.iter().enumerate() {
            let ratio = p.summary.ratios.get(i).map_or(String::new(), |r| num(*r));
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.scenario,
                p.seed,
                p.lambda,
                p.summary.chosen_l,
                i + 1,
                num(*s),
                ratio
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn spec_parses_from_json() {
        let s: ExperimentSpec = serde_json::from_str(
            r#"{"n":[8],"L":[2],"r":[2,3],"samples":["exact",1e4],"methods":["ca-svd","ca-svd+em"],"repeats":2}"#,
        )
        .unwrap();
        assert_eq!(s.samples, vec![SampleSize::Exact, SampleSize::Count(10_000)]);
        assert_eq!(s.methods, vec![Method::CaSvd, Method::CaSvdEm]);
        assert_eq!(s.cells().len(), 2 * 2 * 2);
        assert_eq!(s.instance_seeds(), vec![0, 1]);
        assert_eq!(s.em_iters, 100);
    }

    #[test]
    fn small_grid_runs_in_order() {
        let spec = ExperimentSpec {
            n: vec![6],
            l: vec![2],
            r: vec![2, 3],
            samples: vec![SampleSize::Exact],
            methods: vec![Method::CaSvd, Method::Em],
            repeats: 2,
            seeds: vec![],
            em_iters: 3,
            refine_iters: 5,
            estimate_r: false,
            output: None,
        };
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].method, Method::CaSvd);
        assert_eq!(rows[1].method, Method::Em);
        assert_eq!((rows[2].cell.r, rows[2].cell.seed), (2, 1));
        assert!(rows[0].recovery_error < 1e-6);
        let csv = rows_csv(&rows).unwrap();
        assert!(csv.starts_with("method,n,L,r,samples,seed,trail_error,recovery_error,wall_ms,em_iters\n"));
        assert_eq!(csv.lines().count(), 9);
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 4);
        assert_eq!(summary[0].runs, 2);
    }

    #[test]
    fn scenario_two_at_one_has_three_distinct_chains() {
        let base = generate_mixture::<f64>(&GeneratorSpec::new(10, 5, 5, 3)).unwrap();
        let m = degenerate_mixture(&base, Scenario::Two, 1.0).unwrap();
        assert_eq!(m.chain(0), base.chain(1));
        assert_eq!(m.chain(2), base.chain(3));
        let m = degenerate_mixture(&base, Scenario::One, 0.0).unwrap();
        assert_eq!(m, base);
    }
}
