//! Monte-Carlo rate sweeps: simulate, estimate, score, summarize.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::MixedScore;
use crate::loss::loss_report;
use crate::model::{check_theta_class, MembershipMatrix, MixingMatrix, ModelParams};
use crate::sampler::{generate_theta, sample_graph, SampleSeed, ThetaProfile};

/// A cell is invalid when more than this fraction of its trials fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;
pub const TRIALS_HEADER: &str = "n,theta_bar,n_theta_bar_sq,K,trial,seed,loss_weighted,loss_unweighted,failed";
pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

const THETA_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub theta: ThetaProfile,
    #[serde(default)]
    pub target_mean: Option<f64>,
    /// Fraction of nodes that are mixed; the rest are pure and balanced.
    #[serde(default)]
    pub mixed_fraction: f64,
    /// Memberships cycled over the mixed nodes; the barycenter when absent.
    #[serde(default)]
    pub mixed_pmfs: Option<Vec<Vec<f64>>>,
    /// Random-stream key; derived from the cell contents when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_class_c() -> f64 {
    0.1
}

fn default_scope_ratio() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub cells: Vec<CellConfig>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub estimator: MixedScore,
    /// Replace the estimator by the true memberships (for debugging the harness).
    #[serde(default)]
    pub oracle: bool,
    /// `c` used for the degree-class check of each cell.
    #[serde(default = "default_class_c")]
    pub class_c: f64,
    /// Cells with `theta_max / theta_min` above this are tagged as outside the rate's scope.
    #[serde(default = "default_scope_ratio")]
    pub scope_ratio: f64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            if !(0.0..1.0).contains(&cell.mixed_fraction) {
                return Err(Error::InvalidParameter(format!(
                    "cell {c}: mixed_fraction {} outside [0, 1)",
                    cell.mixed_fraction
                )));
            }
            if cell.k < 2 || cell.n < cell.k {
                return Err(Error::InvalidParameter(format!("cell {c}: need 2 <= K <= n")));
            }
        }
        Ok(())
    }
}

/// FNV-1a, used to key a cell's random stream by its contents.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl CellConfig {
    pub fn stream_key(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let text = serde_json::to_string(self).expect("cell config serializes");
            fnv1a(text.as_bytes())
        })
    }

    /// Degrees, memberships and mixing matrix of this cell.
    pub fn build(&self, base_seed: u64) -> Result<ModelParams> {
        let root = SampleSeed::new(base_seed, 0);
        let theta = generate_theta(
            self.n,
            &self.theta,
            self.target_mean,
            root.child(self.stream_key(), THETA_STREAM),
        )?;
        let p = MixingMatrix::new(self.p.clone())?;
        if p.k() != self.k {
            return Err(Error::DimensionMismatch(format!("P is {0}x{0}, K = {1}", p.k(), self.k)));
        }
        let n_mixed = (self.n as f64 * self.mixed_fraction).round() as usize;
        let bary = vec![vec![1.0 / self.k as f64; self.k]];
        let mixed = self.mixed_pmfs.as_ref().unwrap_or(&bary);
        if mixed.is_empty() && n_mixed > 0 {
            return Err(Error::InvalidParameter("mixed_pmfs is empty".into()));
        }
        let pi = MembershipMatrix::pure_then_mixed(self.n - n_mixed, self.k, mixed, n_mixed)?;
        ModelParams::new(theta, pi, p)
    }

    fn trial_seed(&self, base_seed: u64, trial: usize) -> SampleSeed {
        SampleSeed::new(base_seed, 0).child(self.stream_key(), trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub n: usize,
    pub theta_bar: f64,
    pub n_theta_bar_sq: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub loss_weighted: Option<f64>,
    pub loss_unweighted: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub theta_profile: String,
    pub theta_bar: f64,
    pub n_theta_bar_sq: f64,
    pub mixed_fraction: f64,
    pub trials: usize,
    pub failures: usize,
    pub valid: bool,
    pub mean_loss_weighted: Option<f64>,
    pub stderr_loss_weighted: Option<f64>,
    pub mean_loss_unweighted: Option<f64>,
    pub stderr_loss_unweighted: Option<f64>,
    pub theta_class: bool,
    pub in_rate_scope: bool,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub slope_ci: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Sorted by (cell, trial).
    pub rows: Vec<TrialRow>,
    pub cells: Vec<CellSummary>,
    pub slope: Option<SlopeFit>,
}

impl SweepResult {
    pub fn all_valid(&self) -> bool {
        self.cells.iter().all(|c| c.valid)
    }
}

/// Ordinary least squares of `log y` on `log x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidParameter("log-log fit needs positive finite values".into()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs at least 3 distinct x values, got {}",
            xs.len()
        )));
    }
    let m = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        ci_halfwidth: 2.0 * se,
    })
}

fn mean_se(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let se = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(se))
}

fn run_trial(cfg: &SweepConfig, params: &ModelParams, seed: SampleSeed) -> Result<(f64, f64)> {
    let graph = sample_graph(params, seed)?;
    let pi_hat = if cfg.oracle {
        params.pi().clone()
    } else {
        cfg.estimator.estimate(&graph, params.k(), seed.seed)?.pi_hat
    };
    let report = loss_report(&pi_hat, params.pi(), params.theta(), false)?;
    Ok((report.weighted, report.unweighted))
}

/// Run every (cell, trial). Estimator errors mark the trial failed; errors in
/// building a cell's parameters abort the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let params: Vec<ModelParams> = cfg
        .cells
        .iter()
        .map(|c| c.build(cfg.base_seed))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let rows: Vec<TrialRow> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let p = &params[c];
            let seed = cfg.cells[c].trial_seed(cfg.base_seed, t);
            let outcome = run_trial(cfg, p, seed).ok();
            TrialRow {
                n: p.n(),
                theta_bar: p.theta().mean(),
                n_theta_bar_sq: p.theta().n_theta_bar_sq(),
                k: p.k(),
                trial: t,
                seed: seed.seed,
                loss_weighted: outcome.map(|o| o.0),
                loss_unweighted: outcome.map(|o| o.1),
                failed: outcome.is_none(),
            }
        })
        .collect();

    let mut cells = Vec::with_capacity(cfg.cells.len());
    for (c, (cell, p)) in cfg.cells.iter().zip(&params).enumerate() {
        let mine = &rows[c * cfg.trials..(c + 1) * cfg.trials];
        let w: Vec<f64> = mine.iter().filter_map(|r| r.loss_weighted).collect();
        let u: Vec<f64> = mine.iter().filter_map(|r| r.loss_unweighted).collect();
        let failures = mine.iter().filter(|r| r.failed).count();
        let (mean_w, se_w) = mean_se(&w);
        let (mean_u, se_u) = mean_se(&u);
        let class = check_theta_class(p.theta(), p.k(), cfg.class_c)?;
        cells.push(CellSummary {
            cell: c,
            n: p.n(),
            k: p.k(),
            theta_profile: cell.theta.to_string(),
            theta_bar: p.theta().mean(),
            n_theta_bar_sq: p.theta().n_theta_bar_sq(),
            mixed_fraction: cell.mixed_fraction,
            trials: cfg.trials,
            failures,
            valid: (failures as f64) <= MAX_FAILURE_FRACTION * cfg.trials as f64 && !w.is_empty(),
            mean_loss_weighted: mean_w,
            stderr_loss_weighted: se_w,
            mean_loss_unweighted: mean_u,
            stderr_loss_unweighted: se_u,
            theta_class: class.member,
            in_rate_scope: p.theta().max() <= cfg.scope_ratio * p.theta().min(),
            slope: None,
            intercept: None,
            slope_ci: None,
        });
    }
    let points: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.valid)
        .filter_map(|c| c.mean_loss_weighted.map(|m| (c.n_theta_bar_sq, m)))
        .collect();
    let slope = fit_loglog_slope(&points).ok();
    if let Some(fit) = slope {
        for c in cells.iter_mut() {
            c.slope = Some(fit.slope);
            c.intercept = Some(fit.intercept);
            c.slope_ci = Some(fit.ci_halfwidth);
        }
    }
    Ok(SweepResult { rows, cells, slope })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn write_rows<T: Serialize, W: Write>(out: W, header: Option<&str>, rows: &[T]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(out);
    if rows.is_empty() {
        if let Some(h) = header {
            w.write_record(h.split(','))?;
        }
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Header line of the summary file.
pub fn summary_header() -> String {
    [
        "cell", "n", "K", "theta_profile", "theta_bar", "n_theta_bar_sq", "mixed_fraction", "trials",
        "failures", "valid", "mean_loss_weighted", "stderr_loss_weighted", "mean_loss_unweighted",
        "stderr_loss_unweighted", "theta_class", "in_rate_scope", "slope", "intercept", "slope_ci",
    ]
    .join(",")
}

/// Write `trials.csv` and `summary.csv` into `dir`.
pub fn emit_csv(result: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tp = dir.join(TRIALS_FILE);
    write_rows(create(&tp)?, Some(TRIALS_HEADER), &result.rows).map_err(Error::from)?;
    let sp = dir.join(SUMMARY_FILE);
    write_rows(create(&sp)?, Some(&summary_header()), &result.cells).map_err(Error::from)?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(Error::from)
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>> {
    read_rows(path)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<CellSummary>> {
    read_rows(path)
}
