//! Bernoulli adjacency sampling, degree profiles and the edge-list format.
//!
//! Randomness is keyed: row `i` of a sample draws from a ChaCha stream whose
//! key is `(seed, i)` and whose stream id is the caller's stream, so the coin
//! for pair `(i, j)` never depends on how rows are scheduled.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DegreeVector, ModelParams};

/// Largest graph `sample_graph` will scan pair by pair.
pub const MAX_SAMPLE_NODES: usize = 30_000;

const TAG_EDGES: u64 = 0x6564_6765;
const TAG_THETA: u64 = 0x7468_6574;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleSeed {
    pub seed: u64,
    pub stream: u64,
}

impl SampleSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        SampleSeed { seed, stream }
    }

    /// Independent generator for the sub-key `(tag, index)`.
    pub fn rng(&self, tag: u64, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&tag.to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng
    }

    /// Derive a child seed, e.g. per (cell, trial) in a sweep.
    pub fn child(&self, a: u64, b: u64) -> SampleSeed {
        let mut rng = self.rng(a, b);
        SampleSeed {
            seed: rng.random(),
            stream: rng.random(),
        }
    }
}

/// Simple undirected graph on nodes `0..n` with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    adj: Vec<Vec<u32>>,
    n_edges: usize,
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            adj: vec![Vec::new(); n],
            n_edges: 0,
        }
    }

    /// Build from unordered pairs; rejects self-loops, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            for index in [a, b] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            adj[a].push(b as u32);
            adj[b].push(a as u32);
        }
        Self::from_adjacency(n, adj)
    }

    fn from_adjacency(n: usize, mut adj: Vec<Vec<u32>>) -> Result<Self> {
        let mut twice = 0;
        for (i, row) in adj.iter_mut().enumerate() {
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge {{{i}, {}}}",
                    w[0]
                )));
            }
            twice += row.len();
        }
        Ok(SparseGraph {
            n,
            adj,
            n_edges: twice / 2,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&(j as u32)).is_ok()
    }

    /// Edges `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().zip(&self.adj).for_each(|(yi, row)| {
            *yi = row.iter().map(|&j| x[j as usize]).sum();
        });
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n {}", self.n)?;
        for (i, j) in self.edges() {
            writeln!(out, "{} {}", i + 1, j + 1)?;
        }
        out.flush()
    }

    /// Parse the `n <n>` header followed by 1-indexed `i j` lines.
    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = input.lines().enumerate();
        let n = loop {
            let Some((idx, line)) = lines.next() else {
                return Err(parse_err(1, "missing header 'n <n>'".into()));
            };
            let line = line.map_err(|e| parse_err(idx + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some("n"), Some(v), None) => {
                    break v
                        .parse::<usize>()
                        .map_err(|e| parse_err(idx + 1, format!("bad node count '{v}': {e}")))?
                }
                _ => return Err(parse_err(idx + 1, format!("expected header 'n <n>', got '{line}'"))),
            }
        };
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(lineno, format!("expected 'i j', got '{line}'")));
            }
            let mut ends = [0usize; 2];
            for (slot, f) in ends.iter_mut().zip(&fields) {
                let v: usize = f
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("'{f}' is not a node index")))?;
                if v == 0 || v > n {
                    return Err(parse_err(lineno, format!("node {v} outside 1..={n}")));
                }
                *slot = v - 1;
            }
            let (a, b) = (ends[0].min(ends[1]), ends[0].max(ends[1]));
            if a == b {
                return Err(parse_err(lineno, format!("self-loop at node {}", a + 1)));
            }
            if !seen.insert((a, b)) {
                return Err(parse_err(lineno, format!("duplicate pair {} {}", a + 1, b + 1)));
            }
            adj[a].push(b as u32);
            adj[b].push(a as u32);
        }
        Self::from_adjacency(n, adj)
    }
}

/// Draw `A` with independent `Bernoulli(Omega_ij)` entries above the diagonal.
pub fn sample_graph(params: &ModelParams, seed: SampleSeed) -> Result<SparseGraph> {
    let n = params.n();
    if n > MAX_SAMPLE_NODES {
        return Err(Error::InvalidParameter(format!(
            "n = {n} exceeds the exact sampling limit of {MAX_SAMPLE_NODES}"
        )));
    }
    let upper: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.rng(TAG_EDGES, i as u64);
            let u = params.p().apply(params.pi().row(i));
            let ti = params.theta().get(i);
            let theta = params.theta().as_slice();
            (i + 1..n)
                .filter(|&j| {
                    let p = ti * theta[j] * crate::model::dot(&u, params.pi().row(j));
                    rng.random::<f64>() < p
                })
                .map(|j| j as u32)
                .collect()
        })
        .collect();
    let mut adj = upper.clone();
    for (i, row) in upper.iter().enumerate() {
        for &j in row {
            adj[j as usize].push(i as u32);
        }
    }
    SparseGraph::from_adjacency(n, adj)
}

/// How degree parameters are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThetaProfile {
    Constant { value: f64 },
    /// Pareto with scale `floor` and shape `alpha`.
    Pareto { alpha: f64, floor: f64 },
    /// The first `floor(frac * n)` nodes get `low`, the rest `high`.
    TwoLevel { frac: f64, low: f64, high: f64 },
}

impl fmt::Display for ThetaProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaProfile::Constant { value } => write!(f, "constant:{value}"),
            ThetaProfile::Pareto { alpha, floor } => write!(f, "pareto:{alpha},{floor}"),
            ThetaProfile::TwoLevel { frac, low, high } => write!(f, "two-level:{frac},{low},{high}"),
        }
    }
}

impl FromStr for ThetaProfile {
    type Err = Error;

    /// `constant:V`, `pareto:ALPHA,FLOOR` or `two-level:FRAC,LOW,HIGH`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised theta profile '{s}'"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind, nums.as_slice()) {
            ("constant", [value]) => Ok(ThetaProfile::Constant { value: *value }),
            ("pareto", [alpha, floor]) => Ok(ThetaProfile::Pareto {
                alpha: *alpha,
                floor: *floor,
            }),
            ("two-level", [frac, low, high]) => Ok(ThetaProfile::TwoLevel {
                frac: *frac,
                low: *low,
                high: *high,
            }),
            _ => Err(bad()),
        }
    }
}

/// Degree parameters for `n` nodes, optionally rescaled to mean `target_mean`.
pub fn generate_theta(
    n: usize,
    profile: &ThetaProfile,
    target_mean: Option<f64>,
    seed: SampleSeed,
) -> Result<DegreeVector> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
        }
    };
    let mut theta = match *profile {
        ThetaProfile::Constant { value } => {
            positive("value", value)?;
            vec![value; n]
        }
        ThetaProfile::Pareto { alpha, floor } => {
            positive("alpha", alpha)?;
            positive("floor", floor)?;
            let dist = Pareto::new(floor, alpha)
                .map_err(|e| Error::InvalidParameter(format!("pareto: {e}")))?;
            let mut rng = seed.rng(TAG_THETA, 0);
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        ThetaProfile::TwoLevel { frac, low, high } => {
            positive("low", low)?;
            positive("high", high)?;
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::InvalidParameter(format!("frac = {frac} outside [0, 1]")));
            }
            let n_low = (frac * n as f64).floor() as usize;
            (0..n).map(|i| if i < n_low { low } else { high }).collect()
        }
    };
    if let Some(target) = target_mean {
        positive("target mean", target)?;
        let mean = theta.iter().sum::<f64>() / n as f64;
        let s = target / mean;
        theta.iter_mut().for_each(|t| *t *= s);
    }
    DegreeVector::new(theta)
}
