//! DCMM parameters `(theta, Pi, P)` and the expected adjacency they induce.
//!
//! Node `i` and node `j` are joined with probability
//! `theta_i * theta_j * pi_i' P pi_j`. All types validate their invariants on
//! construction and are immutable afterwards.

mod classes;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use classes::{
    check_pi_class, check_pi_star_class, check_theta_class, PiClassClause, PiClassReport,
    ThetaClassReport,
};

/// Rows whose largest entry reaches `1 - PURITY_BAND` count as pure.
pub const PURITY_BAND: f64 = 1e-9;

/// Largest `n` for which [`ModelParams::assemble_omega`] materializes Omega.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

const ROW_SUM_TOL: f64 = 1e-12;
const SINGULAR_TOL: f64 = 1e-10;

/// Symmetric, nonnegative, unit-diagonal, non-singular `K x K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl MixingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::InvalidMixingMatrix(format!("K = {k}, need K >= 2")));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::InvalidMixingMatrix(format!(
                "row {bad} has {} entries, expected {k}",
                rows[bad].len()
            )));
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        let m = MixingMatrix { k, entries };
        m.validate()?;
        Ok(m)
    }

    /// The two-community matrix `[[1, 1 - a], [1 - a, 1]]` for `a` in `(0, 1]`.
    pub fn two_block(a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidMixingMatrix(format!("a = {a} outside (0, 1]")));
        }
        Self::new(vec![vec![1.0, 1.0 - a], vec![1.0 - a, 1.0]])
    }

    /// Unit diagonal with a constant off-diagonal `b`.
    pub fn constant_off_diagonal(k: usize, b: f64) -> Result<Self> {
        let rows = (0..k)
            .map(|r| (0..k).map(|c| if r == c { 1.0 } else { b }).collect())
            .collect();
        Self::new(rows)
    }

    fn validate(&self) -> Result<()> {
        let k = self.k;
        for r in 0..k {
            if self.get(r, r) != 1.0 {
                return Err(Error::InvalidMixingMatrix(format!(
                    "diagonal entry ({r}, {r}) = {} is not 1",
                    self.get(r, r)
                )));
            }
            for c in 0..k {
                let v = self.get(r, c);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidMixingMatrix(format!(
                        "entry ({r}, {c}) = {v} is not a nonnegative number"
                    )));
                }
                if v != self.get(c, r) {
                    return Err(Error::InvalidMixingMatrix(format!(
                        "not symmetric at ({r}, {c})"
                    )));
                }
            }
        }
        let smin = self.to_dmatrix().singular_values().min();
        if smin <= SINGULAR_TOL {
            return Err(Error::InvalidMixingMatrix(format!(
                "singular (smallest singular value {smin:.3e})"
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.k + c]
    }

    /// `x' P y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, xr) in x.iter().enumerate() {
            if *xr == 0.0 {
                continue;
            }
            let row = &self.entries[r * self.k..(r + 1) * self.k];
            acc += xr * row.iter().zip(y).map(|(p, yc)| p * yc).sum::<f64>();
        }
        acc
    }

    /// `P x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.k)
            .map(|row| row.iter().zip(x).map(|(p, v)| p * v).sum())
            .collect()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks_exact(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k, self.k, &self.entries)
    }
}

/// Positive degree-heterogeneity parameters with cached summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector {
    theta: Vec<f64>,
    sorted: Vec<f64>,
    mean: f64,
}

impl DegreeVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidDegrees("empty degree vector".into()));
        }
        if let Some(i) = theta.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidDegrees(format!(
                "theta[{i}] = {} is not strictly positive",
                theta[i]
            )));
        }
        let mut sorted = theta.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted[0] == sorted[sorted.len() - 1] {
            sorted[0]
        } else {
            theta.iter().sum::<f64>() / theta.len() as f64
        };
        Ok(DegreeVector {
            theta,
            sorted,
            mean,
        })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.theta[i]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn max(&self) -> f64 {
        *self.sorted.last().unwrap()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    /// Ascending order statistics.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// The `m`-th smallest entry, 1-based.
    pub fn order_statistic(&self, m: usize) -> f64 {
        self.sorted[m.clamp(1, self.len()) - 1]
    }

    pub fn norm_sq(&self) -> f64 {
        self.theta.iter().map(|t| t * t).sum()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.theta.iter().map(|t| t * s).collect())
    }

    /// `n * theta_bar^2`, the effective signal size of the network.
    pub fn n_theta_bar_sq(&self) -> f64 {
        self.len() as f64 * self.mean * self.mean
    }
}

/// `n x K` matrix whose rows are PMFs over the communities.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl MembershipMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::InvalidMembership(format!(
                "row {bad} has {} entries, expected {k}",
                rows[bad].len()
            )));
        }
        Self::from_flat(n, k, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::InvalidMembership(format!("empty shape {n} x {k}")));
        }
        if data.len() != n * k {
            return Err(Error::InvalidMembership(format!(
                "{} entries for shape {n} x {k}",
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(k).enumerate() {
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                return Err(Error::InvalidMembership(format!(
                    "row {i} has entry {v} outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMembership(format!("row {i} sums to {s}")));
            }
        }
        Ok(MembershipMatrix { n, k, data })
    }

    /// Balanced pure nodes followed by `n_mixed` rows cycling through `mixed`.
    pub fn pure_then_mixed(n_pure: usize, k: usize, mixed: &[Vec<f64>], n_mixed: usize) -> Result<Self> {
        let mut rows = Vec::with_capacity(n_pure + n_mixed);
        for i in 0..n_pure {
            let mut r = vec![0.0; k];
            r[i * k / n_pure.max(1)] = 1.0;
            rows.push(r);
        }
        for i in 0..n_mixed {
            rows.push(mixed[i % mixed.len()].clone());
        }
        Self::new(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Community index if row `i` is pure (within [`PURITY_BAND`]).
    pub fn pure_label(&self, i: usize) -> Option<usize> {
        pure_label(self.row(i))
    }

    /// Reorder the columns: new column `c` is old column `perm[c]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let data = self
            .rows()
            .flat_map(|r| perm.iter().map(move |&c| r[c]))
            .collect();
        MembershipMatrix {
            n: self.n,
            k: self.k,
            data,
        }
    }

    /// Reorder the rows: new row `i` is old row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let data = order.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        MembershipMatrix {
            n: self.n,
            k: self.k,
            data,
        }
    }
}

pub(crate) fn pure_label(row: &[f64]) -> Option<usize> {
    let (idx, max) = row
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    (max >= 1.0 - PURITY_BAND).then_some(idx)
}

/// The DCMM triple. Every off-diagonal edge probability is checked to lie in
/// `[0, 1]` at construction; nothing is clipped later.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    theta: DegreeVector,
    pi: MembershipMatrix,
    p: MixingMatrix,
}

impl ModelParams {
    pub fn new(theta: DegreeVector, pi: MembershipMatrix, p: MixingMatrix) -> Result<Self> {
        if theta.len() != pi.n() {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} entries, Pi has {} rows",
                theta.len(),
                pi.n()
            )));
        }
        if pi.k() != p.k() {
            return Err(Error::DimensionMismatch(format!(
                "Pi has {} columns, P is {k} x {k}",
                pi.k(),
                k = p.k()
            )));
        }
        let params = ModelParams { theta, pi, p };
        params.check_probabilities()?;
        Ok(params)
    }

    fn check_probabilities(&self) -> Result<()> {
        let n = self.n();
        let tmax = self.theta.max();
        let pmax = self.p.max_entry();
        for i in 0..n {
            let ti = self.theta.get(i);
            // pi_i' P pi_j <= max(P) for PMF rows
            if ti * tmax * pmax <= 1.0 {
                continue;
            }
            let u = self.p.apply(self.pi.row(i));
            for j in (0..n).filter(|&j| j != i) {
                let q = ti * self.theta.get(j) * dot(&u, self.pi.row(j));
                if q > 1.0 {
                    return Err(Error::ProbabilityOverflow {
                        i: i.min(j),
                        j: i.max(j),
                        value: q,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn k(&self) -> usize {
        self.p.k()
    }

    pub fn theta(&self) -> &DegreeVector {
        &self.theta
    }

    pub fn pi(&self) -> &MembershipMatrix {
        &self.pi
    }

    pub fn p(&self) -> &MixingMatrix {
        &self.p
    }

    /// Bernoulli parameter of the pair `(i, j)`, zero on the diagonal.
    pub fn edge_probability(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        if i == j {
            return Ok(0.0);
        }
        Ok(self.edge_probability_unchecked(i, j))
    }

    #[inline]
    pub(crate) fn edge_probability_unchecked(&self, i: usize, j: usize) -> f64 {
        // fixed argument order keeps the result bitwise symmetric
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.theta.get(i) * self.theta.get(j) * self.p.bilinear(self.pi.row(i), self.pi.row(j))
    }

    /// Row `i` of `Omega = Theta Pi P Pi' Theta`, including the diagonal entry.
    pub fn omega_row(&self, i: usize) -> Vec<f64> {
        let u = self.p.apply(self.pi.row(i));
        let ti = self.theta.get(i);
        (0..self.n())
            .map(|j| ti * self.theta.get(j) * dot(&u, self.pi.row(j)))
            .collect()
    }

    /// Dense Omega with the default size cap.
    pub fn assemble_omega(&self) -> Result<DMatrix<f64>> {
        self.assemble_omega_capped(DEFAULT_DENSE_CAP)
    }

    pub fn assemble_omega_capped(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > cap {
            return Err(Error::DenseCapExceeded { n, cap });
        }
        let k = self.k();
        let mut left = DMatrix::zeros(n, k);
        for i in 0..n {
            let u = self.p.apply(self.pi.row(i));
            for c in 0..k {
                left[(i, c)] = self.theta.get(i) * u[c];
            }
        }
        let mut right = DMatrix::zeros(n, k);
        for i in 0..n {
            for c in 0..k {
                right[(i, c)] = self.theta.get(i) * self.pi.row(i)[c];
            }
        }
        let omega = &left * right.transpose();
        // exact symmetry regardless of product rounding
        Ok(DMatrix::from_fn(n, n, |r, c| {
            if r <= c {
                omega[(r, c)]
            } else {
                omega[(c, r)]
            }
        }))
    }

    /// Same `Pi` and `P`, degrees replaced.
    pub fn with_theta(&self, theta: DegreeVector) -> Result<Self> {
        Self::new(theta, self.pi.clone(), self.p.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ParamsDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ParamsDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// On-disk form of [`ModelParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    #[serde(rename = "Pi")]
    pub pi: Vec<Vec<f64>>,
}

impl From<&ModelParams> for ParamsDoc {
    fn from(m: &ModelParams) -> Self {
        ParamsDoc {
            n: m.n(),
            k: m.k(),
            p: m.p.rows(),
            theta: m.theta.as_slice().to_vec(),
            pi: m.pi.to_rows(),
        }
    }
}

impl TryFrom<ParamsDoc> for ModelParams {
    type Error = Error;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        if doc.theta.len() != doc.n || doc.pi.len() != doc.n {
            return Err(Error::DimensionMismatch(format!(
                "n = {} but theta has {} entries and Pi has {} rows",
                doc.n,
                doc.theta.len(),
                doc.pi.len()
            )));
        }
        if doc.p.len() != doc.k {
            return Err(Error::DimensionMismatch(format!(
                "K = {} but P has {} rows",
                doc.k,
                doc.p.len()
            )));
        }
        ModelParams::new(
            DegreeVector::new(doc.theta)?,
            MembershipMatrix::new(doc.pi)?,
            MixingMatrix::new(doc.p)?,
        )
    }
}

/// On-disk form of a membership matrix (`Pi` or its estimate). Extra fields
/// are ignored, so a full parameter document also parses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipDoc {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Pi")]
    pub pi: Vec<Vec<f64>>,
}

impl From<&MembershipMatrix> for MembershipDoc {
    fn from(m: &MembershipMatrix) -> Self {
        MembershipDoc {
            n: m.n(),
            k: m.k(),
            pi: m.to_rows(),
        }
    }
}

impl TryFrom<MembershipDoc> for MembershipMatrix {
    type Error = Error;

    fn try_from(doc: MembershipDoc) -> Result<Self> {
        let m = MembershipMatrix::new(doc.pi)?;
        if m.n() != doc.n || m.k() != doc.k {
            return Err(Error::DimensionMismatch(format!(
                "header says {} x {}, rows are {} x {}",
                doc.n,
                doc.k,
                m.n(),
                m.k()
            )));
        }
        Ok(m)
    }
}
