//! Perturbed membership families around a barycenter-plus-pure base matrix.

use serde::Serialize;

use super::code::{build_code_family, CodeFamily};
use crate::error::{Error, Result};
use crate::model::{
    check_pi_star_class, check_theta_class, DegreeVector, MembershipMatrix, MixingMatrix, ModelParams,
    PiClassClause,
};

/// Tolerance on the null-space constraints for `eta`.
pub const ETA_TOL: f64 = 1e-10;
/// Default number of times `c0` is halved before giving up.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone)]
pub struct HypothesisFamily {
    /// Degrees in the caller's node order.
    pub theta: DegreeVector,
    pub p: MixingMatrix,
    pub c: f64,
    pub c0: f64,
    pub delta_n: f64,
    pub n0: usize,
    pub n1: usize,
    /// `order[r]` is the node with the `r`-th largest degree (ties by index).
    pub order: Vec<usize>,
    /// Inverse of `order`.
    pub rank: Vec<usize>,
    /// Perturbation direction; `(1/2, -1/2)` for `K = 2`.
    pub eta: Vec<f64>,
    pub code: CodeFamily,
    /// `Pi^(0) .. Pi^(J)` in the caller's node order.
    pub pis: Vec<MembershipMatrix>,
}

/// Plain-data view of a family for JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyDump {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub c: f64,
    pub c0: f64,
    pub delta_n: f64,
    pub n0: usize,
    pub n1: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub order: Vec<usize>,
    pub eta: Vec<f64>,
    pub omegas: Vec<Vec<i8>>,
    #[serde(rename = "Pi")]
    pub pis: Vec<Vec<Vec<f64>>>,
}

impl HypothesisFamily {
    pub fn dump(&self) -> FamilyDump {
        FamilyDump {
            n: self.n(),
            k: self.k(),
            j: self.j(),
            c: self.c,
            c0: self.c0,
            delta_n: self.delta_n,
            n0: self.n0,
            n1: self.n1,
            p: self.p.rows(),
            theta: self.theta.as_slice().to_vec(),
            order: self.order.clone(),
            eta: self.eta.clone(),
            omegas: self.code.omegas.clone(),
            pis: self.pis.iter().map(|m| m.to_rows()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn k(&self) -> usize {
        self.p.k()
    }

    pub fn j(&self) -> usize {
        self.code.j
    }

    /// Model parameters of hypothesis `ell`.
    pub fn params(&self, ell: usize) -> Result<ModelParams> {
        let pi = self
            .pis
            .get(ell)
            .ok_or(Error::IndexOutOfRange { index: ell, n: self.pis.len() })?;
        ModelParams::new(self.theta.clone(), pi.clone(), self.p.clone())
    }

    /// Whether node `i` (caller order) is one of the `n0` perturbed nodes.
    pub fn is_perturbed(&self, i: usize) -> bool {
        self.rank[i] < self.n0
    }

    /// Code entry of node `i` in hypothesis `ell` (0 for pure nodes).
    pub fn omega(&self, ell: usize, i: usize) -> i8 {
        let r = self.rank[i];
        if r < self.n0 {
            self.code.omegas[ell][r]
        } else {
            0
        }
    }

    /// Community of a pure node `i`, `None` for perturbed nodes.
    pub fn pure_community(&self, i: usize) -> Option<usize> {
        let r = self.rank[i];
        (r >= self.n0).then(|| (r - self.n0) / self.n1)
    }

    /// `2|eta' Pcheck eta|`, equal to `a` when `K = 2`.
    pub fn i_bound_constant(&self) -> f64 {
        2.0 * quad_check(&self.p, &self.eta, &self.eta).abs()
    }
}

/// `x' (1 1' - P) y`.
pub(crate) fn quad_check(p: &MixingMatrix, x: &[f64], y: &[f64]) -> f64 {
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    sx * sy - p.bilinear(x, y)
}

/// Unit vector with `eta' 1 = 0` and `eta' Pcheck 1 = 0`, `Pcheck = 1 1' - P`.
/// The constraint rows are orthonormalized and the standard basis vector with
/// the largest residual is projected; the sign makes the largest entry positive.
pub fn find_eta(p: &MixingMatrix) -> Result<Vec<f64>> {
    let k = p.k();
    let ones = vec![1.0; k];
    let pcheck_one: Vec<f64> = (0..k)
        .map(|r| k as f64 - (0..k).map(|c| p.get(r, c)).sum::<f64>())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in [ones, pcheck_one] {
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 * scale.max(1.0) {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for e in 0..k {
        let mut v = vec![0.0; k];
        v[e] = 1.0;
        for b in &basis {
            let d = b[e];
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > best_norm + 1e-12 {
            best_norm = norm;
            best = Some(v);
        }
    }
    let mut eta = match best {
        Some(v) if best_norm > 1e-8 => v.iter().map(|x| x / best_norm).collect::<Vec<f64>>(),
        _ => {
            return Err(Error::InvalidParameter(
                "constraints leave no admissible direction; use the two-community construction".into(),
            ))
        }
    };
    let lead = (0..k).fold(0, |m, i| if eta[i].abs() > eta[m].abs() { i } else { m });
    if eta[lead] < 0.0 {
        eta.iter_mut().for_each(|x| *x = -*x);
    }
    let r1: f64 = eta.iter().sum();
    let r2 = quad_check(p, &eta, &vec![1.0; k]);
    if r1.abs() > ETA_TOL || r2.abs() > ETA_TOL {
        return Err(Error::Estimation(format!("eta residuals {r1:.3e}, {r2:.3e}")));
    }
    Ok(eta)
}

/// Why a build attempt failed: `c0` too large (fixable by halving) or anything else.
enum BuildFailure {
    C0TooLarge(String),
    Other(Error),
}

impl From<Error> for BuildFailure {
    fn from(e: Error) -> Self {
        BuildFailure::Other(e)
    }
}

/// Build `Pi^(0) .. Pi^(J)`. The `n0 = n - K floor(cn)` largest-degree nodes sit at
/// the barycenter and are perturbed along `eta` with step `omega_i delta_n / sqrt(theta_i)`,
/// `delta_n = c0 (n theta_bar)^{-1/2}`; the rest are pure, `floor(cn)` per community.
pub fn build_hypotheses(
    theta: &DegreeVector,
    p: &MixingMatrix,
    c: f64,
    c0: f64,
    j_cap: usize,
    seed: u64,
) -> Result<HypothesisFamily> {
    match try_build(theta, p, c, c0, j_cap, seed) {
        Ok(f) => Ok(f),
        Err(BuildFailure::C0TooLarge(msg)) => Err(Error::InvalidParameter(format!(
            "c0 = {c0} is too large ({msg}); try a smaller c0"
        ))),
        Err(BuildFailure::Other(e)) => Err(e),
    }
}

/// As [`build_hypotheses`], halving `c0` until every hypothesis is valid.
pub fn build_hypotheses_auto(
    theta: &DegreeVector,
    p: &MixingMatrix,
    c: f64,
    c0: f64,
    j_cap: usize,
    seed: u64,
) -> Result<HypothesisFamily> {
    let mut c0 = c0;
    for _ in 0..=MAX_HALVINGS {
        match try_build(theta, p, c, c0, j_cap, seed) {
            Ok(f) => return Ok(f),
            Err(BuildFailure::C0TooLarge(_)) => c0 /= 2.0,
            Err(BuildFailure::Other(e)) => return Err(e),
        }
    }
    Err(Error::Packing(format!("no valid c0 after {MAX_HALVINGS} halvings")))
}

fn try_build(
    theta: &DegreeVector,
    p: &MixingMatrix,
    c: f64,
    c0: f64,
    j_cap: usize,
    seed: u64,
) -> std::result::Result<HypothesisFamily, BuildFailure> {
    let k = p.k();
    let n = theta.len();
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidParameter(format!("c0 must be positive, got {c0}")).into());
    }
    let class = check_theta_class(theta, k, c)?;
    if !class.member {
        return Err(Error::InvalidDegrees(format!(
            "theta is outside the degree class (threshold {:.4}, mean margin {:.4}, order-statistic margin {:.4})",
            class.threshold, class.mean_margin, class.order_stat_margin
        ))
        .into());
    }
    let eta = if k == 2 {
        let a = 1.0 - p.get(0, 1);
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidMixingMatrix(format!(
                "off-diagonal {} gives a = {a} outside (0, 1]",
                p.get(0, 1)
            ))
            .into());
        }
        vec![0.5, -0.5]
    } else {
        find_eta(p)?
    };
    let n1 = (c * n as f64).floor() as usize;
    let n0 = n
        .checked_sub(k * n1)
        .ok_or_else(|| Error::InvalidParameter(format!("K floor(cn) = {} exceeds n = {n}", k * n1)))?;
    if n1 == 0 {
        return Err(Error::InvalidParameter(format!("floor(cn) = 0 for c = {c}, n = {n}")).into());
    }
    let code = build_code_family(n0, j_cap, seed)?;
    let delta_n = c0 / (n as f64 * theta.mean()).sqrt();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| theta.get(y).total_cmp(&theta.get(x)).then(x.cmp(&y)));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let radius = 1.0 / (n as f64).ln();
    let centre = 1.0 / k as f64;
    let mut pis = Vec::with_capacity(code.j + 1);
    for omega in &code.omegas {
        let mut data = vec![0.0; n * k];
        for (r, &i) in order.iter().enumerate() {
            let row = &mut data[i * k..(i + 1) * k];
            if r < n0 {
                let step = omega[r] as f64 * delta_n / theta.get(i).sqrt();
                if k == 2 {
                    row[0] = (1.0 + step) / 2.0;
                    row[1] = (1.0 - step) / 2.0;
                } else {
                    for (x, e) in row.iter_mut().zip(&eta) {
                        *x = centre + step * e;
                    }
                }
                if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return Err(BuildFailure::C0TooLarge(format!("node {i} leaves the simplex")));
                }
                let dist = row.iter().map(|x| (x - centre).powi(2)).sum::<f64>().sqrt();
                if dist > radius {
                    return Err(BuildFailure::C0TooLarge(format!(
                        "node {i} is {dist:.4} from the barycenter, limit {radius:.4}"
                    )));
                }
            } else {
                row[(r - n0) / n1] = 1.0;
            }
        }
        pis.push(MembershipMatrix::from_flat(n, k, data)?);
    }
    for pi in &pis {
        let report = check_pi_star_class(pi, theta, k, c)?;
        match report.failing {
            None => {}
            Some(PiClassClause::BarycenterRadius { node, distance, radius }) => {
                return Err(BuildFailure::C0TooLarge(format!(
                    "node {node} is {distance:.4} from the barycenter, limit {radius:.4}"
                )))
            }
            Some(clause) => {
                return Err(Error::Packing(format!("hypothesis outside the membership class: {clause:?}")).into())
            }
        }
    }
    Ok(HypothesisFamily {
        theta: theta.clone(),
        p: p.clone(),
        c,
        c0,
        delta_n,
        n0,
        n1,
        order,
        rank,
        eta,
        code,
        pis,
    })
}
