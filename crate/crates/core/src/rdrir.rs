//! Reference-filter and reduced-RIR estimation from a GTVV: autocorrelation
//! and covariance linear prediction, and a group-sparse ADMM.

use serde::{Deserialize, Serialize};

use crate::axis::{CenteredMatrix, GtvvMatrix};
use crate::error::{invalid, Error, Result};
use crate::signal::convolve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ac,
    Cov,
    Admm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ac => "ac",
            Method::Cov => "cov",
            Method::Admm => "admm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ac" => Ok(Method::Ac),
            "cov" => Ok(Method::Cov),
            "admm" => Ok(Method::Admm),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

/// Causal FIR with a leading unit tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFilter {
    taps: Vec<f64>,
}

impl ReferenceFilter {
    pub fn identity(j_max: usize) -> Self {
        let mut taps = vec![0.0; j_max + 1];
        taps[0] = 1.0;
        Self { taps }
    }

    /// Builds a filter from taps a[1..=j_max]; a[0] is fixed to 1.
    pub fn from_tail(tail: &[f64]) -> Self {
        let mut taps = Vec::with_capacity(tail.len() + 1);
        taps.push(1.0);
        taps.extend_from_slice(tail);
        Self { taps }
    }

    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        if taps.first() != Some(&1.0) {
            return invalid("reference filter must start with a unit tap");
        }
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn j_max(&self) -> usize {
        self.taps.len() - 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmmDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub mu: f64,
    /// ‖H̃ − H‖_F per iteration.
    pub primal_residuals: Vec<f64>,
    /// ‖H − H_prev‖_F per iteration.
    pub dual_residuals: Vec<f64>,
    /// Unconstrained iterate a ∗ V at exit.
    #[serde(skip)]
    pub h_tilde: Option<CenteredMatrix>,
    #[serde(skip)]
    pub dual: Option<CenteredMatrix>,
}

#[derive(Debug, Clone)]
pub struct RdRirEstimate {
    pub h: CenteredMatrix,
    pub filter: ReferenceFilter,
    pub j_max: usize,
    pub method: Method,
    /// Windowed prediction residual of the returned filter.
    pub residual: f64,
    pub admm: Option<AdmmDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct WarmStart {
    pub h: CenteredMatrix,
    pub u: CenteredMatrix,
    pub filter: ReferenceFilter,
}

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    /// Shrinkage threshold; `None` picks 5% of the largest GTVV column norm.
    pub mu: Option<f64>,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub warm_start: Option<WarmStart>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            mu: None,
            max_iter: 100,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            warm_start: None,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::Config(format!("mu must be positive, got {mu}")));
            }
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense symmetric normal matrix over taps 0..=j_max plus the right-hand side
/// for taps 1..=j_max.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub dim: usize,
    /// r(j, s) for j, s in 0..=j_max, row-major.
    pub r: Vec<f64>,
}

impl NormalEquations {
    pub fn get(&self, j: usize, s: usize) -> f64 {
        self.r[j * self.dim + s]
    }

    /// The (j_max × j_max) block over taps 1..=j_max.
    pub fn reduced(&self) -> Vec<f64> {
        let n = self.dim - 1;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for s in 0..n {
                out[j * n + s] = self.get(j + 1, s + 1);
            }
        }
        out
    }

    /// −r(0, s) for s in 1..=j_max.
    pub fn rhs(&self) -> Vec<f64> {
        (1..self.dim).map(|s| -self.get(0, s)).collect()
    }
}

fn check_j_max(v: &GtvvMatrix, j_max: usize) -> Result<()> {
    if j_max == 0 || j_max as i64 >= v.j_max() {
        return invalid(format!(
            "j_max {j_max} must lie in [1, {})",
            v.j_max()
        ));
    }
    Ok(())
}

/// Σ_l Σ_{j' ∈ [a, b]} v_l(j'−j) v_l(j'−s) for j, s in 0..=j_max, with v
/// read through `get` (zero outside its support). The first row is summed
/// directly and the rest follows from shifting the window by one sample.
fn segment_gram<F: Fn(usize, i64) -> f64>(
    get: F,
    rows: usize,
    j_max: usize,
    a: i64,
    b: i64,
    out: &mut [f64],
) {
    if b < a {
        return;
    }
    let dim = j_max + 1;
    let mut first = vec![0.0; dim];
    for l in 0..rows {
        for jp in a..=b {
            let v0 = get(l, jp);
            if v0 == 0.0 {
                continue;
            }
            for (s, f) in first.iter_mut().enumerate() {
                *f += v0 * get(l, jp - s as i64);
            }
        }
    }
    let mut seg = vec![0.0; dim * dim];
    for s in 0..dim {
        seg[s] = first[s];
        seg[s * dim] = first[s];
    }
    for j in 0..j_max {
        for s in j..j_max {
            let mut acc = seg[j * dim + s];
            for l in 0..rows {
                let (ji, si) = (j as i64, s as i64);
                acc += get(l, a - 1 - ji) * get(l, a - 1 - si) - get(l, b - ji) * get(l, b - si);
            }
            seg[(j + 1) * dim + s + 1] = acc;
            seg[(s + 1) * dim + j + 1] = acc;
        }
    }
    out.iter_mut().zip(&seg).for_each(|(o, s)| *o += s);
}

/// Index set of the covariance residual: fully overlapping positions outside
/// the protected window [0, j_max].
fn cov_segments(v: &GtvvMatrix, j_max: usize) -> [(i64, i64); 2] {
    let lo = v.j_min() + j_max as i64;
    [(lo, -1), (j_max as i64 + 1, v.j_max())]
}

/// Autocorrelation lags 0..=j_max of V with the protected window zeroed.
fn protected_autocorrelation(v: &GtvvMatrix, j_max: usize) -> Vec<f64> {
    let jm = j_max as i64;
    let mut ac = vec![0.0; j_max + 1];
    for l in 0..v.rows() {
        let row: Vec<f64> = (v.j_min()..=v.j_max())
            .map(|j| if (0..=jm).contains(&j) { 0.0 } else { v.get(l, j) })
            .collect();
        for (k, a) in ac.iter_mut().enumerate() {
            *a += row[k..].iter().zip(&row).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    ac
}

pub fn lp_normal_coefficients(v: &GtvvMatrix, j_max: usize, method: Method) -> Result<NormalEquations> {
    check_j_max(v, j_max)?;
    let dim = j_max + 1;
    let mut r = vec![0.0; dim * dim];
    match method {
        Method::Ac => {
            let ac = protected_autocorrelation(v, j_max);
            for j in 0..dim {
                for s in 0..dim {
                    r[j * dim + s] = ac[j.abs_diff(s)];
                }
            }
        }
        Method::Cov => {
            for (a, b) in cov_segments(v, j_max) {
                segment_gram(|l, j| v.get(l, j), v.rows(), j_max, a, b, &mut r);
            }
        }
        Method::Admm => {
            segment_gram(|l, j| v.get(l, j), v.rows(), j_max, v.j_min(), v.j_max(), &mut r);
        }
    }
    Ok(NormalEquations { dim, r })
}

/// Levinson–Durbin recursion for the prediction taps a[1..=p] of
/// Σ_j a_j ac(|j−s|) = −ac(s). Returns the taps and the final prediction
/// error. Stops early once the error collapses, leaving the remaining taps
/// at zero.
pub fn levinson_durbin(ac: &[f64]) -> Result<(Vec<f64>, f64)> {
    let p = ac.len() - 1;
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    if ac[0] == 0.0 {
        return Ok((a[1..].to_vec(), 0.0));
    }
    let mut err = ac[0];
    let mut prev = a.clone();
    for m in 1..=p {
        if err <= 1e-14 * ac[0] {
            break;
        }
        let acc: f64 = (0..m).map(|i| a[i] * ac[m - i]).sum();
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::Singular {
                condition: ac[0] / err.max(f64::MIN_POSITIVE),
            });
        }
        prev[..m].copy_from_slice(&a[..m]);
        for i in 1..m {
            a[i] = prev[i] + k * prev[m - i];
        }
        a[m] = k;
        err *= 1.0 - k * k;
    }
    Ok((a[1..].to_vec(), err))
}

/// Lower-triangular Cholesky factor of a dense SPD matrix, or `None`. Pivots
/// at roundoff level (≤ n·ε·max diagonal) count as failure, since a
/// semidefinite matrix can otherwise factor on noise.
fn cholesky(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| m[i * n + i]).fold(0.0, f64::max);
    let floor = n as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > floor) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Cholesky factor with diagonal jitter 1e−12·trace, raised ×10 up to
/// 1e−6·trace. `None` for a zero matrix.
fn factor_with_jitter(m: &[f64], n: usize) -> Result<Option<Vec<f64>>> {
    let trace: f64 = (0..n).map(|i| m[i * n + i]).sum();
    if trace == 0.0 {
        return Ok(None);
    }
    if let Some(l) = cholesky(m, n) {
        return Ok(Some(l));
    }
    let mut rel = 1e-12;
    while rel <= 1e-6 * 1.000001 {
        let mut jittered = m.to_vec();
        for i in 0..n {
            jittered[i * n + i] += rel * trace;
        }
        if let Some(l) = cholesky(&jittered, n) {
            return Ok(Some(l));
        }
        rel *= 10.0;
    }
    Err(Error::Singular {
        condition: f64::INFINITY,
    })
}

/// Per-row linear convolution with the filter, truncated to the centred axis.
pub fn apply_filter(v: &GtvvMatrix, a: &ReferenceFilter) -> CenteredMatrix {
    let mut out = CenteredMatrix::zeros(v.order, v.len(), v.sample_rate);
    let n = v.len();
    for l in 0..v.rows() {
        let conv = convolve(v.row(l), a.taps());
        out.row_mut(l).copy_from_slice(&conv[..n]);
    }
    out
}

/// Σ ‖(a ∗ v)(j′)‖² over the covariance residual index set.
pub fn lp_objective(v: &GtvvMatrix, a: &ReferenceFilter) -> f64 {
    let h = apply_filter(v, a);
    let j_max = a.j_max();
    cov_segments(v, j_max)
        .iter()
        .flat_map(|&(lo, hi)| lo..=hi)
        .map(|j| (0..h.rows()).map(|l| h.get(l, j).powi(2)).sum::<f64>())
        .sum()
}

fn finish(v: &GtvvMatrix, filter: ReferenceFilter, method: Method) -> RdRirEstimate {
    let h = apply_filter(v, &filter);
    let residual = lp_objective(v, &filter);
    RdRirEstimate {
        h,
        j_max: filter.j_max(),
        filter,
        method,
        residual,
        admm: None,
    }
}

pub fn solve_ac(v: &GtvvMatrix, j_max: usize) -> Result<RdRirEstimate> {
    check_j_max(v, j_max)?;
    let ac = protected_autocorrelation(v, j_max);
    let (tail, _) = levinson_durbin(&ac)?;
    Ok(finish(v, ReferenceFilter::from_tail(&tail), Method::Ac))
}

pub fn solve_cov(v: &GtvvMatrix, j_max: usize) -> Result<RdRirEstimate> {
    let ne = lp_normal_coefficients(v, j_max, Method::Cov)?;
    let tail = match factor_with_jitter(&ne.reduced(), j_max)? {
        Some(l) => cholesky_solve(&l, j_max, &ne.rhs()),
        None => vec![0.0; j_max],
    };
    Ok(finish(v, ReferenceFilter::from_tail(&tail), Method::Cov))
}

/// Column-wise group soft threshold max(0, 1 − μ/‖h_j‖)·h_j.
pub fn group_soft_threshold(m: &mut CenteredMatrix, mu: f64) {
    for j in m.j_min()..=m.j_max() {
        let col = m.column(j);
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > mu { 1.0 - mu / norm } else { 0.0 };
        let scaled: Vec<f64> = col.iter().map(|x| x * scale).collect();
        m.set_column(j, &scaled);
    }
}

/// Projection onto the feasible set: zero columns outside [0, j_max] and a
/// nonnegative channel-0 row.
pub fn project_feasible(m: &mut CenteredMatrix, j_max: usize) {
    let zero = vec![0.0; m.rows()];
    for j in m.j_min()..=m.j_max() {
        if j < 0 || j > j_max as i64 {
            m.set_column(j, &zero);
        } else if m.get(0, j) < 0.0 {
            m.set(0, j, 0.0);
        }
    }
}

/// Σ_l Σ_{j′} d_l(j′) v_l(j′−s) for s in 1..=j_max on the axis.
fn cross_correlation(d: &CenteredMatrix, v: &GtvvMatrix, j_max: usize) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; j_max];
    for l in 0..v.rows() {
        let rev: Vec<f64> = v.row(l).iter().rev().copied().collect();
        let c = convolve(d.row(l), &rev);
        for (s, o) in out.iter_mut().enumerate() {
            *o += c[n - 1 + s + 1];
        }
    }
    out
}

fn diff_norm(a: &CenteredMatrix, b: &CenteredMatrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn default_mu(v: &GtvvMatrix) -> f64 {
    (v.j_min()..=v.j_max())
        .map(|j| v.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        * 0.05
}

pub fn solve_admm(v: &GtvvMatrix, j_max: usize, cfg: &AdmmConfig) -> Result<RdRirEstimate> {
    check_j_max(v, j_max)?;
    cfg.validate()?;
    let mu = cfg.mu.unwrap_or_else(|| default_mu(v));
    let ne = lp_normal_coefficients(v, j_max, Method::Admm)?;
    let factor = factor_with_jitter(&ne.reduced(), j_max)?;
    let r0: Vec<f64> = (1..=j_max).map(|s| ne.get(0, s)).collect();

    let zeros = CenteredMatrix::zeros(v.order, v.len(), v.sample_rate);
    let (mut h, mut u, mut filter) = match &cfg.warm_start {
        Some(ws) => {
            if ws.filter.j_max() != j_max || ws.h.len() != v.len() || ws.h.rows() != v.rows() {
                return invalid("warm start does not match the problem size");
            }
            (ws.h.clone(), ws.u.clone(), ws.filter.clone())
        }
        None => (zeros.clone(), zeros.clone(), ReferenceFilter::identity(j_max)),
    };
    let mut h_tilde = match &cfg.warm_start {
        Some(_) => apply_filter(v, &filter),
        None => zeros,
    };

    let mut primal = Vec::new();
    let mut dual = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let h_prev = h.clone();
        let mut z = h_tilde.clone();
        z.data_mut()
            .iter_mut()
            .zip(u.data())
            .for_each(|(x, y)| *x += y);
        project_feasible(&mut z, j_max);
        group_soft_threshold(&mut z, mu);
        h = z;

        let mut d = h.clone();
        d.data_mut()
            .iter_mut()
            .zip(u.data())
            .for_each(|(x, y)| *x -= y);
        let tail = match &factor {
            Some(l) => {
                let rdv = cross_correlation(&d, v, j_max);
                let rhs: Vec<f64> = rdv.iter().zip(&r0).map(|(a, b)| a - b).collect();
                cholesky_solve(l, j_max, &rhs)
            }
            None => vec![0.0; j_max],
        };
        filter = ReferenceFilter::from_tail(&tail);
        h_tilde = apply_filter(v, &filter);

        u.data_mut()
            .iter_mut()
            .zip(h_tilde.data().iter().zip(h.data()))
            .for_each(|(x, (a, b))| *x += a - b);

        let p = diff_norm(&h_tilde, &h);
        let q = diff_norm(&h, &h_prev);
        primal.push(p);
        dual.push(q);
        let first = primal.iter().copied().find(|&x| x > 0.0);
        if !p.is_finite() || first.is_some_and(|f| p > 1e3 * f) {
            return Err(Error::Diverged {
                iterations: primal.len(),
                primal_history: primal,
            });
        }
        let hn = h.frobenius_norm();
        if p < cfg.tol_primal * hn && q < cfg.tol_dual * hn {
            converged = true;
            break;
        }
    }

    let residual = lp_objective(v, &filter);
    Ok(RdRirEstimate {
        h,
        j_max,
        method: Method::Admm,
        residual,
        admm: Some(AdmmDiagnostics {
            iterations: primal.len(),
            converged,
            mu,
            primal_residuals: primal,
            dual_residuals: dual,
            h_tilde: Some(h_tilde),
            dual: Some(u),
        }),
        filter,
    })
}

/// Dispatches to a solver. A zero-length window needs no filter: the
/// estimate is V itself (projected for ADMM), so only the direct path survives.
pub fn solve(v: &GtvvMatrix, j_max: usize, method: Method, cfg: &AdmmConfig) -> Result<RdRirEstimate> {
    if j_max == 0 {
        let mut est = finish(v, ReferenceFilter::identity(0), method);
        if method == Method::Admm {
            project_feasible(&mut est.h, 0);
        }
        return Ok(est);
    }
    match method {
        Method::Ac => solve_ac(v, j_max),
        Method::Cov => solve_cov(v, j_max),
        Method::Admm => solve_admm(v, j_max, cfg),
    }
}
