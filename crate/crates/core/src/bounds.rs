//! Finite-time error bounds and asymptotic rate envelopes.
//!
//! Curves are indexed by iteration: entry `i` belongs to `N = i + 1`. Every evaluator
//! runs in `O(N)` through running-sum recurrences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{Regime, RegimeLabel, Schedule};

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma must lie in [0, 1), got {gamma}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

fn check_len(len: usize, needed: usize) -> Result<()> {
    if len < needed {
        return Err(Error::DimensionMismatch {
            expected: format!("at least {needed} error terms"),
            got: len.to_string(),
        });
    }
    Ok(())
}

/// Scaling of the temperature into a bound on `sup |Omega_t|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempScale {
    pub include_log_a: bool,
    pub n_actions: usize,
}

impl TempScale {
    pub fn log_a(n_actions: usize) -> Self {
        Self {
            include_log_a: true,
            n_actions,
        }
    }

    pub fn none() -> Self {
        Self {
            include_log_a: false,
            n_actions: 1,
        }
    }

    pub fn factor(&self) -> f64 {
        if self.include_log_a {
            (self.n_actions as f64).ln()
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct BoundParams {
    pub gamma: f64,
    pub m: Option<usize>,
    pub alpha: Option<f64>,
    pub v_max: Option<f64>,
    pub init_gap: Option<f64>,
}

/// Bound values with their error and initialization components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub values: Vec<f64>,
    pub error_term: Vec<f64>,
    pub init_term: Vec<f64>,
    pub params: BoundParams,
}

impl BoundCurve {
    pub fn at(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }
}

/// `sum_{t=1}^{N-1} gamma^{N-t} c_t` for `N = 1..=n`, with `c_t = c[t-1]`.
fn discounted_prefix(gamma: f64, c: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        if i > 0 {
            acc = gamma * (acc + c[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// `(2/(1-gamma)) (E_N + gamma^N ||V_0 - V*||)`, `E_N = sum_{t=1}^{N-1} gamma^{N-t} (e_t + e'_t)`.
pub fn ampi_bound(
    eval_errs: &[f64],
    impr_errs: &[f64],
    gamma: f64,
    init_gap: f64,
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    check_len(eval_errs.len().min(impr_errs.len()), n - 1)?;
    let curve = ampi_curve_impl(&eval_errs[..n - 1], &impr_errs[..n - 1], gamma, init_gap, n)?;
    Ok(curve.values[n - 1])
}

/// [`ampi_bound`] for `N = 1..=len`, errors indexed `errs[t-1] = e_t`.
pub fn ampi_bound_curve(
    eval_errs: &[f64],
    impr_errs: &[f64],
    gamma: f64,
    init_gap: f64,
) -> Result<BoundCurve> {
    let n = eval_errs.len().min(impr_errs.len());
    ampi_curve_impl(eval_errs, impr_errs, gamma, init_gap, n)
}

fn ampi_curve_impl(
    eval_errs: &[f64],
    impr_errs: &[f64],
    gamma: f64,
    init_gap: f64,
    n: usize,
) -> Result<BoundCurve> {
    check_gamma(gamma)?;
    let c: Vec<f64> = eval_errs.iter().zip(impr_errs).map(|(a, b)| a + b).collect();
    let e = discounted_prefix(gamma, &c, n);
    let k = 2.0 / (1.0 - gamma);
    let error_term: Vec<f64> = e.iter().map(|x| k * x).collect();
    let init_term: Vec<f64> = (1..=n).map(|t| k * gamma.powi(t as i32) * init_gap).collect();
    Ok(BoundCurve {
        values: error_term.iter().zip(&init_term).map(|(a, b)| a + b).collect(),
        error_term,
        init_term,
        params: BoundParams {
            gamma,
            init_gap: Some(init_gap),
            ..BoundParams::default()
        },
    })
}

/// `(2/(1-gamma)) (Lambda_N + gamma^N init_gap)`,
/// `Lambda_N = (1 + (1-gamma^m)/(1-gamma)) sum_{t=1}^{N-1} gamma^{N-t} lambda_t`.
pub fn reg_mpi_bound(
    sched: &Schedule,
    gamma: f64,
    m: usize,
    init_gap: f64,
    n: usize,
    scale: TempScale,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    Ok(reg_mpi_bound_curve(sched, gamma, m, init_gap, n, scale)?.values[n - 1])
}

pub fn reg_mpi_bound_curve(
    sched: &Schedule,
    gamma: f64,
    m: usize,
    init_gap: f64,
    n_max: usize,
    scale: TempScale,
) -> Result<BoundCurve> {
    check_gamma(gamma)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let prefactor = 1.0 + (1.0 - gamma.powi(m as i32)) / (1.0 - gamma);
    let f = scale.factor();
    let lambdas: Vec<f64> = sched.values(n_max).iter().map(|l| l * f).collect();
    let sums = discounted_prefix(gamma, &lambdas, n_max);
    let k = 2.0 / (1.0 - gamma);
    let error_term: Vec<f64> = sums.iter().map(|s| k * prefactor * s).collect();
    let init_term: Vec<f64> = (1..=n_max).map(|t| k * gamma.powi(t as i32) * init_gap).collect();
    Ok(BoundCurve {
        values: error_term.iter().zip(&init_term).map(|(a, b)| a + b).collect(),
        error_term,
        init_term,
        params: BoundParams {
            gamma,
            m: Some(m),
            init_gap: Some(init_gap),
            ..BoundParams::default()
        },
    })
}

/// Inner-sum convention of the CVI bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CviVariant {
    /// `sum_{t=1}^N gamma^{N-t} sum_{k=1}^t alpha^{t-k} lambda_k`, the form implied by
    /// `||eps_k|| <= lambda_k` for the update that produces iterate `k`.
    #[default]
    SoundK,
    /// `sum_{t=1}^{N-1} gamma^{N-t} sum_{k=0}^t alpha^{t-k} lambda_t`, weighting by the outer index.
    OuterT,
}

/// `A_N` and `Gamma_N` for `N = 0..=n_max`.
fn cvi_weights(gamma: f64, alpha: f64, n_max: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(n_max + 1);
    let mut g = Vec::with_capacity(n_max + 1);
    let (mut a_acc, mut g_acc, mut alpha_pow) = (1.0, 1.0, 1.0);
    a.push(a_acc);
    g.push(g_acc);
    for _ in 1..=n_max {
        alpha_pow *= alpha;
        a_acc += alpha_pow;
        g_acc = gamma * g_acc + alpha_pow;
        a.push(a_acc);
        g.push(g_acc);
    }
    (a, g)
}

/// `sum_{t=1}^N gamma^{N-t} sum_{k=1}^t alpha^{t-k} e_k` for `N = 1..=len`.
fn nested_sound(gamma: f64, alpha: f64, e: &[f64]) -> Vec<f64> {
    let (mut inner, mut outer) = (0.0, 0.0);
    e.iter()
        .map(|x| {
            inner = alpha * inner + x;
            outer = gamma * outer + inner;
            outer
        })
        .collect()
}

fn cvi_curve_from_sums(
    gamma: f64,
    alpha: f64,
    v_max: f64,
    sums: &[f64],
    a: &[f64],
    g: &[f64],
) -> BoundCurve {
    let n_max = sums.len();
    let k = 2.0 * gamma / (1.0 - gamma);
    let init_term: Vec<f64> = (1..=n_max).map(|n| 2.0 * gamma * v_max * g[n] / a[n]).collect();
    let error_term: Vec<f64> = (1..=n_max).map(|n| k * sums[n - 1] / a[n]).collect();
    BoundCurve {
        values: error_term.iter().zip(&init_term).map(|(x, y)| x + y).collect(),
        error_term,
        init_term,
        params: BoundParams {
            gamma,
            alpha: Some(alpha),
            v_max: Some(v_max),
            ..BoundParams::default()
        },
    }
}

/// `2 gamma V_max Gamma_N + (2 gamma/(1-gamma)) Lambda_N`.
pub fn cvi_bound(
    sched: &Schedule,
    gamma: f64,
    alpha: f64,
    v_max: f64,
    n: usize,
    variant: CviVariant,
    scale: TempScale,
) -> Result<f64> {
    if n == 0 {
        check_gamma(gamma)?;
        check_alpha(alpha)?;
        return Ok(2.0 * gamma * v_max);
    }
    Ok(cvi_bound_curve(sched, gamma, alpha, v_max, n, variant, scale)?.values[n - 1])
}

pub fn cvi_bound_curve(
    sched: &Schedule,
    gamma: f64,
    alpha: f64,
    v_max: f64,
    n_max: usize,
    variant: CviVariant,
    scale: TempScale,
) -> Result<BoundCurve> {
    check_gamma(gamma)?;
    check_alpha(alpha)?;
    if !(v_max >= 0.0) {
        return Err(Error::InvalidParameter(format!("v_max must be nonnegative, got {v_max}")));
    }
    let f = scale.factor();
    let lambdas: Vec<f64> = sched.values(n_max).iter().map(|l| l * f).collect();
    let (a, g) = cvi_weights(gamma, alpha, n_max);
    let sums = match variant {
        CviVariant::SoundK => nested_sound(gamma, alpha, &lambdas),
        CviVariant::OuterT => {
            // sum_{k=0}^t alpha^{t-k} = A_t
            let weighted: Vec<f64> = lambdas.iter().enumerate().map(|(i, l)| a[i + 1] * l).collect();
            discounted_prefix(gamma, &weighted, n_max)
        }
    };
    Ok(cvi_curve_from_sums(gamma, alpha, v_max, &sums, &a, &g))
}

/// The CVI bound with realized error norms, `errs[t-1] = ||eps_t||`.
pub fn al_realized_bound(errs: &[f64], gamma: f64, alpha: f64, v_max: f64, n: usize) -> Result<f64> {
    if n == 0 {
        check_gamma(gamma)?;
        check_alpha(alpha)?;
        return Ok(2.0 * gamma * v_max);
    }
    check_len(errs.len(), n)?;
    Ok(al_realized_bound_curve(&errs[..n], gamma, alpha, v_max)?.values[n - 1])
}

pub fn al_realized_bound_curve(errs: &[f64], gamma: f64, alpha: f64, v_max: f64) -> Result<BoundCurve> {
    check_gamma(gamma)?;
    check_alpha(alpha)?;
    let (a, g) = cvi_weights(gamma, alpha, errs.len());
    let sums = nested_sound(gamma, alpha, errs);
    Ok(cvi_curve_from_sums(gamma, alpha, v_max, &sums, &a, &g))
}

/// `S_N = sum_{t=0}^{N-1} theta^{N-t} r_t`.
pub fn tail_sum(theta: f64, r: &[f64], n: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta must lie in [0, 1), got {theta}")));
    }
    check_len(r.len(), n)?;
    Ok((0..n).map(|t| theta.powi((n - t) as i32) * r[t]).sum())
}

/// `log S_N` for `N = 1..=r.len()`, computed without underflow.
pub fn log_tail_sums(theta: f64, r: &[f64]) -> Result<Vec<f64>> {
    if r.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidParameter("tail sums need nonnegative terms".into()));
    }
    let log_r: Vec<f64> = r.iter().map(|x| x.ln()).collect();
    log_tail_sums_ln(theta, &log_r)
}

/// As [`log_tail_sums`] with the terms given as `log r_t`, for sequences that underflow.
pub fn log_tail_sums_ln(theta: f64, log_r: &[f64]) -> Result<Vec<f64>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {theta}")));
    }
    if log_r.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::InvalidParameter("log terms must be finite or -inf".into()));
    }
    let log_theta = theta.ln();
    let mut acc = f64::NEG_INFINITY;
    Ok(log_r
        .iter()
        .map(|&x| {
            // S_N = theta (S_{N-1} + r_{N-1})
            acc = log_theta + log_add_exp(acc, x);
            acc
        })
        .collect())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Shape of the rate for `regime` at iteration `n` (without constant).
pub fn rate_shape(regime: &Regime, n: usize, sched: &Schedule) -> Result<f64> {
    let nf = n as f64;
    let gamma = regime.gamma;
    Ok(match regime.label {
        RegimeLabel::LinearGamma => gamma.powf(nf),
        RegimeLabel::AlmostLinear => nf * gamma.powf(nf),
        RegimeLabel::SlowLambda => sched.lambda_at(n)?,
        RegimeLabel::CviAlmostLinear => {
            let rate = regime.rate.unwrap_or(gamma);
            nf * rate.powf(nf)
        }
        RegimeLabel::CviInverseN => 1.0 / nf,
        RegimeLabel::CviMeanLambda => sched.mean_lambda(n)?.max(1.0 / nf),
        RegimeLabel::Unclassified => return Err(Error::UnclassifiedRegime),
    })
}

/// `c * shape(N)`.
pub fn rate_envelope(regime: &Regime, n: usize, constant: f64, sched: &Schedule) -> Result<f64> {
    Ok(constant * rate_shape(regime, n, sched)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub regime: String,
    pub constant: f64,
    pub fit_range: (usize, usize),
}

impl EnvelopeFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serializes")
    }
}

/// Smallest constant `c` with `errs[N-1] <= c shape(N)` over the last quartile of iterations.
///
/// Iterations where the shape underflows to zero are skipped.
pub fn fit_envelope(regime: &Regime, sched: &Schedule, errs: &[f64]) -> Result<EnvelopeFit> {
    if errs.is_empty() {
        return Err(Error::InvalidParameter("no errors to fit".into()));
    }
    let n = errs.len();
    let start = (3 * n / 4).max(1);
    fit_envelope_range(regime, sched, errs, (start, n))
}

/// As [`fit_envelope`] on the inclusive iteration range `lo..=hi`.
pub fn fit_envelope_range(
    regime: &Regime,
    sched: &Schedule,
    errs: &[f64],
    (lo, hi): (usize, usize),
) -> Result<EnvelopeFit> {
    if lo == 0 || hi < lo || hi > errs.len() {
        return Err(Error::InvalidParameter(format!("bad fit range {lo}..={hi}")));
    }
    let mut constant: f64 = 0.0;
    for n in lo..=hi {
        let shape = rate_shape(regime, n, sched)?;
        if shape > 0.0 {
            constant = constant.max(errs[n - 1] / shape);
        }
    }
    Ok(EnvelopeFit {
        regime: regime.describe(),
        constant,
        fit_range: (lo, hi),
    })
}
