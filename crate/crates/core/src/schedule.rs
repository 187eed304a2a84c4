//! Temperature schedules, their decay-ratio limits, and convergence-regime classification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of trailing terms used to estimate ratios of a tabulated schedule.
pub const RATIO_WINDOW: usize = 100;

/// Ratios closer than this are treated as equal when comparing against `gamma` or `alpha`.
pub const RATE_TOL: f64 = 1e-9;

/// A nonnegative sequence `lambda_t`, `t >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Zero,
    Constant(f64),
    /// `c q^t`
    Geometric { c: f64, q: f64 },
    /// `c / t^k`
    InversePoly { c: f64, k: f64 },
    /// `c / log(t + 1)`
    InverseLog(f64),
    /// `c log(t + 1) / t`
    LogOverN(f64),
    /// Explicit values for `t = 1, 2, ...`; the last value is held afterwards.
    Tabulated(Vec<f64>),
}

impl Schedule {
    pub fn geometric(c: f64, q: f64) -> Result<Self> {
        let s = Schedule::Geometric { c, q };
        s.validate()?;
        Ok(s)
    }

    pub fn inverse_poly(c: f64, k: f64) -> Result<Self> {
        let s = Schedule::InversePoly { c, k };
        s.validate()?;
        Ok(s)
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        let s = Schedule::Tabulated(values);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, c: f64| {
            if c > 0.0 && c.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {c}")))
            }
        };
        match *self {
            Schedule::Zero => Ok(()),
            Schedule::Constant(c) | Schedule::InverseLog(c) | Schedule::LogOverN(c) => {
                positive("constant", c)
            }
            Schedule::Geometric { c, q } => {
                positive("constant", c)?;
                if q > 0.0 && q < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("ratio must lie in (0, 1), got {q}")))
                }
            }
            Schedule::InversePoly { c, k } => {
                positive("constant", c)?;
                positive("power", k)
            }
            Schedule::Tabulated(ref v) => {
                if v.is_empty() {
                    return Err(Error::InvalidParameter("tabulated schedule is empty".into()));
                }
                if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidParameter(
                        "tabulated values must be finite and nonnegative".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// The same family with its multiplicative constant scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Schedule {
        match self {
            Schedule::Zero => Schedule::Zero,
            Schedule::Constant(c) => Schedule::Constant(c * factor),
            Schedule::Geometric { c, q } => Schedule::Geometric { c: c * factor, q: *q },
            Schedule::InversePoly { c, k } => Schedule::InversePoly { c: c * factor, k: *k },
            Schedule::InverseLog(c) => Schedule::InverseLog(c * factor),
            Schedule::LogOverN(c) => Schedule::LogOverN(c * factor),
            Schedule::Tabulated(v) => Schedule::Tabulated(v.iter().map(|x| x * factor).collect()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Schedule::Zero => true,
            Schedule::Tabulated(v) => v.iter().all(|&x| x == 0.0),
            _ => false,
        }
    }

    /// `lambda_t`, with `t` counted from 1.
    pub fn lambda_at(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidParameter("schedules are indexed from t = 1".into()));
        }
        Ok(self.value(t))
    }

    pub(crate) fn value(&self, t: usize) -> f64 {
        let tf = t as f64;
        match *self {
            Schedule::Zero => 0.0,
            Schedule::Constant(c) => c,
            Schedule::Geometric { c, q } => c * q.powf(tf),
            Schedule::InversePoly { c, k } => c / tf.powf(k),
            Schedule::InverseLog(c) => c / (tf + 1.0).ln(),
            Schedule::LogOverN(c) => c * (tf + 1.0).ln() / tf,
            Schedule::Tabulated(ref v) => v[(t - 1).min(v.len() - 1)],
        }
    }

    /// `lambda_1, ..., lambda_n`.
    pub fn values(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|t| self.value(t)).collect()
    }

    /// `(1/N) sum_{t=1}^N lambda_t`.
    pub fn mean_lambda(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidParameter("mean over zero terms".into()));
        }
        Ok(self.values(n).iter().sum::<f64>() / n as f64)
    }

    /// `(liminf, limsup)` of `lambda_N / lambda_{N-1}`.
    pub fn rate_limits(&self) -> Result<(f64, f64)> {
        match *self {
            Schedule::Zero => Ok((0.0, 0.0)),
            Schedule::Geometric { q, .. } => Ok((q, q)),
            Schedule::Constant(_)
            | Schedule::InversePoly { .. }
            | Schedule::InverseLog(_)
            | Schedule::LogOverN(_) => Ok((1.0, 1.0)),
            Schedule::Tabulated(_) => Err(Error::NoAnalyticLimit),
        }
    }

    /// Ratio limits, estimated from the tail for tabulated schedules.
    pub fn effective_rate_limits(&self) -> Result<(f64, f64)> {
        match self {
            Schedule::Tabulated(v) => empirical_ratio_limits(v),
            _ => self.rate_limits(),
        }
    }

    /// `(liminf, limsup)` of `mean_N / mean_{N-1}` where `mean_N` is the running mean.
    pub fn mean_rate_limits(&self) -> Result<(f64, f64)> {
        match self {
            Schedule::Zero => Ok((0.0, 0.0)),
            Schedule::Tabulated(v) => {
                let mut total = 0.0;
                let means: Vec<f64> = v
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        total += x;
                        total / (i + 1) as f64
                    })
                    .collect();
                empirical_ratio_limits(&means)
            }
            // any positive sequence has running means decaying no faster than 1/N
            _ => Ok((1.0, 1.0)),
        }
    }
}

/// Min and max consecutive ratio over the last [`RATIO_WINDOW`] terms.
pub fn empirical_ratio_limits(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::NoAnalyticLimit);
    }
    let start = values.len().saturating_sub(RATIO_WINDOW + 1);
    let tail = &values[start..];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in tail.windows(2) {
        let ratio = match (w[0], w[1]) {
            (a, b) if a == 0.0 && b == 0.0 => 0.0,
            (a, _) if a == 0.0 => f64::INFINITY,
            (a, b) => b / a,
        };
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok((lo, hi))
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Zero => write!(f, "zero"),
            Schedule::Constant(c) => write!(f, "const:{c}"),
            Schedule::Geometric { c, q } => write!(f, "geo:{c}:{q}"),
            Schedule::InversePoly { c, k } => write!(f, "invpoly:{c}:{k}"),
            Schedule::InverseLog(c) => write!(f, "invlog:{c}"),
            Schedule::LogOverN(c) => write!(f, "loglin:{c}"),
            Schedule::Tabulated(v) => {
                write!(f, "tab:")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// Grammar: `zero`, `const:c`, `geo:c:q`, `invpoly:c:k`, `loglin:c`, `invlog:c`, `tab:v1,v2,...`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown schedule {text:?}"));
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {s:?} in schedule {text:?}")))
        };
        let parts: Vec<&str> = text.trim().splitn(2, ':').collect();
        let args: Vec<&str> = parts.get(1).map(|a| a.split(':').collect()).unwrap_or_default();
        let sched = match (parts[0], args.len()) {
            ("zero", 0) => Schedule::Zero,
            ("const", 1) => Schedule::Constant(num(args[0])?),
            ("geo", 2) => Schedule::Geometric {
                c: num(args[0])?,
                q: num(args[1])?,
            },
            ("invpoly", 2) => Schedule::InversePoly {
                c: num(args[0])?,
                k: num(args[1])?,
            },
            ("loglin", 1) => Schedule::LogOverN(num(args[0])?),
            ("invlog", 1) => Schedule::InverseLog(num(args[0])?),
            ("tab", 1) => Schedule::Tabulated(
                args[0].split(',').map(num).collect::<Result<Vec<_>>>()?,
            ),
            _ => return Err(bad()),
        };
        sched.validate()?;
        Ok(sched)
    }
}

impl Serialize for Schedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    /// `O(gamma^N)`
    LinearGamma,
    /// `O(N gamma^N)`
    AlmostLinear,
    /// `O(lambda_N)`
    SlowLambda,
    /// `O(N (alpha v gamma)^N)`
    CviAlmostLinear,
    /// `O(1/N)`
    CviInverseN,
    /// `O(mean lambda_N v 1/N)`
    CviMeanLambda,
    Unclassified,
}

impl RegimeLabel {
    pub fn rate_expr(&self) -> &'static str {
        match self {
            RegimeLabel::LinearGamma => "O(gamma^N)",
            RegimeLabel::AlmostLinear => "O(N gamma^N)",
            RegimeLabel::SlowLambda => "O(lambda_N)",
            RegimeLabel::CviAlmostLinear => "O(N (alpha v gamma)^N)",
            RegimeLabel::CviInverseN => "O(1/N)",
            RegimeLabel::CviMeanLambda => "O(mean_lambda_N v 1/N)",
            RegimeLabel::Unclassified => "unclassified",
        }
    }
}

/// Cell colours used by the CVI iteration-count table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeColor {
    /// Almost linear at rate `gamma`.
    Red,
    /// Almost linear at rate `alpha > gamma`.
    Blue,
    /// Slow, driven by the schedule.
    Green,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub label: RegimeLabel,
    pub gamma: f64,
    pub alpha: Option<f64>,
    /// Geometric base for the linear regimes (`gamma` or `alpha v gamma`).
    pub rate: Option<f64>,
}

impl Regime {
    pub fn color(&self) -> RegimeColor {
        match (self.label, self.rate) {
            (RegimeLabel::CviAlmostLinear, Some(r)) if r > self.gamma + RATE_TOL => {
                RegimeColor::Blue
            }
            (RegimeLabel::LinearGamma | RegimeLabel::AlmostLinear | RegimeLabel::CviAlmostLinear, _) => {
                RegimeColor::Red
            }
            (RegimeLabel::SlowLambda | RegimeLabel::CviMeanLambda | RegimeLabel::CviInverseN, _) => {
                RegimeColor::Green
            }
            (RegimeLabel::Unclassified, _) => RegimeColor::None,
        }
    }

    pub fn describe(&self) -> String {
        match (self.label, self.rate) {
            (RegimeLabel::CviAlmostLinear, Some(r)) => format!("O(N {r}^N)"),
            _ => self.label.rate_expr().to_string(),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Regime predicted for a schedule: reg-MPI when `alpha` is absent, CVI otherwise.
pub fn classify_regime(sched: &Schedule, gamma: f64, alpha: Option<f64>) -> Result<Regime> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let make = |label, rate| Regime {
        label,
        gamma,
        alpha,
        rate,
    };
    let le = |a: f64, b: f64| a <= b + RATE_TOL;
    let gt = |a: f64, b: f64| a > b + RATE_TOL;
    match alpha {
        None => {
            let (lo, hi) = sched.effective_rate_limits()?;
            Ok(if gt(lo, gamma) {
                make(RegimeLabel::SlowLambda, None)
            } else if gt(gamma, hi) {
                make(RegimeLabel::LinearGamma, Some(gamma))
            } else if le(hi, gamma) {
                make(RegimeLabel::AlmostLinear, Some(gamma))
            } else {
                make(RegimeLabel::Unclassified, None)
            })
        }
        Some(a) if !(0.0..=1.0).contains(&a) => Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {a}"
        ))),
        Some(a) if a == 1.0 => {
            let (lo, hi) = sched.mean_rate_limits()?;
            Ok(if gt(lo, gamma) {
                make(RegimeLabel::CviMeanLambda, None)
            } else if le(hi, gamma) {
                make(RegimeLabel::CviInverseN, None)
            } else {
                make(RegimeLabel::Unclassified, None)
            })
        }
        Some(a) => {
            let (lo, hi) = sched.effective_rate_limits()?;
            let rate = a.max(gamma);
            Ok(if le(hi, gamma) {
                make(RegimeLabel::CviAlmostLinear, Some(rate))
            } else if gt(lo, rate) {
                make(RegimeLabel::SlowLambda, None)
            } else {
                make(RegimeLabel::Unclassified, None)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Schedule {
        text.parse().unwrap()
    }

    #[test]
    fn lambda_at_examples() {
        assert_eq!(s("zero").lambda_at(7).unwrap(), 0.0);
        assert!((s("geo:1:0.9").lambda_at(2).unwrap() - 0.81).abs() < 1e-15);
        assert!((s("invpoly:1:2").lambda_at(10).unwrap() - 0.01).abs() < 1e-15);
        assert!((s("invpoly:1:0.5").lambda_at(4).unwrap() - 0.5).abs() < 1e-15);
        assert!((s("loglin:1").lambda_at(1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((s("invlog:2").lambda_at(1).unwrap() - 2.0 / 2f64.ln()).abs() < 1e-15);
        assert_eq!(s("const:0.01").lambda_at(100).unwrap(), 0.01);
        assert!(s("zero").lambda_at(0).is_err());
        let tab = s("tab:3,2,1");
        assert_eq!(tab.values(5), vec![3.0, 2.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        for text in ["zero", "const:0.01", "geo:1:0.45", "invpoly:1:1", "invpoly:1:0.5", "loglin:1", "invlog:1", "tab:1,0.5,0.25"] {
            assert_eq!(s(text).to_string(), text);
        }
        assert_eq!(s("geo:1:0.45"), Schedule::Geometric { c: 1.0, q: 0.45 });
        for bad in ["", "geo:1", "geo:1:1.5", "invpoly:0:1", "const:-1", "foo:1", "zero:1", "tab:1,-1", "geo:a:0.5"] {
            assert!(bad.parse::<Schedule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn rate_limit_examples() {
        assert_eq!(s("geo:1:0.45").rate_limits().unwrap(), (0.45, 0.45));
        assert_eq!(s("invpoly:1:1").rate_limits().unwrap(), (1.0, 1.0));
        assert_eq!(s("loglin:1").rate_limits().unwrap(), (1.0, 1.0));
        assert_eq!(s("zero").rate_limits().unwrap(), (0.0, 0.0));
        assert_eq!(s("tab:1,2").rate_limits(), Err(Error::NoAnalyticLimit));
    }

    #[test]
    fn empirical_ratios_approach_limits() {
        let n = 100_000;
        for text in ["geo:1:0.45", "geo:2:0.9", "invpoly:1:1", "invpoly:1:0.5", "invpoly:1:2", "loglin:1", "invlog:1", "const:3"] {
            let sched = s(text);
            let (lo, hi) = sched.rate_limits().unwrap();
            let ratio = sched.value(n) / sched.value(n - 1);
            if ratio.is_finite() {
                assert!((ratio - lo).abs() < 1e-3 && (ratio - hi).abs() < 1e-3, "{text}");
            }
        }
        let loglin = s("loglin:1");
        let ratio = loglin.value(1_000_000) / loglin.value(999_999);
        assert!((ratio - 1.0).abs() < 1e-5);
    }

    #[test]
    fn tabulated_ratios_use_the_tail() {
        let values: Vec<f64> = (1..=500).map(|t| 0.8f64.powi(t)).collect();
        let (lo, hi) = Schedule::Tabulated(values).effective_rate_limits().unwrap();
        assert!((lo - 0.8).abs() < 1e-12 && (hi - 0.8).abs() < 1e-12);
        assert!(empirical_ratio_limits(&[1.0]).is_err());
    }

    #[test]
    fn mean_dominates_for_nonincreasing() {
        for text in ["geo:1:0.45", "invpoly:1:1", "invlog:1", "const:1"] {
            let sched = s(text);
            for n in [1, 2, 10, 100, 1000] {
                assert!(sched.mean_lambda(n).unwrap() >= sched.value(n) - 1e-15);
            }
        }
    }

    #[test]
    fn classification_examples() {
        let r = classify_regime(&s("invpoly:1:1"), 0.9, None).unwrap();
        assert_eq!(r.label, RegimeLabel::SlowLambda);
        let r = classify_regime(&s("geo:1:0.45"), 0.9, Some(0.95)).unwrap();
        assert_eq!(r.label, RegimeLabel::CviAlmostLinear);
        assert_eq!(r.rate, Some(0.95));
        assert_eq!(r.color(), RegimeColor::Blue);
        let r = classify_regime(&s("geo:1:0.45"), 0.9, None).unwrap();
        assert_eq!(r.label, RegimeLabel::LinearGamma);
        let r = classify_regime(&s("geo:1:0.9"), 0.9, None).unwrap();
        assert_eq!(r.label, RegimeLabel::AlmostLinear);
        let r = classify_regime(&s("zero"), 0.9, None).unwrap();
        assert_eq!(r.label, RegimeLabel::LinearGamma);
    }

    #[test]
    fn cvi_classification_table() {
        let cases = [
            ("geo:1:0.45", 0.0, RegimeColor::Red),
            ("geo:1:0.8", 0.6, RegimeColor::Red),
            ("geo:1:0.9", 0.6, RegimeColor::Red),
            ("geo:1:0.9", 0.95, RegimeColor::Blue),
            ("invpoly:1:2", 0.0, RegimeColor::Green),
            ("invpoly:1:2", 0.95, RegimeColor::Green),
        ];
        for (text, alpha, color) in cases {
            assert_eq!(classify_regime(&s(text), 0.9, Some(alpha)).unwrap().color(), color);
        }
        let r = classify_regime(&s("zero"), 0.9, Some(1.0)).unwrap();
        assert_eq!(r.label, RegimeLabel::CviInverseN);
        let r = classify_regime(&s("geo:1:0.45"), 0.9, Some(1.0)).unwrap();
        assert_eq!(r.label, RegimeLabel::CviMeanLambda);
    }

    #[test]
    fn uncovered_cases_are_not_guessed() {
        // gamma < rho <= alpha
        let r = classify_regime(&s("geo:1:0.92"), 0.9, Some(0.95)).unwrap();
        assert_eq!(r.label, RegimeLabel::Unclassified);
        let alternating: Vec<f64> = (0..300).map(|t| if t % 2 == 0 { 1.0 } else { 0.5 }).collect();
        let r = classify_regime(&Schedule::Tabulated(alternating), 0.9, None).unwrap();
        assert_eq!(r.label, RegimeLabel::Unclassified);
        assert!(classify_regime(&s("zero"), 1.0, None).is_err());
        assert!(classify_regime(&s("zero"), 0.9, Some(1.5)).is_err());
    }
}
