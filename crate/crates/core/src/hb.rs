//! Harmonic balance: loop transfer functions, the Fourier-series boundary
//! condition, HB plots, M plots and the loop-gain test.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_model, CompensatorParams, PowerStageParams, SwitchedLinearModel, Topology,
};
use crate::numerics::{Matrix, Vector};
use crate::sampled::{buck_s_per_volt, Axis, BoundaryCurve, SteadyConstraint};

/// Laurent terms subtracted from the real part of the series.
const RE_ASYMPTOTES: usize = 4;
/// Laurent terms subtracted from the imaginary part.
const IM_ASYMPTOTES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbSettings {
    /// Number of harmonics summed.
    pub k: usize,
    /// Allowed relative size of the estimated series tail.
    pub tail_tolerance: f64,
}

impl Default for HbSettings {
    fn default() -> Self {
        HbSettings {
            k: 200,
            tail_tolerance: 1e-6,
        }
    }
}

impl HbSettings {
    fn check(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument(
                "harmonic count K must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    /// Numerator and denominator in ascending powers of `s`.
    Rational { num: Vec<f64>, den: Vec<f64> },
    /// `c (sI − A)⁻¹ b + d`.
    StateSpace {
        a: Matrix,
        b: Vector,
        c: Vector,
        d: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub label: String,
    gain: f64,
    form: Form,
}

fn horner(coef: &[f64], s: Complex64) -> (Complex64, f64) {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for (i, &c) in coef.iter().enumerate().rev() {
        acc = acc * s + c;
        scale += c.abs() * s.norm().powi(i as i32);
    }
    (acc, scale)
}

impl TransferFunction {
    pub fn rational(label: &str, num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidArgument("zero denominator polynomial".into()));
        }
        Ok(TransferFunction {
            label: label.into(),
            gain: 1.0,
            form: Form::Rational { num, den },
        })
    }

    pub fn state_space(label: &str, a: Matrix, b: Vector, c: Vector, d: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(Error::Dimension(format!(
                "state-space realization with A {}x{}, b {}, c {}",
                n,
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        Ok(TransferFunction {
            label: label.into(),
            gain: 1.0,
            form: Form::StateSpace { a, b, c, d },
        })
    }

    /// The same function multiplied by `k`.
    pub fn scaled(&self, label: &str, k: f64) -> Self {
        TransferFunction {
            label: label.into(),
            gain: self.gain * k,
            form: self.form.clone(),
        }
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let value = match &self.form {
            Form::Rational { num, den } => {
                let (n, _) = horner(num, s);
                let (dv, scale) = horner(den, s);
                if dv.norm() <= 1e-14 * scale {
                    return Err(Error::Singular("transfer function evaluated at a pole"));
                }
                n / dv
            }
            Form::StateSpace { a, b, c, d } => {
                let n = a.nrows();
                let m = DMatrix::from_fn(n, n, |i, j| {
                    let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
                    diag - a[(i, j)]
                });
                let lu = m.lu();
                let u = lu.u();
                let (lo, hi) = (0..n)
                    .map(|i| u[(i, i)].norm())
                    .fold((f64::INFINITY, 0.0f64), |(l, h), p| (l.min(p), h.max(p)));
                if n > 0 && (!(lo > 0.0) || lo <= 1e-14 * hi) {
                    return Err(Error::Singular("transfer function evaluated at a pole"));
                }
                let rhs = DMatrix::from_fn(n, 1, |i, _| Complex64::new(b[i], 0.0));
                let z = lu
                    .solve(&rhs)
                    .ok_or(Error::Singular("transfer function evaluated at a pole"))?;
                (0..n).map(|i| z[(i, 0)] * c[i]).sum::<Complex64>() + d
            }
        };
        let value = value * self.gain;
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::NonFinite(format!("{}({s})", self.label)));
        }
        Ok(value)
    }

    /// Laurent coefficients `h0, h1, …` of the expansion `Σ h_i s^{-i}` at infinity.
    pub fn laurent(&self, count: usize) -> Result<Vec<f64>> {
        let mut out = match &self.form {
            Form::StateSpace { a, b, c, d } => {
                let mut out = vec![*d];
                let mut v = b.clone();
                for _ in 1..count {
                    out.push(c.dot(&v));
                    v = a * v;
                }
                out.truncate(count);
                out
            }
            Form::Rational { num, den } => {
                let n = den.iter().rposition(|&c| c != 0.0).unwrap();
                if num.iter().rposition(|&c| c != 0.0).is_some_and(|m| m > n) {
                    return Err(Error::Unsupported(format!("{} is improper", self.label)));
                }
                // In z = 1/s: G = p(z)/q(z) with p_i = num[n−i], q_i = den[n−i].
                let p = |i: usize| {
                    if i <= n {
                        num.get(n - i).copied().unwrap_or(0.0)
                    } else {
                        0.0
                    }
                };
                let q = |i: usize| if i <= n { den[n - i] } else { 0.0 };
                let mut h: Vec<f64> = Vec::with_capacity(count);
                for i in 0..count {
                    let acc = p(i) - (1..=i).map(|j| q(j) * h[i - j]).sum::<f64>();
                    h.push(acc / q(0));
                }
                h
            }
        };
        for v in &mut out {
            *v *= self.gain;
        }
        Ok(out)
    }
}

fn power_stage_den(ps: &PowerStageParams) -> Vec<f64> {
    let k = 1.0 + ps.rc / ps.r;
    vec![1.0, ps.l / ps.r + ps.rc * ps.c, ps.l * ps.c * k]
}

/// Normalized control-to-output transfer function `(sRcC + 1)/(LC(1 + Rc/R)s² + (L/R + RcC)s + 1)`.
pub fn gv(ps: &PowerStageParams) -> TransferFunction {
    TransferFunction::rational("Gv", vec![1.0, ps.rc * ps.c], power_stage_den(ps)).unwrap()
}

/// Switch-node-voltage to inductor-current transfer function.
pub fn gi(ps: &PowerStageParams) -> TransferFunction {
    TransferFunction::rational(
        "Gi",
        vec![1.0 / ps.r, (1.0 + ps.rc / ps.r) * ps.c],
        power_stage_den(ps),
    )
    .unwrap()
}

/// `G(s) = −C(sI − A)⁻¹B11` read off a buck model: the loop gain per unit source voltage.
pub fn loop_g_from_model(m: &SwitchedLinearModel) -> Result<TransferFunction> {
    if m.topology != Topology::Buck {
        return Err(Error::Unsupported(
            "harmonic balance is defined for buck models only".into(),
        ));
    }
    if m.d[0] != 0.0 {
        return Err(Error::Unsupported(
            "source-voltage feedthrough in the modulator input".into(),
        ));
    }
    let label = m.scheme.map_or("G".to_string(), |s| format!("G[{s:?}]"));
    TransferFunction::state_space(&label, m.a1.clone(), m.b11(), -m.c.clone(), 0.0)
}

pub fn loop_g(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<TransferFunction> {
    loop_g_from_model(&build_model(ps, cp)?)
}

/// `T(s) = (vs/Vh) G(s)`.
pub fn loop_gain(g: &TransferFunction, vs: f64, vh: f64) -> TransferFunction {
    g.scaled("T", vs / vh)
}

fn bernoulli3(x: f64) -> f64 {
    x * x * x - 1.5 * x * x + 0.5 * x
}

fn bernoulli4(x: f64) -> f64 {
    x * x * x * x - 2.0 * x * x * x + x * x - 1.0 / 30.0
}

fn zeta_even(n: u32) -> f64 {
    if n == 1 {
        return PI * PI / 6.0;
    }
    let s = 2 * n as i32;
    let big = 32.0f64;
    let head: f64 = (1..32).map(|k| (k as f64).powi(-s)).sum();
    // Euler–Maclaurin tail from k = 32.
    head + big.powi(1 - s) / (s - 1) as f64
        + 0.5 * big.powi(-s)
        + s as f64 * big.powi(-s - 1) / 12.0
}

/// Clausen function `Cl2(θ) = Σ sin(kθ)/k²`.
pub fn clausen(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t == 0.0 {
        return 0.0;
    }
    if t > PI {
        return -clausen(2.0 * PI - t);
    }
    let r2 = (t / (2.0 * PI)).powi(2);
    let mut sum = t - t * t.ln();
    let mut pow = t * r2;
    for n in 1..60u32 {
        let term = zeta_even(n) * pow / (n as f64 * (2 * n + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        pow *= r2;
    }
    sum
}

/// Closed-form sums of the Laurent terms over `k ≥ 1`; index `i` gives the
/// coefficient of `g_i / ωs^i`.
fn re_closed(duty: f64) -> [f64; RE_ASYMPTOTES] {
    let p2 = PI * PI;
    let tp = 2.0 * PI;
    // Σ sin(2πkD)/k jumps to zero at the endpoints.
    let sine = if duty == 0.0 || duty == 1.0 {
        0.0
    } else {
        -PI * (0.5 - duty)
    };
    [
        sine,
        p2 / 2.0 - p2 * duty * (1.0 - duty),
        tp.powi(3) * bernoulli3(duty) / 12.0,
        p2 * p2 / 90.0 + tp.powi(4) * bernoulli4(duty) / 48.0 - p2 * p2 / 6.0,
    ]
}

fn im_closed(duty: f64) -> Option<[f64; IM_ASYMPTOTES]> {
    let s = (PI * duty).sin();
    if s <= 0.0 {
        return None;
    }
    Some([2.0 * LN_2 - (2.0 * s).ln(), clausen(2.0 * PI * duty)])
}

/// `G` sampled at the harmonics `kωs` and `(k − 1/2)ωs`, reusable across duty ratios.
#[derive(Debug, Clone)]
pub struct HarmonicTable {
    omega_s: f64,
    settings: HbSettings,
    full: Vec<Complex64>,
    half: Vec<Complex64>,
    /// `g_i / ωs^i` for `i = 1..=4`.
    markov: [f64; RE_ASYMPTOTES],
}

/// Value of the series `Σ_k (1 − e^{j2kπD})G(jkωs) − G(j(k − 1/2)ωs)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicSum {
    pub re: f64,
    /// Diverges at `D ∈ {0, 1}` when `G` rolls off as `1/s`.
    pub im: Option<f64>,
    /// Estimated absolute size of the neglected real-part tail.
    pub tail_estimate: f64,
}

impl HarmonicSum {
    pub fn complex(&self) -> Option<Complex64> {
        self.im.map(|im| Complex64::new(self.re, im))
    }
}

impl HarmonicTable {
    pub fn new(g: &TransferFunction, omega_s: f64, settings: HbSettings) -> Result<Self> {
        settings.check()?;
        let h = g.laurent(RE_ASYMPTOTES + 1)?;
        if h[0] != 0.0 {
            return Err(Error::Unsupported(format!(
                "{} is not strictly proper; the series diverges",
                g.label
            )));
        }
        let mut markov = [0.0; RE_ASYMPTOTES];
        for (i, v) in markov.iter_mut().enumerate() {
            *v = h[i + 1] / omega_s.powi(i as i32 + 1);
        }
        let j = Complex64::new(0.0, 1.0);
        let mut full = Vec::with_capacity(settings.k);
        let mut half = Vec::with_capacity(settings.k);
        for k in 1..=settings.k {
            full.push(g.eval(j * (k as f64 * omega_s))?);
            half.push(g.eval(j * ((k as f64 - 0.5) * omega_s))?);
        }
        Ok(HarmonicTable {
            omega_s,
            settings,
            full,
            half,
            markov,
        })
    }

    pub fn omega_s(&self) -> f64 {
        self.omega_s
    }

    fn asymptote(&self, count: usize, k: f64, duty: f64) -> Complex64 {
        let j = Complex64::new(0.0, 1.0);
        let rot = Complex64::from_polar(1.0, 2.0 * PI * k * duty);
        (0..count)
            .map(|i| {
                let p = i as i32 + 1;
                let g = self.markov[i];
                (1.0 - rot) * g / (j * k).powi(p) - g / (j * (k - 0.5)).powi(p)
            })
            .sum()
    }

    /// Series value at duty ratio `duty`, with the Laurent asymptotes summed in closed form.
    pub fn sum(&self, duty: f64) -> Result<HarmonicSum> {
        if !(0.0..=1.0).contains(&duty) {
            return Err(Error::InvalidArgument(format!(
                "duty ratio {duty} outside [0, 1]"
            )));
        }
        let kmax = self.settings.k;
        let mut re = 0.0;
        let mut im = 0.0;
        let mut last = Vec::with_capacity(10);
        for idx in 0..kmax {
            let k = (idx + 1) as f64;
            let rot = Complex64::from_polar(1.0, 2.0 * PI * k * duty);
            let term = (1.0 - rot) * self.full[idx] - self.half[idx];
            let r = term.re - self.asymptote(RE_ASYMPTOTES, k, duty).re;
            re += r;
            im += term.im - self.asymptote(IM_ASYMPTOTES, k, duty).im;
            if idx + 10 >= kmax {
                last.push(r.abs());
            }
        }
        let closed = re_closed(duty);
        re += (0..RE_ASYMPTOTES)
            .map(|i| self.markov[i] * closed[i])
            .sum::<f64>();
        let im = im_closed(duty)
            .map(|c| {
                im + (0..IM_ASYMPTOTES)
                    .map(|i| self.markov[i] * c[i])
                    .sum::<f64>()
            })
            .or(if self.markov[0] == 0.0 && self.markov[1] == 0.0 {
                Some(im)
            } else {
                None
            });
        // Remainder terms decay like k^{-5}; the tail beyond K is about K/4 of the last term.
        let mean = last.iter().sum::<f64>() / last.len() as f64;
        let tail_estimate = mean * kmax as f64 / 4.0;
        if tail_estimate > self.settings.tail_tolerance * re.abs() {
            return Err(Error::TailNotConverged {
                estimate: tail_estimate,
                tolerance: self.settings.tail_tolerance,
            });
        }
        Ok(HarmonicSum {
            re,
            im,
            tail_estimate,
        })
    }

    /// One-term truncation `(1 − e^{j2πD})G(jωs) − G(jωs/2)`.
    pub fn one_term(&self, duty: f64) -> Complex64 {
        (1.0 - Complex64::from_polar(1.0, 2.0 * PI * duty)) * self.full[0] - self.half[0]
    }
}

fn vs_from_re(vh: f64, re: f64, equation: &'static str) -> Result<f64> {
    let den = 2.0 * re;
    if !(den > 0.0) {
        return Err(Error::NonPositiveDenominator {
            equation,
            denominator: den,
        });
    }
    Ok(vh / den)
}

/// `Vh / (2 Re Σ_k[(1 − e^{j2kπD})G(jkωs) − G(j(k − 1/2)ωs)])`.
pub fn vs_star_hb(
    g: &TransferFunction,
    duty: f64,
    vh: f64,
    omega_s: f64,
    settings: HbSettings,
) -> Result<f64> {
    let table = HarmonicTable::new(g, omega_s, settings)?;
    vs_from_re(vh, table.sum(duty)?.re, "eq57")
}

pub fn vs_star_hb_table(table: &HarmonicTable, duty: f64, vh: f64) -> Result<f64> {
    vs_from_re(vh, table.sum(duty)?.re, "eq57")
}

/// One-term approximation `Vh / (2 Re[(1 − e^{j2πD})G(jωs) − G(jωs/2)])`.
pub fn vs_star_hb_one_term(table: &HarmonicTable, duty: f64, vh: f64) -> Result<f64> {
    vs_from_re(vh, table.one_term(duty).re, "eq59")
}

/// S(D) in harmonic form: `2 vs fs Re Σ`.
pub fn s_value_hb(table: &HarmonicTable, duty: f64, vs: f64) -> Result<f64> {
    let fs = table.omega_s / (2.0 * PI);
    Ok(2.0 * vs * fs * table.sum(duty)?.re)
}

/// HB plot `H(D) = (vs/Vh) Σ_k …` with `vs` from `constraint`; stable where `Re H < 1/2`.
pub fn hb_plot(
    m: &SwitchedLinearModel,
    vr: f64,
    duties: &[f64],
    constraint: SteadyConstraint,
    settings: HbSettings,
) -> Result<BoundaryCurve<Complex64>> {
    let table = HarmonicTable::new(&loop_g_from_model(m)?, m.omega_s(), settings)?;
    let mut curve = BoundaryCurve::new("eq82", Axis::new("D", "1"), 0.5);
    let mut duties = duties.to_vec();
    duties.sort_by(f64::total_cmp);
    for duty in duties {
        let value = constraint
            .source_voltage(m, vr, duty)
            .and_then(|vs| Ok(table.sum(duty)?.complex().map(|h| h * (vs / m.vh))));
        curve.push(duty, value.ok().flatten());
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopGainTest {
    pub passes: bool,
    /// Distance to the threshold; positive when the test passes.
    pub margin: f64,
}

impl LoopGainTest {
    fn from_margin(margin: f64) -> Self {
        LoopGainTest {
            passes: margin > 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Report {
    /// `Re Σ_k[(1 − e^{j2kπD})T(jkωs) − T(j(k − 1/2)ωs)] < 1/2`.
    pub exact: LoopGainTest,
    /// First harmonic only.
    pub one_term: LoopGainTest,
    /// `Re T(jωs/2) > −1/2`, the all-duty design test.
    pub all_duty: LoopGainTest,
    pub h: HarmonicSum,
}

/// Loop-gain subharmonic test at duty ratio `duty`.
pub fn theorem1_check(
    t_loop: &TransferFunction,
    duty: f64,
    omega_s: f64,
    settings: HbSettings,
) -> Result<Theorem1Report> {
    let table = HarmonicTable::new(t_loop, omega_s, settings)?;
    let h = match table.sum(duty) {
        Err(Error::TailNotConverged { .. })
            if table
                .full
                .iter()
                .chain(&table.half)
                .all(|v| v.norm() == 0.0) =>
        {
            HarmonicSum {
                re: 0.0,
                im: Some(0.0),
                tail_estimate: 0.0,
            }
        }
        other => other?,
    };
    Ok(Theorem1Report {
        exact: LoopGainTest::from_margin(0.5 - h.re),
        one_term: LoopGainTest::from_margin(0.5 - table.one_term(duty).re),
        all_duty: LoopGainTest::from_margin(table.half[0].re + 0.5),
        h,
    })
}

/// M plot `M(D) = (T vs/Vh) C K(d) B11`; subharmonic-free where `M < 1`.
pub fn m_plot(
    m: &SwitchedLinearModel,
    vr: f64,
    duties: &[f64],
    constraint: SteadyConstraint,
) -> BoundaryCurve {
    let mut curve = BoundaryCurve::new("eq85", Axis::new("D", "1"), 1.0);
    let mut duties = duties.to_vec();
    duties.sort_by(f64::total_cmp);
    for duty in duties {
        let value = constraint
            .source_voltage(m, vr, duty)
            .and_then(|vs| Ok(m.period * vs / m.vh * buck_s_per_volt(m, duty * m.period)?));
        curve.push(duty, value.ok());
    }
    curve
}

/// Closed-form M plot for proportional voltage mode:
/// `(ρ kp T² vs / (4 Vh L C)) [4RcC/T (D − 1/2) + ρ(1 − Rc²C/L)(1 − 2D + 2D²)]`.
pub fn m_plot_approx(
    m: &SwitchedLinearModel,
    ps: &PowerStageParams,
    kp: f64,
    duties: &[f64],
    constraint: SteadyConstraint,
) -> BoundaryCurve {
    let (t, rho) = (ps.period(), ps.rho());
    let mut curve = BoundaryCurve::new("eq86", Axis::new("D", "1"), 1.0);
    let mut duties = duties.to_vec();
    duties.sort_by(f64::total_cmp);
    for duty in duties {
        let q = 1.0 - 2.0 * duty + 2.0 * duty * duty;
        let bracket =
            4.0 * ps.rc * ps.c / t * (duty - 0.5) + rho * (1.0 - ps.rc * ps.rc * ps.c / ps.l) * q;
        let value = constraint
            .source_voltage(m, ps.vr, duty)
            .map(|vs| rho * kp * t * t * vs / (4.0 * ps.vh * ps.l * ps.c) * bracket);
        curve.push(duty, value.ok());
    }
    curve
}

/// Partial sums of the three Fourier identities used by the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesIdentities {
    /// `Σ (1 − cos 2πkD)/k² → π²D(1 − D)`.
    pub cosine: f64,
    /// `Σ 2/(k − 1/2)² → π²`.
    pub half_harmonic: f64,
    /// `Σ sin(2πkD)/k → π(1/2 − D)`.
    pub sine: f64,
}

pub fn series_identities(duty: f64, k: usize) -> SeriesIdentities {
    let mut out = SeriesIdentities {
        cosine: 0.0,
        half_harmonic: 0.0,
        sine: 0.0,
    };
    for k in 1..=k {
        let kf = k as f64;
        let th = 2.0 * PI * kf * duty;
        out.cosine += (1.0 - th.cos()) / (kf * kf);
        out.half_harmonic += 2.0 / ((kf - 0.5) * (kf - 0.5));
        out.sine += th.sin() / kf;
    }
    out
}

pub fn series_limits(duty: f64) -> SeriesIdentities {
    SeriesIdentities {
        cosine: PI * PI * duty * (1.0 - duty),
        half_harmonic: PI * PI,
        sine: PI * (0.5 - duty),
    }
}
