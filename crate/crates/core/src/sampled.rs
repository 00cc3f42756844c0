//! Sampled-data small-signal analysis around the periodic orbit: the
//! Jacobian Φ, eigenvalue classification, exact and approximate
//! subharmonic boundaries, S plots and boundary/steady-state intersections.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SwitchedLinearModel, Topology};
use crate::numerics::{eig, expm, expm_with_integral, solve_ctx, solve_vec, Matrix, Vector};
use crate::roots::{all_roots, linspace};
use crate::steady::{critical_vs_at_duty, orbit_at_duty, solve_duty, PeriodicOrbit};

/// Tolerance on `|λ|` when deciding whether an eigenvalue left the unit circle.
pub const UNIT_CIRCLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    /// A real eigenvalue below −1: period doubling.
    Subharmonic,
    /// A complex pair outside the unit circle.
    NeimarkSacker,
    /// A real eigenvalue above +1.
    OtherUnstable,
}

impl Classification {
    pub fn is_stable(self) -> bool {
        self == Classification::Stable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub phi: Matrix,
    pub eigenvalues: Vec<Complex64>,
    pub classification: Classification,
    /// Some eigenvalue is (numerically) zero.
    pub deadbeat: bool,
}

impl StabilityReport {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalue closest to −1.
    pub fn nearest_to_minus_one(&self) -> Option<Complex64> {
        self.eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| (a + 1.0).norm().total_cmp(&(b + 1.0).norm()))
    }
}

/// Which side of a critical value is free of subharmonic oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StableSide {
    /// Stable while the operating value is below the critical value.
    Below,
    /// Stable while the operating value is above the critical value.
    Above,
}

impl StableSide {
    pub fn from_denominator(den: f64) -> Self {
        if den > 0.0 {
            StableSide::Below
        } else {
            StableSide::Above
        }
    }

    pub fn is_stable(self, value: f64, critical: f64) -> bool {
        match self {
            StableSide::Below => value < critical,
            StableSide::Above => value > critical,
        }
    }
}

/// Critical source voltage together with the inequality direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalVoltage {
    pub value: f64,
    pub denominator: f64,
    pub stable_side: StableSide,
    pub equation: &'static str,
}

impl CriticalVoltage {
    fn new(equation: &'static str, numerator: f64, denominator: f64) -> Result<Self> {
        if denominator == 0.0 || !denominator.is_finite() {
            return Err(Error::SingularDenominator {
                equation,
                denominator,
            });
        }
        Ok(CriticalVoltage {
            value: numerator / denominator,
            denominator,
            stable_side: StableSide::from_denominator(denominator),
            equation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
}

impl Axis {
    pub fn new(name: &str, unit: &str) -> Self {
        Axis {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint<V> {
    pub param: f64,
    /// `None` marks a singular sample.
    pub value: Option<V>,
}

/// A sampled criterion curve, tagged with the equation that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurve<V = f64> {
    pub criterion_id: String,
    pub axis: Axis,
    pub samples: Vec<CurvePoint<V>>,
    pub threshold: f64,
}

impl<V> BoundaryCurve<V> {
    pub fn new(criterion_id: &str, axis: Axis, threshold: f64) -> Self {
        BoundaryCurve {
            criterion_id: criterion_id.into(),
            axis,
            samples: Vec::new(),
            threshold,
        }
    }

    pub fn push(&mut self, param: f64, value: Option<V>) {
        self.samples.push(CurvePoint { param, value });
    }
}

impl<V: Copy> BoundaryCurve<V> {
    /// Linearly interpolated parameter values where `key(value)` crosses the
    /// threshold between adjacent finite samples.
    pub fn crossings_by(&self, key: impl Fn(V) -> f64) -> Vec<f64> {
        let mut out = Vec::new();
        for w in self.samples.windows(2) {
            let (Some(a), Some(b)) = (w[0].value, w[1].value) else {
                continue;
            };
            let (fa, fb) = (key(a) - self.threshold, key(b) - self.threshold);
            if fa == 0.0 {
                out.push(w[0].param);
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                out.push(w[0].param + (w[1].param - w[0].param) * fa / (fa - fb));
            }
        }
        out
    }
}

impl BoundaryCurve<f64> {
    pub fn crossings(&self) -> Vec<f64> {
        self.crossings_by(|v| v)
    }
}

/// Jacobian of the one-cycle map sampled at `t = nT`:
/// `Φ = e^{A2(T−d)} (I − (ẋ⁰(d−) − ẋ⁰(d+)) C / (ẏ⁰(d−) − ḣ)) e^{A1 d}`.
pub fn jacobian_phi(m: &SwitchedLinearModel, orbit: &PeriodicOrbit) -> Result<Matrix> {
    let hdot = m.ramp_slope();
    let den = orbit.y_slope_pre - hdot;
    if den.abs() < 1e-12 * hdot.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Grazing { denominator: den });
    }
    let jump = &orbit.slope_pre - &orbit.slope_post;
    let saltation = Matrix::identity(m.n, m.n) - &jump * m.c.transpose() / den;
    let e1 = expm(&m.a1, orbit.d)?;
    let e2 = expm(&m.a2, m.period - orbit.d)?;
    Ok(e2 * saltation * e1)
}

/// Classifies a sampled-data Jacobian by its eigenvalues.
pub fn classify(phi: &Matrix) -> Result<StabilityReport> {
    let eigenvalues = eig(phi)?;
    let outside: Vec<&Complex64> = eigenvalues
        .iter()
        .filter(|l| l.norm() > 1.0 + UNIT_CIRCLE_TOL)
        .collect();
    let is_real = |l: &Complex64| l.im.abs() <= UNIT_CIRCLE_TOL * l.norm().max(1.0);
    let classification = if outside.is_empty() {
        Classification::Stable
    } else if outside.iter().any(|l| is_real(l) && l.re < 0.0) {
        Classification::Subharmonic
    } else if outside.iter().any(|l| !is_real(l)) {
        Classification::NeimarkSacker
    } else {
        Classification::OtherUnstable
    };
    let deadbeat = eigenvalues.iter().any(|l| l.norm() <= UNIT_CIRCLE_TOL);
    Ok(StabilityReport {
        phi: phi.clone(),
        eigenvalues,
        classification,
        deadbeat,
    })
}

/// Steady state plus its stability report in one call.
pub fn stability(m: &SwitchedLinearModel, u: &Vector) -> Result<(PeriodicOrbit, StabilityReport)> {
    let orbit = solve_duty(m, u)?;
    let report = classify(&jacobian_phi(m, &orbit)?)?;
    Ok((orbit, report))
}

fn plus_identity(a: Matrix) -> Matrix {
    let n = a.nrows();
    a + Matrix::identity(n, n)
}

/// S(D) from the slope form, valid for any topology.
pub fn s_general(m: &SwitchedLinearModel, orbit: &PeriodicOrbit) -> Result<f64> {
    let e1_inv = expm(&m.a1, -orbit.d)?;
    let e2_inv = expm(&m.a2, -(m.period - orbit.d))?;
    let jump = &orbit.slope_pre - &orbit.slope_post;
    let z = solve_vec(
        &plus_identity(e2_inv * e1_inv),
        &jump,
        "e^{-A2(T-d)} e^{-A1 d} + I",
    )?;
    Ok(orbit.y_slope_pre - m.c.dot(&z))
}

/// `S(D) − ḣ`; zero exactly on the subharmonic boundary.
pub fn boundary_residual(m: &SwitchedLinearModel, u: &Vector, d: f64) -> Result<f64> {
    let orbit = orbit_at_duty(m, u, d)?;
    Ok(s_general(m, &orbit)? - m.ramp_slope())
}

/// Dual form of [`boundary_residual`] built on `ẏ⁰(d+)`:
/// `ẏ⁰(d+) + C (e^{A1 d} e^{A2(T−d)} + I)⁻¹ (ẋ⁰(d−) − ẋ⁰(d+)) − ḣ`.
pub fn boundary_residual_dual(m: &SwitchedLinearModel, u: &Vector, d: f64) -> Result<f64> {
    let orbit = orbit_at_duty(m, u, d)?;
    let e1 = expm(&m.a1, d)?;
    let e2 = expm(&m.a2, m.period - d)?;
    let jump = &orbit.slope_pre - &orbit.slope_post;
    let z = solve_vec(&plus_identity(e1 * e2), &jump, "e^{A1 d} e^{A2(T-d)} + I")?;
    Ok(orbit.y_slope_post + m.c.dot(&z) - m.ramp_slope())
}

/// `(I − e^{AT})⁻¹(e^{Ad} − I) + (I + e^{AT})⁻¹`, with the first term
/// rewritten as `−Ψ(T)⁻¹Ψ(d)` so an integrator pole needs no inverse.
fn buck_kernel(m: &SwitchedLinearModel, d: f64) -> Result<Matrix> {
    let a = &m.a1;
    let n = m.n;
    let (e_t, psi_t) = expm_with_integral(a, m.period)?;
    let (_, psi_d) = expm_with_integral(a, d)?;
    let first = -solve_ctx(&psi_t, &psi_d, "integral of e^{At} over one period")?;
    let second = solve_ctx(&plus_identity(e_t), &Matrix::identity(n, n), "I + e^{AT}")?;
    Ok(first + second)
}

/// Buck S(D) per unit source voltage: `C K(d) B11`.
pub fn buck_s_per_volt(m: &SwitchedLinearModel, d: f64) -> Result<f64> {
    require_buck(m)?;
    Ok(m.c.dot(&(buck_kernel(m, d)? * m.b11())))
}

fn require_buck(m: &SwitchedLinearModel) -> Result<()> {
    if m.topology != Topology::Buck {
        return Err(Error::Unsupported(
            "buck closed form on a non-buck model".into(),
        ));
    }
    Ok(())
}

/// `Λ(d) = I + (A1 − (I + e^{−A2(T−d)} e^{−A1 d})⁻¹ (A1 − A2)) X(d)` for `B1 == B2`.
pub fn boost_lambda(m: &SwitchedLinearModel, d: f64) -> Result<Matrix> {
    if m.b1 != m.b2 {
        return Err(Error::Unsupported("Λ(d) requires B1 == B2".into()));
    }
    let n = m.n;
    let id = Matrix::identity(n, n);
    let (e1, psi1) = expm_with_integral(&m.a1, d)?;
    let (e2, psi2) = expm_with_integral(&m.a2, m.period - d)?;
    let x = solve_ctx(
        &(&id - &e1 * &e2),
        &(&e1 * psi2 + psi1),
        "I - e^{A1 d} e^{A2 (T-d)}",
    )?;
    let inv = expm(&m.a2, -(m.period - d))? * expm(&m.a1, -d)?;
    let corr = solve_ctx(
        &plus_identity(inv),
        &(&m.a1 - &m.a2),
        "I + e^{-A2(T-d)} e^{-A1 d}",
    )?;
    Ok(id + (&m.a1 - corr) * x)
}

/// S(D) at duty ratio `duty`, using the topology's closed form.
pub fn s_value(m: &SwitchedLinearModel, u: &Vector, duty: f64) -> Result<f64> {
    let d = duty * m.period;
    match m.topology {
        Topology::Buck => Ok(buck_s_per_volt(m, d)? * u[0]),
        Topology::Boost => Ok(m.c.dot(&(boost_lambda(m, d)? * (&m.b1 * u)))),
        Topology::General => s_general(m, &orbit_at_duty(m, u, d)?),
    }
}

/// S plot over a grid of duty ratios, threshold `ḣ`.
pub fn s_plot(m: &SwitchedLinearModel, u: &Vector, duties: &[f64]) -> BoundaryCurve {
    let id = match m.topology {
        Topology::Buck => "eq21",
        Topology::Boost => "eq18",
        Topology::General => "eq20",
    };
    let mut curve = BoundaryCurve::new(id, Axis::new("D", "1"), m.ramp_slope());
    let mut duties = duties.to_vec();
    duties.sort_by(f64::total_cmp);
    for duty in duties {
        curve.push(duty, s_value(m, u, duty).ok());
    }
    curve
}

/// Exact critical source voltage at switching instant `d`.
///
/// Buck: `ḣ / (C K(d) B11)`; boost: `(ḣ − CΛB12 vr) / (CΛB11)`. The stable
/// side follows the sign of the denominator.
pub fn critical_vs_exact(m: &SwitchedLinearModel, d: f64, vr: f64) -> Result<CriticalVoltage> {
    let hdot = m.ramp_slope();
    match m.topology {
        Topology::Buck => CriticalVoltage::new("eq13", hdot, buck_s_per_volt(m, d)?),
        Topology::Boost => {
            let lam = boost_lambda(m, d)?;
            let c_lam = lam.transpose() * &m.c;
            CriticalVoltage::new("eq19", hdot - c_lam.dot(&m.b12()) * vr, c_lam.dot(&m.b11()))
        }
        Topology::General => Err(Error::Unsupported(
            "critical source voltage needs a buck or boost model".into(),
        )),
    }
}

/// Critical voltage at `d = T`, the all-duty bound for voltage-mode bucks.
pub fn critical_vs_min(m: &SwitchedLinearModel, vr: f64) -> Result<CriticalVoltage> {
    let mut v = critical_vs_exact(m, m.period, vr)?;
    if v.equation == "eq13" {
        v.equation = "eq14";
    }
    Ok(v)
}

/// Second-order approximation:
/// `ḣ / ((1/2 − D) C B11 − ((1 − 2D + 2D²)/4) C A1 B11 T)`.
pub fn critical_vs_approx(m: &SwitchedLinearModel, d: f64) -> Result<CriticalVoltage> {
    require_buck(m)?;
    let duty = d / m.period;
    let b11 = m.b11();
    let cb = m.c.dot(&b11);
    let cab = m.c.dot(&(&m.a1 * &b11));
    let den = (0.5 - duty) * cb - (1.0 - 2.0 * duty + 2.0 * duty * duty) / 4.0 * cab * m.period;
    CriticalVoltage::new("eq16", m.ramp_slope(), den)
}

/// `(ẏ⁰(d−) + ẏ⁰(d+))/2 − (C/4)(A1 d + A2(T−d))(ẋ⁰(d−) − ẋ⁰(d+)) − ḣ`.
pub fn approx_boundary_2nd(m: &SwitchedLinearModel, orbit: &PeriodicOrbit) -> f64 {
    let jump = &orbit.slope_pre - &orbit.slope_post;
    let weight = &m.a1 * orbit.d + &m.a2 * (m.period - orbit.d);
    0.5 * (orbit.y_slope_pre + orbit.y_slope_post)
        - 0.25 * m.c.dot(&(weight * jump))
        - m.ramp_slope()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HighFrequencyBoundary {
    /// `(ẏ⁰(d−) + ẏ⁰(d+))/2 − ḣ`.
    pub residual: f64,
    /// `ẏ⁰(d+) == ḣ`: the falling-slope/ramp deadbeat condition.
    pub deadbeat: bool,
}

/// High switching-frequency limit of the boundary condition.
pub fn approx_boundary_highfs(orbit: &PeriodicOrbit, ramp_slope: f64) -> HighFrequencyBoundary {
    let scale = orbit
        .y_slope_post
        .abs()
        .max(ramp_slope.abs())
        .max(f64::MIN_POSITIVE);
    HighFrequencyBoundary {
        residual: 0.5 * (orbit.y_slope_pre + orbit.y_slope_post) - ramp_slope,
        deadbeat: (orbit.y_slope_post - ramp_slope).abs() <= 1e-9 * scale,
    }
}

/// Steady-state relation paired with the boundary curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyConstraint {
    /// Exact switching condition `y⁰(d) = h(d)` solved for `vs`.
    Exact,
    /// Proportional voltage mode average: `vs = vr/D − Vh/kp`.
    ProportionalLine { kp: f64 },
    /// Large-gain limit `vs = vr/D`.
    LargeGain,
}

impl SteadyConstraint {
    pub fn source_voltage(&self, m: &SwitchedLinearModel, vr: f64, duty: f64) -> Result<f64> {
        if duty <= 0.0 {
            return Err(Error::InvalidArgument("duty ratio must be positive".into()));
        }
        match *self {
            SteadyConstraint::Exact => critical_vs_at_duty(m, duty * m.period, vr),
            SteadyConstraint::ProportionalLine { kp } => Ok(vr / duty - m.vh / kp),
            SteadyConstraint::LargeGain => Ok(vr / duty),
        }
    }

    pub fn equation(&self) -> &'static str {
        match self {
            SteadyConstraint::Exact => "eq5",
            SteadyConstraint::ProportionalLine { .. } => "eq31",
            SteadyConstraint::LargeGain => "vr_over_D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Intersection {
    pub duty: f64,
    pub vs: f64,
}

/// Every intersection of the exact boundary `Vs*(D)` with a steady-state
/// constraint over `duty_range`.
pub fn boundary_intersection(
    m: &SwitchedLinearModel,
    vr: f64,
    duty_range: (f64, f64),
    constraint: SteadyConstraint,
) -> Result<Vec<Intersection>> {
    let (lo, hi) = duty_range;
    if !(0.0 < lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "duty range ({lo}, {hi}) must satisfy 0 < lo < hi <= 1"
        )));
    }
    let f = |duty: f64| -> Result<f64> {
        let star = critical_vs_exact(m, duty * m.period, vr)?.value;
        Ok(star - constraint.source_voltage(m, vr, duty)?)
    };
    let roots = all_roots(f, &linspace(lo, hi, 256), 1e-12)?;
    roots
        .into_iter()
        .map(|duty| {
            Ok(Intersection {
                duty,
                vs: constraint.source_voltage(m, vr, duty)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_boost_pvmc, build_model, input, CompensatorParams, PowerStageParams, Scheme,
    };
    use approx::assert_relative_eq;

    fn ex1(rc: f64) -> SwitchedLinearModel {
        let ps = PowerStageParams {
            l: 1e-6,
            c: 100e-6,
            r: 2.0,
            rc,
            vs: 10.0,
            vr: 4.0,
            vh: 1.0,
            fs: 1e6,
        };
        build_model(&ps, &CompensatorParams::proportional(Scheme::Pvmc, 80.0)).unwrap()
    }

    fn ex11() -> SwitchedLinearModel {
        let ps = PowerStageParams {
            l: 20e-3,
            c: 47e-6,
            r: 2.0,
            rc: 0.0,
            vs: 50.0,
            vr: 12.276,
            vh: 4.4,
            fs: 2500.0,
        };
        build_model(&ps, &CompensatorParams::proportional(Scheme::Pvmc, 8.4)).unwrap()
    }

    fn boost() -> SwitchedLinearModel {
        let ps = PowerStageParams {
            l: 50e-6,
            c: 100e-6,
            r: 10.0,
            rc: 0.0,
            vs: 12.0,
            vr: 24.0,
            vh: 2.0,
            fs: 100e3,
        };
        build_boost_pvmc(&ps, 0.5).unwrap()
    }

    #[test]
    fn reference_eigenvalues() {
        let m = ex11();
        let (orbit, rep) = stability(&m, &input(50.0, 12.276)).unwrap();
        assert!((orbit.duty - 0.243).abs() < 1e-3);
        let mut ev: Vec<f64> = rep.eigenvalues.iter().map(|l| l.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!(
            (ev[0] + 0.4222).abs() < 1e-3 && (ev[1] + 0.0336).abs() < 1e-3,
            "{ev:?}"
        );
        assert_eq!(rep.classification, Classification::Stable);
    }

    #[test]
    fn no_discontinuity_gives_plain_exponential() {
        let mut m = ex11();
        m.b2 = m.b1.clone();
        let orbit = orbit_at_duty(&m, &input(50.0, 12.276), 0.3 * m.period).unwrap();
        let phi = jacobian_phi(&m, &orbit).unwrap();
        let e = expm(&m.a1, m.period).unwrap();
        assert!((phi - &e).norm() <= 1e-12 * e.norm());
    }

    #[test]
    fn classification_cases() {
        let c = |m: Matrix| classify(&m).unwrap();
        assert_eq!(
            c(Matrix::identity(2, 2) * 0.5).classification,
            Classification::Stable
        );
        assert_eq!(
            c(Matrix::from_row_slice(2, 2, &[-1.001, 0.0, 0.0, 0.2])).classification,
            Classification::Subharmonic
        );
        let (r, th) = (1.05f64, 0.7f64);
        let rot = Matrix::from_row_slice(
            2,
            2,
            &[r * th.cos(), -r * th.sin(), r * th.sin(), r * th.cos()],
        );
        assert_eq!(c(rot).classification, Classification::NeimarkSacker);
        assert_eq!(
            c(Matrix::from_row_slice(1, 1, &[1.2])).classification,
            Classification::OtherUnstable
        );
        let rep = c(Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.3]));
        assert!(rep.deadbeat && rep.classification.is_stable());
    }

    #[test]
    fn grazing_orbit_is_rejected() {
        let m = ex11();
        let mut orbit = orbit_at_duty(&m, &input(50.0, 12.276), 0.3 * m.period).unwrap();
        orbit.y_slope_pre = m.ramp_slope();
        assert!(matches!(
            jacobian_phi(&m, &orbit),
            Err(Error::Grazing { .. })
        ));
    }

    #[test]
    fn residual_forms_agree_for_buck_and_boost() {
        let u = input(50.0, 12.276);
        for (m, u) in [
            (ex11(), u),
            (boost(), input(12.0, 24.0)),
            (ex1(2e-3), input(10.0, 4.0)),
        ] {
            for duty in [0.15, 0.4, 0.72] {
                let d = duty * m.period;
                let a = boundary_residual(&m, &u, d).unwrap();
                let b = boundary_residual_dual(&m, &u, d).unwrap();
                assert!(
                    (a - b).abs() <= 1e-9 * a.abs().max(m.ramp_slope()),
                    "{a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn closed_forms_match_slope_form() {
        for (m, u) in [(ex1(2e-3), input(10.0, 4.0)), (boost(), input(12.0, 24.0))] {
            for duty in [0.2, 0.5, 0.9] {
                let orbit = orbit_at_duty(&m, &u, duty * m.period).unwrap();
                let general = s_general(&m, &orbit).unwrap();
                let closed = s_value(&m, &u, duty).unwrap();
                assert_relative_eq!(general, closed, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn cmc_half_duty_boundary() {
        let ps = PowerStageParams {
            l: 10e-6,
            c: 100e-6,
            r: 1.0,
            rc: 0.0,
            vs: 12.0,
            vr: 5.0,
            vh: 1e-9,
            fs: 100e3,
        };
        let m = build_model(&ps, &CompensatorParams::new(Scheme::CmcOpen)).unwrap();
        let r = boundary_residual(&m, &input(12.0, 5.0), 0.5 * m.period).unwrap();
        // Only the O(T/RC) filter correction survives; compare with vs/L.
        assert!(r.abs() <= 1e-3 * 12.0 / 10e-6, "{r}");
    }

    #[test]
    fn s_at_full_duty_matches_expansion() {
        let m = ex1(2e-3);
        let b11 = m.b11();
        let (cb, cab) = (m.c.dot(&b11), m.c.dot(&(&m.a1 * &b11)));
        let approx = -(cb / 2.0 + cab * m.period / 4.0) * 10.0;
        let exact = s_value(&m, &input(10.0, 4.0), 1.0).unwrap();
        assert_relative_eq!(exact, approx, max_relative = 0.02);
    }

    #[test]
    fn approximation_symmetry_without_esr() {
        let m = ex1(0.0);
        for duty in [0.1, 0.3, 0.45] {
            let a = critical_vs_approx(&m, duty * m.period).unwrap().value;
            let b = critical_vs_approx(&m, (1.0 - duty) * m.period)
                .unwrap()
                .value;
            assert_relative_eq!(a, b, max_relative = 1e-12);
            let q = 1.0 - 2.0 * duty + 2.0 * duty * duty;
            assert_relative_eq!(
                a,
                4.0 * 1e-6 * 100e-6 / (80.0 * 1e-12 * q),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn cmc_approximation_reduces_to_slope_rule() {
        let ps = PowerStageParams {
            l: 10e-6,
            c: 100e-6,
            r: 1.0,
            rc: 0.0,
            vs: 12.0,
            vr: 5.0,
            vh: 0.3,
            fs: 100e3,
        };
        let m = build_model(&ps, &CompensatorParams::new(Scheme::CmcOpen)).unwrap();
        for duty in [0.6, 0.8] {
            let v = critical_vs_approx(&m, duty * m.period).unwrap();
            assert_relative_eq!(
                v.value,
                0.3 * 10e-6 / (1e-5 * (duty - 0.5)),
                max_relative = 1e-12
            );
            assert_eq!(v.stable_side, StableSide::Below);
        }
        assert_eq!(
            critical_vs_approx(&m, 0.3 * m.period).unwrap().stable_side,
            StableSide::Above
        );
    }

    #[test]
    fn minimum_sits_at_full_duty() {
        let m = ex1(0.0);
        let min = critical_vs_min(&m, 4.0).unwrap().value;
        let grid = linspace(0.005, 1.0, 200);
        let (arg, best) = grid
            .iter()
            .map(|&dd| (dd, critical_vs_exact(&m, dd * m.period, 4.0).unwrap().value))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(arg > 1.0 - 1.0 / 199.0 - 1e-12);
        assert_relative_eq!(best, min, max_relative = 1e-12);
    }

    #[test]
    fn second_order_and_high_frequency_forms() {
        // Preset 2's slopes on an open current loop with an ideal ramp.
        let (m1, m2) = (2.48e6, 3.63e6);
        let ma = (m2 - m1) / 2.0;
        let orbit = PeriodicOrbit {
            d: 0.5,
            duty: 0.5,
            x0_0: Vector::zeros(1),
            x0_d: Vector::zeros(1),
            slope_pre: Vector::zeros(1),
            slope_post: Vector::zeros(1),
            y_slope_pre: -m1,
            y_slope_post: m2,
        };
        assert_relative_eq!(ma, 5.75e5, max_relative = 1e-12);
        let hf = approx_boundary_highfs(&orbit, ma);
        assert!(hf.residual.abs() < 1e-6 && !hf.deadbeat);
        assert!(approx_boundary_highfs(&orbit, m2).deadbeat);

        let mut sym = orbit.clone();
        sym.y_slope_post = m1;
        assert_eq!(approx_boundary_highfs(&sym, 0.0).residual, 0.0);
    }

    #[test]
    fn second_order_form_with_zero_dynamics() {
        let mut m = ex1(0.0);
        m.a1 = Matrix::zeros(2, 2);
        m.a2 = Matrix::zeros(2, 2);
        let orbit = orbit_at_duty(&m, &input(10.0, 4.0), 0.3 * m.period);
        // I − e^{0} is singular, so build the orbit slopes by hand.
        assert!(orbit.is_err());
        let fake = PeriodicOrbit {
            d: 0.3e-6,
            duty: 0.3,
            x0_0: Vector::zeros(2),
            x0_d: Vector::zeros(2),
            slope_pre: Vector::from_vec(vec![6.0e6, 0.0]),
            slope_post: Vector::from_vec(vec![-4.0e6, 0.0]),
            y_slope_pre: 2.0,
            y_slope_post: -3.0,
        };
        assert_eq!(
            approx_boundary_2nd(&m, &fake),
            approx_boundary_highfs(&fake, m.ramp_slope()).residual
        );
    }

    #[test]
    fn second_order_form_tracks_exact_at_high_frequency() {
        let m = ex1(2e-3);
        let u = input(10.0, 4.0);
        for duty in [0.3, 0.6] {
            let orbit = orbit_at_duty(&m, &u, duty * m.period).unwrap();
            let exact = boundary_residual(&m, &u, orbit.d).unwrap();
            let approx = approx_boundary_2nd(&m, &orbit);
            assert!((exact - approx).abs() <= 0.1 * exact.abs().max(m.ramp_slope()));
        }
    }

    #[test]
    fn residual_zero_coincides_with_minus_one() {
        let m = ex1(0.0);
        let vr = 4.0;
        let duty = 0.41;
        let vs = critical_vs_exact(&m, duty * m.period, vr).unwrap().value;
        let orbit = orbit_at_duty(&m, &input(vs, vr), duty * m.period).unwrap();
        assert!(
            boundary_residual(&m, &input(vs, vr), orbit.d)
                .unwrap()
                .abs()
                <= 1e-9 * m.ramp_slope()
        );
        let rep = classify(&jacobian_phi(&m, &orbit).unwrap()).unwrap();
        let l = rep.nearest_to_minus_one().unwrap();
        assert!((l + 1.0).norm() < 1e-6, "{l}");
    }

    #[test]
    fn proportional_intersections() {
        let got = boundary_intersection(
            &ex1(0.0),
            4.0,
            (0.05, 0.999),
            SteadyConstraint::ProportionalLine { kp: 80.0 },
        )
        .unwrap();
        assert_eq!(got.len(), 1);
        assert!((got[0].duty - 0.41).abs() < 0.01 && (got[0].vs - 9.7).abs() < 0.02 * 9.7);
        let got = boundary_intersection(
            &ex1(2e-3),
            4.0,
            (0.05, 0.999),
            SteadyConstraint::ProportionalLine { kp: 80.0 },
        )
        .unwrap();
        assert_eq!(got.len(), 2, "{got:?}");
    }
}
