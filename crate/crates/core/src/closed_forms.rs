//! Per-scheme closed-form criteria: critical source voltages, gains, ramp
//! slopes and duty ratios, the V² ESR conditions, the ACMC ψ function, the
//! type III φ function and crossover-frequency ceilings.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CompensatorParams, PowerStageParams, Scheme};
use crate::sampled::StableSide;

/// Default harmonic count for φ(D).
pub const PHI_TERMS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub equation: &'static str,
    pub value: f64,
    pub unit: &'static str,
    pub stable_side: StableSide,
    /// Regime in which the approximation is meant to hold.
    pub validity: &'static str,
    /// Whether the inputs fall inside `validity`.
    pub in_regime: bool,
}

impl CriterionResult {
    fn new(
        equation: &'static str,
        value: f64,
        unit: &'static str,
        stable_side: StableSide,
    ) -> Self {
        CriterionResult {
            equation,
            value,
            unit,
            stable_side,
            validity: "",
            in_regime: true,
        }
    }

    /// `numerator / denominator`, stable on `side` when the denominator is
    /// positive and on the opposite side otherwise.
    fn ratio(
        equation: &'static str,
        unit: &'static str,
        numerator: f64,
        denominator: f64,
        side: StableSide,
    ) -> Result<Self> {
        if denominator == 0.0 || !denominator.is_finite() {
            return Err(Error::SingularDenominator {
                equation,
                denominator,
            });
        }
        let side = if denominator > 0.0 { side } else { flip(side) };
        Ok(Self::new(equation, numerator / denominator, unit, side))
    }

    fn regime(mut self, validity: &'static str, in_regime: bool) -> Self {
        self.validity = validity;
        self.in_regime = in_regime;
        self
    }

    pub fn is_stable(&self, operating: f64) -> bool {
        self.stable_side.is_stable(operating, self.value)
    }
}

fn flip(side: StableSide) -> StableSide {
    match side {
        StableSide::Below => StableSide::Above,
        StableSide::Above => StableSide::Below,
    }
}

fn check_duty(duty: f64) -> Result<()> {
    if !(duty > 0.0 && duty < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "duty ratio {duty} outside (0, 1)"
        )));
    }
    Ok(())
}

/// `1 − 2D + 2D²`.
fn q(duty: f64) -> f64 {
    1.0 - 2.0 * duty + 2.0 * duty * duty
}

/// Ramp slope `ma`: the configured slope if any, else `Vh/T`.
fn ramp_slope(ps: &PowerStageParams, cp: &CompensatorParams) -> f64 {
    cp.ramp_amplitude(ps) / ps.period()
}

/// `τ = 1/(RCωs)`.
pub fn tau(ps: &PowerStageParams) -> f64 {
    1.0 / (ps.r * ps.c * ps.omega_s())
}

// Proportional voltage mode and V² control.

pub fn pvmc_eq28(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (t, rho) = (ps.period(), ps.rho());
    let den =
        4.0 * ps.rc * ps.c / t * (duty - 0.5) + rho * (1.0 - ps.rc * ps.rc * ps.c / ps.l) * q(duty);
    let pre = 4.0 * ps.vh * ps.l * ps.c / (rho * kp * t * t);
    CriterionResult::ratio("eq28", "V", pre, den, StableSide::Below)
}

pub fn pvmc_eq29(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (t, rho) = (ps.period(), ps.rho());
    let den = 4.0 * ps.rc * ps.c / t * (duty - 0.5) + q(duty);
    CriterionResult::ratio(
        "eq29",
        "V",
        4.0 * ps.vh * ps.l * ps.c / (rho * kp * t * t),
        den,
        StableSide::Below,
    )
}

pub fn pvmc_eq30(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let t = ps.period();
    Ok(CriterionResult::ratio(
        "eq30",
        "V",
        4.0 * ps.vh * ps.l * ps.c / (kp * t * t),
        q(duty),
        StableSide::Below,
    )?
    .regime("Rc = 0", ps.rc == 0.0))
}

/// Harmonic-balance twin of the ESR form, `(4VhLC/(kpT²ρ)) / (4RcC/T (D − 1/2) + 1 − 2D + 2D²)`.
pub fn pvmc_eq63(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<CriterionResult> {
    let mut r = pvmc_eq29(ps, kp, duty)?;
    r.equation = "eq63";
    Ok(r.regime("ωs ≫ 1/√(LC), 1/(RC)", tau(ps) < 0.1))
}

/// Two-harmonic, load-dependent form `Vh L C ωs² / (2 kp Σ)` with
/// `Σ = Σ_{k=1,2} [1/((k − 1/2)² + τ²) + (cos 2πkD − 1 − (τ/k) sin 2πkD)/(k² + τ²)]`.
pub fn pvmc_eq65(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let ta = tau(ps);
    let sum: f64 = [1.0f64, 2.0]
        .iter()
        .map(|&k| {
            let th = 2.0 * PI * k * duty;
            1.0 / ((k - 0.5).powi(2) + ta * ta)
                + (th.cos() - 1.0 - ta / k * th.sin()) / (k * k + ta * ta)
        })
        .sum();
    let w = ps.omega_s();
    Ok(CriterionResult::ratio(
        "eq65",
        "V",
        ps.vh * ps.l * ps.c * w * w,
        2.0 * kp * sum,
        StableSide::Below,
    )?
    .regime("Rc ≪ R", ps.rc < 0.01 * ps.r))
}

/// V² control bound, the proportional form with `ρ ≈ 1`.
pub fn v2_eq32(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let t = ps.period();
    let den = 4.0 * ps.rc * ps.c / t * (duty - 0.5) + q(duty);
    Ok(CriterionResult::ratio(
        "eq32",
        "V",
        4.0 * ps.vh * ps.l * ps.c / (kp * t * t),
        den,
        StableSide::Below,
    )?
    .regime("Rc ≪ R", ps.rc < 0.01 * ps.r))
}

/// Minimum ramp amplitude:
/// `Vh* = (kp vo Rc T / L) [(2D − 1)/(2D) + T/(RcC) ((1 − 2D)/(4D) + D/2)]`, `vo = D vs`.
pub fn v2_eq33(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    if ps.rc <= 0.0 {
        return Err(Error::NonPositive {
            name: "Rc",
            value: ps.rc,
        });
    }
    let t = ps.period();
    let vo = duty * ps.vs;
    let rhs = (2.0 * duty - 1.0) / (2.0 * duty)
        + t / (ps.rc * ps.c) * ((1.0 - 2.0 * duty) / (4.0 * duty) + duty / 2.0);
    Ok(CriterionResult::new(
        "eq33",
        kp * vo * ps.rc * t / ps.l * rhs,
        "V",
        StableSide::Above,
    ))
}

/// Ramp-free ceiling on `T/(RcC)`: `1 / (1/2 + D²/(1 − 2D))`.
pub fn v2_eq34(duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let value = 1.0 / (0.5 + duty * duty / (1.0 - 2.0 * duty));
    Ok(CriterionResult::new("eq34", value, "1", StableSide::Below).regime("D < 1/2", duty < 0.5))
}

/// Ramp-free floor on `RcC/T`: `1/2 + D²/(1 − 2D)` for `D < 1/2`; no ESR suffices otherwise.
pub fn v2_eq35(duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let value = if duty < 0.5 {
        0.5 + duty * duty / (1.0 - 2.0 * duty)
    } else {
        f64::INFINITY
    };
    Ok(CriterionResult::new("eq35", value, "1", StableSide::Above).regime("D < 1/2", duty < 0.5))
}

/// Duty ratio at which the ramp-free condition is marginal for a given `RcC/T`.
pub fn v2_ramp_free_duty(ps: &PowerStageParams) -> Result<CriterionResult> {
    let a = ps.rc * ps.c / ps.period() - 0.5;
    if a <= 0.0 {
        return Err(Error::InvalidArgument(
            "RcC/T must exceed 1/2 for a ramp-free stable range".into(),
        ));
    }
    Ok(CriterionResult::new(
        "eq35",
        -a + (a * a + a).sqrt(),
        "1",
        StableSide::Below,
    ))
}

// Peak current mode, voltage loop open.

pub fn cmc_eq36(ps: &PowerStageParams, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    Ok(CriterionResult::new(
        "eq36",
        ps.vs / ps.l * (duty - 0.5),
        "V/s",
        StableSide::Above,
    )
    .regime("Rc = 0", ps.rc == 0.0))
}

pub fn cmc_eq37(ps: &PowerStageParams, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let corr = ps.rho() * ps.rc * ps.period() / ps.l * q(duty) / 4.0;
    Ok(CriterionResult::new(
        "eq37",
        ps.vs / ps.l * (duty - 0.5 - corr),
        "V/s",
        StableSide::Above,
    ))
}

/// Critical duty without a ramp, exact quadratic root of the ESR slope rule.
pub fn cmc_eq38(ps: &PowerStageParams) -> Result<CriterionResult> {
    let e = ps.rho() * ps.rc * ps.period();
    if e == 0.0 {
        return Ok(CriterionResult::new("eq38", 0.5, "1", StableSide::Below));
    }
    if e >= 2.0 * ps.l {
        return Err(Error::InvalidArgument(format!(
            "ρRcT = {e:e} must stay below 2L = {:e}",
            2.0 * ps.l
        )));
    }
    let r = ps.l / e;
    let value = 0.5 + r - r * (1.0 - 1.0 / (4.0 * r * r)).sqrt();
    Ok(CriterionResult::new("eq38", value, "1", StableSide::Below)
        .regime("RcT ≪ L", e < 0.1 * ps.l))
}

/// First-order critical duty `1/2 + ρRcT/(8L)`.
pub fn cmc_eq38_first_order(ps: &PowerStageParams) -> CriterionResult {
    let value = 0.5 + ps.rho() * ps.rc * ps.period() / (8.0 * ps.l);
    CriterionResult::new("eq38", value, "1", StableSide::Below)
        .regime("RcT ≪ L", ps.rc * ps.period() < 0.1 * ps.l)
}

pub fn cmc_eq39(ps: &PowerStageParams, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    Ok(CriterionResult::ratio(
        "eq39",
        "V",
        ps.vh * ps.l / ps.period(),
        duty - 0.5,
        StableSide::Below,
    )?
    .regime("Rc = 0", ps.rc == 0.0))
}

pub fn cmc_eq40(ps: &PowerStageParams, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let corr = ps.rho() * ps.rc * ps.period() / ps.l * q(duty) / 4.0;
    CriterionResult::ratio(
        "eq40",
        "V",
        ps.vh * ps.l / ps.period(),
        duty - 0.5 - corr,
        StableSide::Below,
    )
}

/// Design ramp `ma = m2/2 = vs D/(2L)`.
pub fn cmc_design_ramp(ps: &PowerStageParams, duty: f64) -> f64 {
    ps.vs * duty / (2.0 * ps.l)
}

// Peak current mode, proportional voltage loop.

pub fn cmc_closed_eq41(ps: &PowerStageParams, duty: f64, ma: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (t, rho, rc) = (ps.period(), ps.rho(), ps.rc);
    let qq = q(duty) / 4.0;
    let num = ma * ps.l / ps.vs + rho * rc * t / ps.l * qq - duty + 0.5;
    let den = rho * rho * t / ps.c * (1.0 - rc * rc * ps.c / ps.l) * qq + (duty - 0.5) * rho * rc;
    CriterionResult::ratio("eq41", "1", num, den, StableSide::Below)
}

pub fn cmc_closed_eq42(ps: &PowerStageParams, duty: f64, ma: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let num = ma * ps.l / ps.vs - duty + 0.5;
    Ok(CriterionResult::ratio(
        "eq42",
        "1",
        num,
        ps.period() / ps.c * q(duty) / 4.0,
        StableSide::Below,
    )?
    .regime("Rc = 0", ps.rc == 0.0))
}

/// Harmonic-balance critical gain; the first denominator term uses `T/C`.
pub fn cmc_closed_eq69(ps: &PowerStageParams, duty: f64, ma: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (t, rc) = (ps.period(), ps.rc);
    let g = 1.0 / (ps.r * ps.c) + rc / ps.l;
    let num = ma * ps.l / ps.vs + t / 4.0 * g - duty + 0.5;
    let den = t / ps.c * q(duty) / 4.0 - t * rc / 4.0 * g + (duty - 0.5) * rc;
    CriterionResult::ratio("eq69", "1", num, den, StableSide::Below)
}

/// `20 log10(kp*/kp)`.
pub fn gain_margin_db(kp_star: f64, kp: f64) -> f64 {
    20.0 * (kp_star / kp).log10()
}

// Average current mode.

fn acmc_regime(ps: &PowerStageParams, wp: f64) -> bool {
    wp < ps.omega_s() / 10.0
}

/// Type II, small ωp: `4Vh ωz L / (T² Kc Rs ωp (1 − 2D + 2D²))`.
pub fn acmc_eq46(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (kc, wz, wp, rs) = (cp.get("Kc")?, cp.get("wz")?, cp.get("wp")?, cp.get("Rs")?);
    let t = ps.period();
    let num = 4.0 * ps.vh * wz * ps.l / (t * t * kc * rs * wp);
    Ok(
        CriterionResult::ratio("eq46", "V", num, q(duty), StableSide::Below)?
            .regime("ωp < ωs/10", acmc_regime(ps, wp)),
    )
}

fn acmc_pi_boundary(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
    with_esr: bool,
) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (kc, wz, rs) = (cp.get("Kc")?, cp.get("wz")?, cp.get("Rs")?);
    let esr = if with_esr {
        ps.rho() * ps.rc / ps.l
    } else {
        0.0
    };
    let lhs = duty - 0.5 + q(duty) / 4.0 * ps.period() * (wz - esr);
    let hdot = ramp_slope(ps, cp);
    let eq = if with_esr { "eq49" } else { "eq50" };
    CriterionResult::ratio(
        eq,
        "V",
        hdot * ps.l * wz / (rs * kc),
        lhs,
        StableSide::Below,
    )
}

/// PI compensator boundary solved for `vs`, ESR kept.
pub fn acmc_pi_eq49(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    acmc_pi_boundary(ps, cp, duty, true)
}

/// PI compensator boundary solved for `vs`, ESR dropped.
pub fn acmc_pi_eq50(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    acmc_pi_boundary(ps, cp, duty, false)
}

/// Required ramp slope `vs Rs Kc (D − 1/2) / (L ωz)`.
pub fn acmc_pi_eq51(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (kc, wz, rs) = (cp.get("Kc")?, cp.get("wz")?, cp.get("Rs")?);
    let small = ps.period() * (wz - ps.rho() * ps.rc / ps.l).abs() < 0.1;
    let value = ps.vs * rs * kc / (ps.l * wz) * (duty - 0.5);
    Ok(
        CriterionResult::new("eq51", value, "V/s", StableSide::Above)
            .regime("T(ωz − ρRc/L) ≪ 1", small),
    )
}

/// `ψ(θ) = π(1 + θ²)(1 + 4θ²)/(3θ)`.
pub fn psi(theta: f64) -> f64 {
    PI * (1.0 + theta * theta) * (1.0 + 4.0 * theta * theta) / (3.0 * theta)
}

/// Minimizer and minimum of ψ, from `12θ⁴ + 5θ² − 1 = 0`.
pub fn psi_min() -> (f64, f64) {
    let theta = ((73.0f64.sqrt() - 5.0) / 24.0).sqrt();
    (theta, psi(theta))
}

fn acmc_scale(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<f64> {
    let (kc, wz, rs) = (cp.get("Kc")?, cp.get("wz")?, cp.get("Rs")?);
    Ok(ps.vh * ps.l * wz * ps.fs / (rs * kc))
}

/// Type II one-harmonic estimate `(Vh L ωz fs/(Rs Kc)) ψ(ωp/ωs)`.
pub fn acmc_eq71(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let theta = cp.get("wp")? / ps.omega_s();
    Ok(CriterionResult::new(
        "eq71",
        acmc_scale(ps, cp)? * psi(theta),
        "V",
        StableSide::Below,
    )
    .regime("ωs ≫ 1/√(LC), 1/(RC)", tau(ps) < 0.1))
}

/// All-ωp floor, ψ at its minimizer.
pub fn acmc_eq73(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    Ok(CriterionResult::new(
        "eq73",
        acmc_scale(ps, cp)? * psi_min().1,
        "V",
        StableSide::Below,
    ))
}

/// Conservative guideline `min(2/(1 − D), 1/D) Vh L ωz fs/(Rs Kc)`.
pub fn acmc_eq74(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    check_duty(duty)?;
    let factor = (2.0 / (1.0 - duty)).min(1.0 / duty);
    Ok(CriterionResult::new(
        "eq74",
        acmc_scale(ps, cp)? * factor,
        "V",
        StableSide::Below,
    ))
}

/// Type II crossover `−ωp/2 + √(ωp²/4 + ωp vs Kc Rs/(ωz Vh L))`.
pub fn acmc_eq95(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let (kc, wz, wp, rs) = (cp.get("Kc")?, cp.get("wz")?, cp.get("wp")?, cp.get("Rs")?);
    let value = -wp / 2.0 + (wp * wp / 4.0 + wp * ps.vs * kc * rs / (wz * ps.vh * ps.l)).sqrt();
    Ok(CriterionResult::new(
        "eq95",
        value,
        "rad/s",
        StableSide::Below,
    ))
}

pub fn acmc_eq96(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let (kc, wz, wp, rs) = (cp.get("Kc")?, cp.get("wz")?, cp.get("wp")?, cp.get("Rs")?);
    let t = ps.period();
    let value = 4.0 * ps.vh * wz * ps.l / (t * t * kc * rs * wp);
    Ok(CriterionResult::new("eq96", value, "V", StableSide::Below)
        .regime("ωp < ωs/10", acmc_regime(ps, wp)))
}

/// All-duty crossover ceiling `−ω/2 + √(ω²/4 + ωs²/π²)` for the slower compensator pole `ω`.
fn ceiling(pole: f64, omega_s: f64) -> f64 {
    -pole / 2.0 + (pole * pole / 4.0 + omega_s * omega_s / (PI * PI)).sqrt()
}

pub fn acmc_eq97(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let wp = cp.get("wp")?;
    Ok(CriterionResult::new(
        "eq97",
        ceiling(wp, ps.omega_s()),
        "rad/s",
        StableSide::Below,
    )
    .regime("ωp < ωs/10", acmc_regime(ps, wp)))
}

// Voltage mode with a type III compensator.

/// `φ(D) = 1 / Re Σ_k [(1 − e^{j2kπD})/(k(j − 2k)) − 1/((k − 1/2)(j − 2k + 1))]`.
pub fn phi(duty: f64, terms: usize) -> f64 {
    let j = Complex64::new(0.0, 1.0);
    let sum: f64 = (1..=terms)
        .map(|k| {
            let kf = k as f64;
            let rot = Complex64::from_polar(1.0, 2.0 * PI * kf * duty);
            ((1.0 - rot) / (kf * (j - 2.0 * kf)) - 1.0 / ((kf - 0.5) * (j - 2.0 * kf + 1.0))).re
        })
        .sum();
    1.0 / sum
}

/// One-harmonic form `5 / (3 + 2 cos 2πD − sin 2πD)`.
pub fn phi_one_term(duty: f64) -> f64 {
    let th = 2.0 * PI * duty;
    5.0 / (3.0 + 2.0 * th.cos() - th.sin())
}

fn type3_regime(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<bool> {
    Ok(cp.get("p1")? < ps.omega_s() / 10.0)
}

/// Small-p1 form `4 Vh κz / (T² ρ p2 Kc (1 − 2D + 2D²))`.
pub fn type3_eq54(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (kc, p2, kz) = (cp.get("Kc")?, cp.get("p2")?, cp.kappa_z(ps)?);
    let t = ps.period();
    let num = 4.0 * ps.vh * kz / (t * t * ps.rho() * p2 * kc);
    Ok(
        CriterionResult::ratio("eq54", "V", num, q(duty), StableSide::Below)?
            .regime("p1 < ωs/10", type3_regime(ps, cp)?),
    )
}

/// `Vh ωs κz φ(D) / (2 Kc)` for the guideline compensator.
pub fn type3_eq76(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    check_duty(duty)?;
    let (kc, kz) = (cp.get("Kc")?, cp.kappa_z(ps)?);
    let value = ps.vh * ps.omega_s() * kz / (2.0 * kc) * phi(duty, PHI_TERMS);
    Ok(CriterionResult::new("eq76", value, "V", StableSide::Below)
        .regime("p1 = ωs/2, p2 = 1/(RcC)", true))
}

/// Estimated crossover `Kc vs/(κz Vh)`.
pub fn type3_crossover_estimate(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<f64> {
    Ok(cp.get("Kc")? * ps.vs / (cp.kappa_z(ps)? * ps.vh))
}

/// Crossover of `Kc vs/(κz Vh s (1 + 2s/ωs))`, solved exactly.
pub fn type3_eq88(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let k = type3_crossover_estimate(ps, cp)?;
    let ws = ps.omega_s();
    let w2 = ws * ws * (-1.0 + (1.0 + 16.0 * k * k / (ws * ws)).sqrt()) / 8.0;
    Ok(CriterionResult::new(
        "eq88",
        w2.sqrt(),
        "rad/s",
        StableSide::Below,
    ))
}

/// Crossover ceiling `ωs φ(D)/2`.
pub fn type3_eq89(ps: &PowerStageParams, duty: f64) -> Result<CriterionResult> {
    check_duty(duty)?;
    Ok(CriterionResult::new(
        "eq89",
        ps.omega_s() * phi(duty, PHI_TERMS) / 2.0,
        "rad/s",
        StableSide::Below,
    ))
}

/// All-duty crossover ceiling `ωs min φ / 2`.
pub fn type3_all_duty_ceiling(ps: &PowerStageParams) -> CriterionResult {
    CriterionResult::new(
        "eq89",
        ps.omega_s() * phi_extrema().min / 2.0,
        "rad/s",
        StableSide::Below,
    )
}

/// Crossover for small p1: `−p2/2 + √(p2²/4 + p2 vs Kc/(κz Vh))`.
pub fn type3_eq91(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let (kc, p2, kz) = (cp.get("Kc")?, cp.get("p2")?, cp.kappa_z(ps)?);
    let value = -p2 / 2.0 + (p2 * p2 / 4.0 + p2 * ps.vs * kc / (kz * ps.vh)).sqrt();
    Ok(
        CriterionResult::new("eq91", value, "rad/s", StableSide::Below)
            .regime("p1 < ωs/10", type3_regime(ps, cp)?),
    )
}

/// All-duty floor `4 Vh κz / (T² ρ p2 Kc)`.
pub fn type3_eq92(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let (kc, p2, kz) = (cp.get("Kc")?, cp.get("p2")?, cp.kappa_z(ps)?);
    let t = ps.period();
    let value = 4.0 * ps.vh * kz / (t * t * ps.rho() * p2 * kc);
    Ok(CriterionResult::new("eq92", value, "V", StableSide::Below)
        .regime("p1 < ωs/10", type3_regime(ps, cp)?))
}

pub fn type3_eq93(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<CriterionResult> {
    let p2 = cp.get("p2")?;
    Ok(CriterionResult::new(
        "eq93",
        ceiling(p2, ps.omega_s()),
        "rad/s",
        StableSide::Below,
    )
    .regime("p1 < ωs/10", type3_regime(ps, cp)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiExtrema {
    pub min: f64,
    pub argmin: f64,
    pub max: f64,
    pub argmax: f64,
}

/// Extrema of φ over a 1000-point grid in (0, 1).
pub fn phi_extrema() -> PhiExtrema {
    let mut ext = PhiExtrema {
        min: f64::INFINITY,
        argmin: 0.0,
        max: f64::NEG_INFINITY,
        argmax: 0.0,
    };
    for i in 1..1000 {
        let d = i as f64 / 1000.0;
        let v = phi(d, PHI_TERMS);
        if v < ext.min {
            ext.min = v;
            ext.argmin = d;
        }
        if v > ext.max {
            ext.max = v;
            ext.argmax = d;
        }
    }
    ext
}

/// Every closed form this module can evaluate for `scheme`, by equation tag.
pub fn available(scheme: Scheme) -> &'static [&'static str] {
    match scheme {
        Scheme::Pvmc => &["eq28", "eq29", "eq30", "eq63", "eq65"],
        Scheme::CfPvr => &["eq32", "eq33", "eq34", "eq35"],
        Scheme::CmcOpen => &["eq36", "eq37", "eq38", "eq39", "eq40"],
        Scheme::CmcClosed => &["eq41", "eq42", "eq69"],
        Scheme::EnhV2 => &[],
        Scheme::AcmcType2 => &["eq46", "eq71", "eq73", "eq74", "eq95", "eq96", "eq97"],
        Scheme::AcmcPi => &["eq49", "eq50", "eq51"],
        Scheme::VmcType3 => &["eq54", "eq76", "eq88", "eq89", "eq91", "eq92", "eq93"],
    }
}

/// Evaluates the closed form tagged `id` at duty ratio `duty`.
pub fn evaluate(
    id: &str,
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    duty: f64,
) -> Result<CriterionResult> {
    let kp = || cp.get("kp");
    let ma = ramp_slope(ps, cp);
    match id {
        "eq28" => pvmc_eq28(ps, kp()?, duty),
        "eq29" => pvmc_eq29(ps, kp()?, duty),
        "eq30" => pvmc_eq30(ps, kp()?, duty),
        "eq63" => pvmc_eq63(ps, kp()?, duty),
        "eq65" => pvmc_eq65(ps, kp()?, duty),
        "eq32" => v2_eq32(ps, kp()?, duty),
        "eq33" => v2_eq33(ps, kp()?, duty),
        "eq34" => v2_eq34(duty),
        "eq35" => v2_eq35(duty),
        "eq36" => cmc_eq36(ps, duty),
        "eq37" => cmc_eq37(ps, duty),
        "eq38" => cmc_eq38(ps),
        "eq39" => cmc_eq39(ps, duty),
        "eq40" => cmc_eq40(ps, duty),
        "eq41" => cmc_closed_eq41(ps, duty, ma),
        "eq42" => cmc_closed_eq42(ps, duty, ma),
        "eq69" => cmc_closed_eq69(ps, duty, ma),
        "eq46" => acmc_eq46(ps, cp, duty),
        "eq49" => acmc_pi_eq49(ps, cp, duty),
        "eq50" => acmc_pi_eq50(ps, cp, duty),
        "eq51" => acmc_pi_eq51(ps, cp, duty),
        "eq71" => acmc_eq71(ps, cp),
        "eq73" => acmc_eq73(ps, cp),
        "eq74" => acmc_eq74(ps, cp, duty),
        "eq95" => acmc_eq95(ps, cp),
        "eq96" => acmc_eq96(ps, cp),
        "eq97" => acmc_eq97(ps, cp),
        "eq54" => type3_eq54(ps, cp, duty),
        "eq76" => type3_eq76(ps, cp, duty),
        "eq88" => type3_eq88(ps, cp),
        "eq89" => type3_eq89(ps, duty),
        "eq91" => type3_eq91(ps, cp),
        "eq92" => type3_eq92(ps, cp),
        "eq93" => type3_eq93(ps, cp),
        _ => Err(Error::InvalidArgument(format!(
            "unknown closed form '{id}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hb::{HarmonicTable, HbSettings, TransferFunction};
    use approx::assert_relative_eq;

    fn ex1(rc: f64) -> PowerStageParams {
        PowerStageParams {
            l: 1e-6,
            c: 100e-6,
            r: 2.0,
            rc,
            vs: 10.0,
            vr: 4.0,
            vh: 1.0,
            fs: 1e6,
        }
    }

    fn ex2(rc: f64) -> PowerStageParams {
        PowerStageParams {
            l: 900e-9,
            c: 990e-6,
            r: 0.4,
            rc,
            vs: 5.5,
            vr: 3.34,
            vh: 1.0,
            fs: 300e3,
        }
    }

    #[test]
    fn pvmc_half_duty() {
        let ps = ex1(0.0);
        let t = ps.period();
        let v = pvmc_eq30(&ps, 80.0, 0.5).unwrap().value;
        assert_relative_eq!(v, 8.0 * ps.l * ps.c / (80.0 * t * t), max_relative = 1e-14);
        assert_relative_eq!(
            v,
            pvmc_eq28(&ps, 80.0, 0.5).unwrap().value,
            max_relative = 1e-14
        );
        for d in [0.1, 0.37] {
            assert_relative_eq!(
                pvmc_eq30(&ps, 80.0, d).unwrap().value,
                pvmc_eq30(&ps, 80.0, 1.0 - d).unwrap().value
            );
        }
    }

    #[test]
    fn v2_ramp_free_quarter_duty() {
        let ps = PowerStageParams {
            rc: 5.0 / 8.0 * 1e-6 / 100e-6,
            ..ex1(0.0)
        };
        assert_relative_eq!(
            v2_ramp_free_duty(&ps).unwrap().value,
            0.25,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            v2_eq35(0.25).unwrap().value,
            5.0 / 8.0,
            max_relative = 1e-14
        );
        assert!(v2_eq35(0.5 + 1e-9).unwrap().value.is_infinite());
        assert!(v2_eq35(0.5 - 1e-9).unwrap().value > 1e7);
        assert_relative_eq!(
            v2_eq34(0.2).unwrap().value,
            1.0 / v2_eq35(0.2).unwrap().value
        );
    }

    #[test]
    fn v2_zero_ramp_reduces_to_esr_condition() {
        // Setting Vh* = 0 in the ramp-amplitude form gives the ramp-free boundary.
        for d in [0.1, 0.3, 0.45] {
            let rc_over_t = v2_eq35(d).unwrap().value;
            let ps = PowerStageParams {
                rc: rc_over_t * 1e-6 / 100e-6,
                ..ex1(0.0)
            };
            let vh = v2_eq33(&ps, 1.0, d).unwrap().value;
            assert!(vh.abs() < 1e-12, "{vh}");
        }
    }

    #[test]
    fn cmc_open_limits() {
        let ps = ex1(0.0);
        assert_eq!(cmc_eq38(&ps).unwrap().value, 0.5);
        assert_eq!(cmc_eq36(&ps, 0.5).unwrap().value, 0.0);
        let ps = PowerStageParams {
            rc: 0.01,
            ..ex2(0.0)
        };
        let exact = cmc_eq38(&ps).unwrap().value;
        let first = cmc_eq38_first_order(&ps).value;
        let eps = ps.rho() * ps.rc * ps.period() / ps.l;
        assert!((exact - first).abs() < eps * eps, "{exact} vs {first}");
        // The exact root zeroes the ramp-free slope rule.
        assert!(cmc_eq37(&ps, exact).unwrap().value.abs() < 1e-9 * ps.vs / ps.l);

        let ps = ex2(0.0);
        for d in [0.2, 0.4] {
            let a = cmc_eq39(&ps, 0.5 + d).unwrap();
            let b = cmc_eq39(&ps, 0.5 - d).unwrap();
            assert_relative_eq!(a.value, -b.value, max_relative = 1e-12);
            assert_eq!(
                (a.stable_side, b.stable_side),
                (StableSide::Below, StableSide::Above)
            );
        }
        let ps = PowerStageParams {
            vs: 5.5,
            ..ex2(0.0)
        };
        assert_relative_eq!(cmc_design_ramp(&ps, 0.6), 1.8333e6, max_relative = 1e-4);
    }

    #[test]
    fn critical_gain_forms() {
        let ps = ex2(0.0);
        for d in [0.3, 0.6] {
            let ma = cmc_design_ramp(&ps, d);
            assert_relative_eq!(
                cmc_closed_eq41(&ps, d, ma).unwrap().value,
                cmc_closed_eq42(&ps, d, ma).unwrap().value,
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(gain_margin_db(237.0, 23.7), 20.0, max_relative = 1e-12);
    }

    #[test]
    fn psi_minimum() {
        let (theta, v) = psi_min();
        assert!((theta - 0.38).abs() < 0.01 && (v - 5.0).abs() < 0.05);
        assert!((psi(0.38) - 5.0).abs() < 0.05);
        let h = 1e-5;
        let d2 = (psi(theta + h) - 2.0 * v + psi(theta - h)) / (h * h);
        assert!(d2 > 0.0 && (psi(theta + h) - psi(theta - h)).abs() < 1e-8);
    }

    #[test]
    fn acmc_guideline_is_conservative() {
        let ps = PowerStageParams {
            l: 46.1e-6,
            c: 380e-6,
            r: 1.0,
            rc: 0.02,
            vs: 14.0,
            vr: 0.5,
            vh: 1.0,
            fs: 50e3,
        };
        let cp = CompensatorParams::acmc_type2(75506.0, 5652.9, 0.1 * ps.omega_s(), 0.1);
        let floor = acmc_eq73(&ps, &cp).unwrap().value;
        for i in 1..100 {
            assert!(acmc_eq74(&ps, &cp, i as f64 / 100.0).unwrap().value <= floor);
        }
        let pi = CompensatorParams::acmc_pi(75506.0, 5652.9, 0.1);
        assert!(acmc_pi_eq51(&ps, &pi, 0.5).unwrap().value.abs() < 1e-9);
    }

    #[test]
    fn phi_matches_accelerated_series() {
        let g = TransferFunction::rational("φ kernel", vec![1.0], vec![0.0, 1.0, 2.0]).unwrap();
        let table = HarmonicTable::new(
            &g,
            1.0,
            HbSettings {
                k: 200,
                tail_tolerance: 1e-6,
            },
        )
        .unwrap();
        for d in [0.1, 0.25, 0.4, 0.77] {
            let exact = 1.0 / table.sum(d).unwrap().re;
            assert!((phi(d, PHI_TERMS) - exact).abs() < 1e-5 * exact);
        }
    }

    #[test]
    fn phi_range() {
        let ext = phi_extrema();
        assert!((ext.min - 0.694).abs() < 0.005, "{ext:?}");
        assert!(
            (ext.max - 2.89).abs() < 0.01 && (ext.argmax - 0.4).abs() <= 0.05,
            "{ext:?}"
        );
        for d in [0.1, 0.5, 0.9] {
            let one = phi_one_term(d);
            let g = TransferFunction::rational("", vec![1.0], vec![0.0, 1.0, 2.0]).unwrap();
            let table = HarmonicTable::new(&g, 1.0, HbSettings::default()).unwrap();
            assert_relative_eq!(one, 1.0 / table.one_term(d).re, max_relative = 1e-12);
        }
    }

    #[test]
    fn crossover_ceilings() {
        let ps = ex1(0.0);
        let ws = ps.omega_s();
        assert!((ceiling(ws / 10.0, ws) / ws - 0.27).abs() < 0.005);
        assert_relative_eq!(ceiling(1e-9 * ws, ws) / ws, 1.0 / PI, max_relative = 1e-6);
        assert_relative_eq!(
            type3_all_duty_ceiling(&ps).value / ws,
            0.347,
            max_relative = 0.01
        );
    }

    #[test]
    fn registry_covers_every_tag() {
        let ps = ex2(5e-3);
        for scheme in Scheme::ALL {
            for id in available(scheme) {
                let cp = match scheme {
                    Scheme::Pvmc | Scheme::CfPvr | Scheme::CmcClosed => {
                        CompensatorParams::proportional(scheme, 50.0)
                    }
                    Scheme::AcmcType2 => CompensatorParams::acmc_type2(7e4, 5e3, 1e5, 0.1),
                    Scheme::AcmcPi => CompensatorParams::acmc_pi(7e4, 5e3, 0.1),
                    Scheme::VmcType3 => CompensatorParams::type3_guideline(&ps, 7.78e4, 0.5),
                    _ => CompensatorParams::new(scheme),
                };
                let r = evaluate(id, &ps, &cp, 0.3).unwrap();
                assert_eq!(&r.equation, id);
            }
        }
        assert!(evaluate("eq999", &ps, &CompensatorParams::new(Scheme::CmcOpen), 0.3).is_err());
    }
}
