//! The eleven worked examples as reproducible presets, each with reference
//! values and the tolerance the reproduction is held to.

use std::f64::consts::PI;

use serde::Serialize;

use crate::closed_forms::{acmc_eq46, cmc_closed_eq41, cmc_closed_eq69, pvmc_eq65};
use crate::error::{Error, Result};
use crate::hb::{hb_plot, loop_g_from_model, loop_gain, m_plot, theorem1_check, HbSettings};
use crate::model::{
    build_model, input, CompensatorParams, PowerStageParams, Scheme, SwitchedLinearModel,
};
use crate::numerics::{eig, Vector};
use crate::roots::{all_roots, linspace};
use crate::sampled::{
    boundary_intersection, classify, critical_vs_exact, jacobian_phi, s_value, SteadyConstraint,
};
use crate::sim::{
    bisect_critical, detect_period, simulate, ClassifyBy, Period, SimOptions, PERIOD_TOL,
};
use crate::steady::solve_duty;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    Abs(f64),
    Rel(f64),
}

impl Tolerance {
    pub fn admits(self, expected: f64, computed: f64) -> bool {
        let err = (computed - expected).abs();
        match self {
            Tolerance::Abs(t) => err <= t,
            Tolerance::Rel(t) => err <= t * expected.abs(),
        }
    }
}

impl std::fmt::Display for Tolerance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tolerance::Abs(t) => write!(f, "±{t}"),
            Tolerance::Rel(t) => write!(f, "±{}%", t * 100.0),
        }
    }
}

/// One expected-versus-computed comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub expected: f64,
    /// NaN when the computation failed; see `error`.
    pub computed: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
    pub error: Option<String>,
}

impl Check {
    pub fn new(
        label: impl Into<String>,
        expected: f64,
        computed: Result<f64>,
        tolerance: Tolerance,
    ) -> Self {
        let (computed, error) = match computed {
            Ok(v) => (v, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        Check {
            label: label.into(),
            expected,
            computed,
            tolerance,
            pass: tolerance.admits(expected, computed),
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub number: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    /// Computed values that have no reference to compare against.
    pub notes: Vec<String>,
}

impl ExampleReport {
    fn new(number: u8, title: &'static str) -> Self {
        ExampleReport {
            number,
            title,
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn check(
        &mut self,
        label: impl Into<String>,
        expected: f64,
        computed: Result<f64>,
        tol: Tolerance,
    ) {
        self.checks.push(Check::new(label, expected, computed, tol));
    }
}

/// Base configuration of an example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub power_stage: PowerStageParams,
    pub compensator: CompensatorParams,
}

impl Preset {
    pub fn model(&self) -> Result<SwitchedLinearModel> {
        build_model(&self.power_stage, &self.compensator)
    }

    pub fn input(&self) -> Vector {
        input(self.power_stage.vs, self.power_stage.vr)
    }
}

pub const EXAMPLES: std::ops::RangeInclusive<u8> = 1..=11;

/// Ramp slope added in the closed-loop current mode example.
pub const EX2_MA: f64 = 1.8333e6;

pub fn ex1_stage(rc: f64) -> PowerStageParams {
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

pub fn ex2_stage(rc: f64) -> PowerStageParams {
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

pub fn ex2_compensator(kp: f64) -> CompensatorParams {
    CompensatorParams {
        ma: Some(EX2_MA),
        ..CompensatorParams::proportional(Scheme::CmcClosed, kp)
    }
}

pub fn ex3_stage() -> PowerStageParams {
    PowerStageParams {
        l: 46.1e-6,
        c: 380e-6,
        r: 1.0,
        rc: 0.02,
        vs: 14.0,
        vr: 0.5,
        vh: 1.0,
        fs: 50e3,
    }
}

pub fn ex3_compensator(wp: f64) -> CompensatorParams {
    CompensatorParams::acmc_type2(75506.0, 5652.9, wp, 0.1)
}

pub fn ex4_stage(vs: f64) -> PowerStageParams {
    PowerStageParams {
        l: 900e-9,
        c: 990e-6,
        r: 0.4,
        rc: 5e-3,
        vs,
        vr: 3.3,
        vh: 1.5,
        fs: 300e3,
    }
}

/// Type III compensator with zeros at `κz/√(LC)` and `1/√(LC)`, first pole `p1` in rad/s.
pub fn ex4_compensator(kappa_z: f64, p1: f64) -> CompensatorParams {
    CompensatorParams {
        p1: Some(p1),
        ..CompensatorParams::type3_guideline(&ex4_stage(5.0), 7.78e4, kappa_z)
    }
}

pub fn ex6_stage(r: f64, vs: f64) -> PowerStageParams {
    PowerStageParams {
        l: 20e-3,
        c: 47e-6,
        r,
        rc: 0.0,
        vs,
        vr: 12.276,
        vh: 4.4,
        fs: 2500.0,
    }
}

fn omega_s(fs: f64) -> f64 {
    2.0 * PI * fs
}

/// Base configuration of example `n`.
pub fn preset(n: u8) -> Result<Preset> {
    let p = |power_stage, compensator| {
        Ok(Preset {
            power_stage,
            compensator,
        })
    };
    match n {
        1 => p(
            ex1_stage(0.0),
            CompensatorParams::proportional(Scheme::Pvmc, 80.0),
        ),
        2 | 8 => p(ex2_stage(5e-3), ex2_compensator(237.0)),
        3 => p(ex3_stage(), ex3_compensator(omega_s(50e3) / 10.0)),
        4 => p(ex4_stage(5.0), ex4_compensator(0.5, omega_s(300e3) / 2.0)),
        5 => p(ex4_stage(16.0), ex4_compensator(0.5, omega_s(300e3) / 2.0)),
        6 => p(
            ex6_stage(22.0, 25.0),
            CompensatorParams::proportional(Scheme::Pvmc, 8.4),
        ),
        7 => p(
            ex6_stage(10.0, 25.0),
            CompensatorParams::proportional(Scheme::Pvmc, 8.4),
        ),
        9 => p(ex4_stage(5.0), ex4_compensator(1.0, omega_s(300e3) / 2.0)),
        10 => p(
            ex1_stage(2e-3),
            CompensatorParams::proportional(Scheme::Pvmc, 80.0),
        ),
        11 => p(
            ex6_stage(2.0, 50.0),
            CompensatorParams::proportional(Scheme::Pvmc, 8.4),
        ),
        _ => Err(Error::InvalidArgument(format!(
            "no example {n}; examples are numbered 1 to 11"
        ))),
    }
}

/// A stable, transversal operating point for each scheme.
pub fn nominal(scheme: Scheme) -> Preset {
    let (power_stage, compensator) = match scheme {
        Scheme::Pvmc => (
            ex6_stage(2.0, 50.0),
            CompensatorParams::proportional(Scheme::Pvmc, 8.4),
        ),
        Scheme::CfPvr => (
            PowerStageParams {
                rc: 0.02,
                ..ex1_stage(0.0)
            },
            CompensatorParams::proportional(Scheme::CfPvr, 20.0),
        ),
        Scheme::CmcOpen => (
            PowerStageParams {
                vr: 5.0,
                ..ex2_stage(5e-3)
            },
            CompensatorParams {
                ma: Some(1e6),
                ..CompensatorParams::new(Scheme::CmcOpen)
            },
        ),
        Scheme::CmcClosed => (ex2_stage(5e-3), ex2_compensator(150.0)),
        Scheme::EnhV2 => (
            PowerStageParams {
                vh: 0.1,
                ..ex2_stage(5e-3)
            },
            CompensatorParams {
                ri: Some(0.01),
                ..CompensatorParams::new(Scheme::EnhV2)
            },
        ),
        Scheme::AcmcType2 => (ex3_stage(), ex3_compensator(omega_s(50e3) / 10.0)),
        Scheme::AcmcPi => (
            ex3_stage(),
            CompensatorParams::acmc_pi(75506.0, 5652.9, 0.1),
        ),
        Scheme::VmcType3 => (
            ex4_stage(12.0),
            CompensatorParams::type3_guideline(&ex4_stage(12.0), 7.78e4, 0.5),
        ),
    };
    Preset {
        power_stage,
        compensator,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExampleOptions {
    /// Restricts example 1 to a single ESR value.
    pub rc: Option<f64>,
    /// Skips the long simulation-based checks.
    pub skip_simulation: bool,
}

/// Runs example `n` and compares against its reference values.
pub fn run_example(n: u8, opts: ExampleOptions) -> Result<ExampleReport> {
    match n {
        1 => example1(opts),
        2 => example2(opts),
        3 => example3(),
        4 => example4(),
        5 => example5(opts),
        6 => example6(),
        7 => example7(),
        8 => example8(),
        9 => example9(),
        10 => example10(),
        11 => example11(opts),
        _ => Err(Error::InvalidArgument(format!(
            "no example {n}; examples are numbered 1 to 11"
        ))),
    }
}

/// Period of the settled response: 1, 2, or 0 for anything else.
pub fn period_code(p: Period) -> f64 {
    match p {
        Period::One => 1.0,
        Period::Two => 2.0,
        Period::Other => 0.0,
    }
}

/// Settled period after `cycles` periods from the orbit perturbed by `kick` (relative).
pub fn period_after_kick(
    m: &SwitchedLinearModel,
    u: &Vector,
    kick: f64,
    cycles: usize,
) -> Result<Period> {
    let orbit = solve_duty(m, u)?;
    let x0 = orbit.x0_0.map(|v| v * (1.0 + kick));
    Ok(detect_period(
        &simulate(m, u, &x0, cycles, SimOptions::default())?,
        PERIOD_TOL,
    )?
    .period)
}

/// Settled period after `cycles` periods from rest.
pub fn period_from_rest(m: &SwitchedLinearModel, u: &Vector, cycles: usize) -> Result<Period> {
    let traj = simulate(m, u, &Vector::zeros(m.n), cycles, SimOptions::default())?;
    Ok(detect_period(&traj, PERIOD_TOL)?.period)
}

fn intersections(
    ps: &PowerStageParams,
    cp: &CompensatorParams,
    c: SteadyConstraint,
) -> Result<Vec<(f64, f64)>> {
    let m = build_model(ps, cp)?;
    Ok(boundary_intersection(&m, ps.vr, (0.05, 0.999), c)?
        .into_iter()
        .map(|i| (i.duty, i.vs))
        .collect())
}

fn nth(points: &Result<Vec<(f64, f64)>>, i: usize, duty: bool) -> Result<f64> {
    let pts = points.as_ref().map_err(Clone::clone)?;
    let p = pts.get(i).ok_or_else(|| {
        Error::InvalidArgument(format!("only {} intersection(s) found", pts.len()))
    })?;
    Ok(if duty { p.0 } else { p.1 })
}

fn nth_root(roots: &Result<Vec<f64>>, i: usize) -> Result<f64> {
    let r = roots.as_ref().map_err(Clone::clone)?;
    r.get(i)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("only {} crossing(s) found", r.len())))
}

fn example1(opts: ExampleOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(
        1,
        "proportional voltage mode, effect of ESR on the critical source voltage",
    );
    let cp = CompensatorParams::proportional(Scheme::Pvmc, 80.0);
    let line = SteadyConstraint::ProportionalLine { kp: 80.0 };
    let cases = match opts.rc {
        Some(rc) => vec![rc],
        None => vec![0.0, 2e-3],
    };
    for rc in cases {
        let pts = intersections(&ex1_stage(rc), &cp, line);
        let expected: &[(f64, f64)] = if rc == 0.0 {
            &[(0.41, 9.7)]
        } else if rc == 2e-3 {
            &[(0.34, 11.85), (0.89, 4.48)]
        } else {
            rep.notes
                .push(format!("Rc = {rc}: intersections {:?}", pts?));
            continue;
        };
        for (i, &(d, v)) in expected.iter().enumerate() {
            rep.check(
                format!("Rc={rc} intersection {} D", i + 1),
                d,
                nth(&pts, i, true),
                Tolerance::Abs(0.01),
            );
            rep.check(
                format!("Rc={rc} intersection {} vs", i + 1),
                v,
                nth(&pts, i, false),
                Tolerance::Rel(0.02),
            );
        }
        if opts.skip_simulation {
            continue;
        }
        let sims: &[(f64, f64)] = if rc == 0.0 {
            &[(10.0, 2.0), (9.0, 1.0)]
        } else {
            &[(12.5, 2.0)]
        };
        let m = build_model(&ex1_stage(rc), &cp)?;
        for &(vs, period) in sims {
            let got = period_after_kick(&m, &input(vs, 4.0), 1e-4, 20_000).map(period_code);
            rep.check(
                format!("Rc={rc} vs={vs} simulated period"),
                period,
                got,
                Tolerance::Abs(0.0),
            );
        }
    }
    Ok(rep)
}

fn ex2_builder(rc: f64) -> impl Fn(f64) -> Result<(SwitchedLinearModel, Vector)> {
    move |kp| {
        Ok((
            build_model(&ex2_stage(rc), &ex2_compensator(kp))?,
            input(5.5, 3.34),
        ))
    }
}

fn example2(opts: ExampleOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(2, "closed-loop current mode, critical proportional gain");
    let kp41 = |rc: f64, duty: f64| cmc_closed_eq41(&ex2_stage(rc), duty, EX2_MA).map(|c| c.value);
    rep.check(
        "eq41 kp* Rc=5m D=0.6",
        223.0,
        kp41(5e-3, 0.6),
        Tolerance::Rel(0.01),
    );
    rep.check(
        "eq41 kp* Rc=5m D=0.5941",
        237.0,
        kp41(5e-3, 0.5941),
        Tolerance::Rel(0.01),
    );
    rep.check(
        "eq41 kp* Rc=0 D=0.6",
        468.0,
        kp41(0.0, 0.6),
        Tolerance::Rel(0.01),
    );
    let kp69 = cmc_closed_eq69(&ex2_stage(5e-3), 0.6, EX2_MA).map(|c| c.value);
    rep.check("eq69 kp* Rc=5m D=0.6", 229.0, kp69, Tolerance::Rel(0.01));
    for (rc, lo, hi) in [(5e-3, 150.0, 300.0), (0.0, 350.0, 550.0)] {
        let eig = bisect_critical(ex2_builder(rc), (lo, hi), ClassifyBy::Eigenvalue, 1e-6)?;
        rep.notes
            .push(format!("Rc={rc}: eigenvalue-critical kp* = {eig:.4}"));
    }
    if !opts.skip_simulation {
        let sim =
            |rc, lo, hi| bisect_critical(ex2_builder(rc), (lo, hi), ClassifyBy::simulation(), 1e-4);
        rep.check(
            "simulated kp* Rc=5m",
            237.0,
            sim(5e-3, 150.0, 300.0),
            Tolerance::Abs(2.0),
        );
        rep.check(
            "simulated kp* Rc=0",
            452.0,
            sim(0.0, 350.0, 550.0),
            Tolerance::Abs(5.0),
        );
        let (m, u) = ex2_builder(5e-3)(237.0)?;
        let got = period_after_kick(&m, &u, 1e-4, 20_000).map(period_code);
        rep.check(
            "kp=237 Rc=5m simulated period",
            2.0,
            got,
            Tolerance::Abs(0.0),
        );
    }
    Ok(rep)
}

/// Window edges of the compensator pole `ωp/ωs` where the exact boundary
/// residual `Vs*(d) − vs` changes sign at the operating point.
pub fn ex3_window() -> Result<Vec<f64>> {
    let ps = ex3_stage();
    let ws = ps.omega_s();
    let f = |theta: f64| -> Result<f64> {
        let m = build_model(&ps, &ex3_compensator(theta * ws))?;
        let orbit = solve_duty(&m, &input(ps.vs, ps.vr))?;
        Ok(critical_vs_exact(&m, orbit.d, ps.vr)?.value - ps.vs)
    };
    all_roots(f, &linspace(0.14, 0.81, 68), 1e-9)
}

/// Source voltage where `f(D)` meets `vo/D`.
fn meet_vo_line(vo: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let roots = all_roots(|d| Ok(f(d)? - vo / d), &linspace(0.05, 0.95, 181), 1e-12)?;
    let d = *roots
        .first()
        .ok_or_else(|| Error::InvalidArgument("no intersection with vo/D".into()))?;
    Ok(vo / d)
}

fn example3() -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(
        3,
        "average current mode, unstable window of the compensator pole",
    );
    let edges = ex3_window();
    rep.check(
        "window lower edge wp/ws",
        0.18,
        nth_root(&edges, 0),
        Tolerance::Abs(0.005),
    );
    rep.check(
        "window upper edge wp/ws",
        0.49,
        nth_root(&edges, 1),
        Tolerance::Abs(0.005),
    );
    let ps = ex3_stage();
    let cp = ex3_compensator(ps.omega_s() / 10.0);
    let v46 = meet_vo_line(5.0, |d| Ok(acmc_eq46(&ps, &cp, d)?.value));
    rep.check("eq46 Vs* at wp=ws/10", 19.0, v46, Tolerance::Rel(0.03));
    let m = build_model(&ps, &cp)?;
    let exact = meet_vo_line(5.0, |d| {
        Ok(critical_vs_exact(&m, d * m.period, ps.vr)?.value)
    });
    rep.notes
        .push(format!("exact boundary Vs* at wp=ws/10: {:.4}", exact?));
    Ok(rep)
}

fn example4() -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(4, "voltage mode with a type III compensator");
    let pr = preset(4)?;
    let m = pr.model()?;
    let at02 = critical_vs_exact(&m, 0.2 * m.period, pr.power_stage.vr).map(|c| c.value);
    rep.check("Vs* at D=0.2", 15.6, at02, Tolerance::Rel(0.02));
    let pts = intersections(
        &pr.power_stage,
        &pr.compensator,
        SteadyConstraint::LargeGain,
    );
    rep.check(
        "intersection D",
        0.206,
        nth(&pts, 0, true),
        Tolerance::Abs(0.005),
    );
    rep.check(
        "intersection vs",
        16.0,
        nth(&pts, 0, false),
        Tolerance::Rel(0.02),
    );
    Ok(rep)
}

fn ex5_model(p1_over_ws: f64) -> Result<(SwitchedLinearModel, Vector)> {
    let ps = ex4_stage(16.0);
    Ok((
        build_model(&ps, &ex4_compensator(0.5, p1_over_ws * ps.omega_s()))?,
        input(16.0, ps.vr),
    ))
}

/// Unstable window of `p1/ωs` from the S plot: `S(D) − ḣ` at the operating duty.
pub fn ex5_window_s_plot() -> Result<Vec<f64>> {
    let f = |theta: f64| -> Result<f64> {
        let (m, u) = ex5_model(theta)?;
        let orbit = solve_duty(&m, &u)?;
        Ok(s_value(&m, &u, orbit.duty)? - m.ramp_slope())
    };
    all_roots(f, &linspace(0.1, 0.7, 61), 1e-9)
}

/// Unstable window of `p1/ωs` from the eigenvalue of Φ nearest −1.
pub fn ex5_window_eigen() -> Result<Vec<f64>> {
    let f = |theta: f64| -> Result<f64> {
        let (m, u) = ex5_model(theta)?;
        let lam = eig(&jacobian_phi(&m, &solve_duty(&m, &u)?)?)?;
        Ok(1.0
            + lam
                .iter()
                .filter(|l| l.im.abs() < 1e-9)
                .map(|l| l.re)
                .fold(f64::INFINITY, f64::min))
    };
    all_roots(f, &linspace(0.1, 0.7, 61), 1e-9)
}

fn example5(opts: ExampleOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(5, "type III compensator, unstable window of the first pole");
    let s = ex5_window_s_plot();
    rep.check(
        "S plot window lower p1/ws",
        0.23,
        nth_root(&s, 0),
        Tolerance::Abs(0.005),
    );
    rep.check(
        "S plot window upper p1/ws",
        0.5,
        nth_root(&s, 1),
        Tolerance::Abs(0.005),
    );
    let e = ex5_window_eigen();
    rep.check(
        "eigenvalue window lower p1/ws",
        0.23,
        nth_root(&e, 0),
        Tolerance::Abs(0.005),
    );
    rep.check(
        "eigenvalue window upper p1/ws",
        0.5,
        nth_root(&e, 1),
        Tolerance::Abs(0.005),
    );
    let (m, u) = ex5_model(0.5)?;
    let report = classify(&jacobian_phi(&m, &solve_duty(&m, &u)?)?)?;
    let mut fixed: Vec<f64> = report
        .eigenvalues
        .iter()
        .filter(|l| l.re > 0.0)
        .map(|l| l.re)
        .collect();
    fixed.sort_by(|a, b| b.total_cmp(a));
    for (i, want) in [0.9485, 0.8853, 0.51].into_iter().enumerate() {
        let got = fixed
            .get(i)
            .copied()
            .ok_or(Error::InvalidArgument("missing eigenvalue".into()));
        rep.check(
            format!("p1-independent eigenvalue {}", i + 1),
            want,
            got,
            Tolerance::Abs(0.005),
        );
    }
    if let Some(l) = report.nearest_to_minus_one() {
        rep.notes
            .push(format!("eigenvalue nearest -1 at p1=0.5ws: {:.5}", l.re));
    }
    if !opts.skip_simulation {
        for (theta, unstable) in [(0.2, 0.0), (0.5, 1.0), (0.6, 0.0)] {
            let (m, u) = ex5_model(theta)?;
            let got =
                period_from_rest(&m, &u, 16_000).map(|p| if p == Period::One { 0.0 } else { 1.0 });
            rep.check(
                format!("p1={theta}ws start-up simulation unstable"),
                unstable,
                got,
                Tolerance::Abs(0.0),
            );
        }
    }
    Ok(rep)
}

fn pvmc_critical(ps: &PowerStageParams, kp: f64) -> Result<f64> {
    let pts = intersections(
        ps,
        &CompensatorParams::proportional(Scheme::Pvmc, kp),
        SteadyConstraint::ProportionalLine { kp },
    )?;
    pts.first()
        .map(|p| p.1)
        .ok_or_else(|| Error::InvalidArgument("no intersection".into()))
}

fn example6() -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(
        6,
        "proportional voltage mode, classic critical source voltage",
    );
    rep.check(
        "Vs* R=22",
        24.5,
        pvmc_critical(&ex6_stage(22.0, 25.0), 8.4),
        Tolerance::Abs(0.2),
    );
    Ok(rep)
}

fn example7() -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(7, "proportional voltage mode, dependence on load");
    let ps = ex6_stage(10.0, 25.0);
    rep.check(
        "exact Vs* R=10",
        26.8,
        pvmc_critical(&ps, 8.4),
        Tolerance::Abs(0.2),
    );
    let approx = all_roots(
        |d| Ok(pvmc_eq65(&ps, 8.4, d)?.value - (ps.vr / d - ps.vh / 8.4)),
        &linspace(0.05, 0.95, 181),
        1e-12,
    )
    .and_then(|r| {
        r.first()
            .map(|&d| ps.vr / d - ps.vh / 8.4)
            .ok_or(Error::InvalidArgument("no intersection".into()))
    });
    rep.check("eq65 Vs* R=10", 28.0, approx, Tolerance::Abs(1.0));
    Ok(rep)
}

fn example8() -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(
        8,
        "harmonic-balance critical gain for closed-loop current mode",
    );
    let kp69 = cmc_closed_eq69(&ex2_stage(5e-3), 0.6, EX2_MA).map(|c| c.value);
    rep.check("eq69 kp*", 229.0, kp69, Tolerance::Rel(0.01));
    Ok(rep)
}

fn example9() -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(9, "type III compensator, effect of zero placement");
    let pr = preset(9)?;
    let pts = intersections(
        &pr.power_stage,
        &pr.compensator,
        SteadyConstraint::LargeGain,
    );
    rep.check(
        "intersection D",
        0.138,
        nth(&pts, 0, true),
        Tolerance::Abs(0.005),
    );
    rep.check(
        "intersection vs",
        23.9,
        nth(&pts, 0, false),
        Tolerance::Rel(0.02),
    );
    Ok(rep)
}

fn example10() -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(10, "line regulation from the HB plot and the M plot");
    let pr = preset(10)?;
    let m = pr.model()?;
    let grid = linspace(0.25, 0.99, 149);
    let hb = hb_plot(
        &m,
        4.0,
        &grid,
        SteadyConstraint::LargeGain,
        HbSettings::default(),
    )
    .map(|c| c.crossings_by(|h| h.re));
    let mp = Ok(m_plot(&m, 4.0, &grid, SteadyConstraint::LargeGain).crossings());
    for (name, xs) in [("HB plot", &hb), ("M plot", &mp)] {
        rep.check(
            format!("{name} lower crossing D"),
            0.34,
            nth_root(xs, 0),
            Tolerance::Abs(0.01),
        );
        rep.check(
            format!("{name} upper crossing D"),
            0.89,
            nth_root(xs, 1),
            Tolerance::Abs(0.01),
        );
    }
    rep.check(
        "stable vs ceiling",
        11.85,
        nth_root(&mp, 0).map(|d| 4.0 / d),
        Tolerance::Rel(0.02),
    );
    rep.check(
        "stable vs floor",
        4.48,
        nth_root(&mp, 1).map(|d| 4.0 / d),
        Tolerance::Rel(0.02),
    );
    Ok(rep)
}

fn example11(opts: ExampleOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new(11, "loop-gain test on a stable operating point");
    let pr = preset(11)?;
    let (m, u) = (pr.model()?, pr.input());
    let orbit = solve_duty(&m, &u)?;
    rep.check("D", 0.243, Ok(orbit.duty), Tolerance::Abs(0.001));
    rep.check("x0(0) iL", 5.9867, Ok(orbit.x0_0[0]), Tolerance::Abs(1e-3));
    rep.check("x0(0) vC", 12.0753, Ok(orbit.x0_0[1]), Tolerance::Abs(1e-3));
    let report = classify(&jacobian_phi(&m, &orbit)?)?;
    let mut lam: Vec<f64> = report.eigenvalues.iter().map(|l| l.re).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    rep.check("eigenvalue 1", -0.0336, Ok(lam[0]), Tolerance::Abs(1e-3));
    rep.check("eigenvalue 2", -0.4222, Ok(lam[1]), Tolerance::Abs(1e-3));
    let t = loop_gain(
        &loop_g_from_model(&m)?,
        pr.power_stage.vs,
        pr.power_stage.vh,
    );
    let h = theorem1_check(&t, orbit.duty, m.omega_s(), HbSettings::default())?;
    rep.check("Re H(D)", 0.1390, Ok(h.h.re), Tolerance::Abs(1e-3));
    rep.check(
        "Im H(D)",
        0.8867,
        h.h.im.ok_or(Error::NonFinite("Im H".into())),
        Tolerance::Abs(1e-3),
    );
    rep.check(
        "Vs*",
        82.9,
        pvmc_critical(&pr.power_stage, 8.4),
        Tolerance::Abs(0.5),
    );
    if !opts.skip_simulation {
        rep.check(
            "simulated period",
            1.0,
            period_after_kick(&m, &u, 1e-3, 200).map(period_code),
            Tolerance::Abs(0.0),
        );
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_kinds() {
        assert!(Tolerance::Abs(0.01).admits(0.41, 0.4123));
        assert!(!Tolerance::Abs(0.01).admits(0.41, 0.421));
        assert!(Tolerance::Rel(0.02).admits(9.7, 9.6891));
        assert!(!Tolerance::Rel(0.01).admits(468.0, 456.9));
        let c = Check::new("x", 1.0, Err(Error::NoConvergence), Tolerance::Abs(1.0));
        assert!(!c.pass && c.computed.is_nan() && c.error.is_some());
    }

    #[test]
    fn presets_build() {
        for n in EXAMPLES {
            let p = preset(n).unwrap();
            let m = p.model().unwrap();
            assert_eq!(m.n, build_model(&p.power_stage, &p.compensator).unwrap().n);
        }
        assert!(preset(12).is_err());
        assert!(run_example(0, ExampleOptions::default()).is_err());
    }

    #[test]
    fn fast_examples_reproduce() {
        let opts = ExampleOptions {
            rc: None,
            skip_simulation: true,
        };
        for n in [4, 6, 7, 8, 9, 10, 11] {
            let rep = run_example(n, opts).unwrap();
            for c in &rep.checks {
                assert!(
                    c.pass,
                    "example {n}: {} expected {} got {}",
                    c.label, c.expected, c.computed
                );
            }
        }
    }
}
