//! Unified switched-linear description of a PWM converter and its builders.
//!
//! Stage S1 (switch on) runs from the clock edge until the compensator output
//! `y = C x + D u` falls to the trailing-edge ramp `h(t) = Vh (t mod T) / T`;
//! stage S2 covers the rest of the cycle. The input is `u = (vs, vr)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Integrator regularization used when a compensator does not set `delta`.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// Voltage mode, proportional compensator.
    Pvmc,
    /// Current-feedback proportional voltage regulation (V² style, `D = [0, 1]`).
    CfPvr,
    /// Peak current mode with the voltage loop open.
    CmcOpen,
    /// Peak current mode with a proportional voltage loop.
    CmcClosed,
    /// Enhanced V² with an inductor-current sense resistor.
    EnhV2,
    /// Average current mode with a type II compensator.
    AcmcType2,
    /// Average current mode with a PI compensator.
    AcmcPi,
    /// Voltage mode with a type III compensator.
    VmcType3,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Pvmc,
        Scheme::CfPvr,
        Scheme::CmcOpen,
        Scheme::CmcClosed,
        Scheme::EnhV2,
        Scheme::AcmcType2,
        Scheme::AcmcPi,
        Scheme::VmcType3,
    ];

    pub fn state_dim(self) -> usize {
        match self {
            Scheme::AcmcPi => 3,
            Scheme::AcmcType2 => 4,
            Scheme::VmcType3 => 5,
            _ => 2,
        }
    }
}

/// Power stage and operating point, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerStageParams {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Rc", default)]
    pub rc: f64,
    pub vs: f64,
    pub vr: f64,
    #[serde(rename = "Vh")]
    pub vh: f64,
    pub fs: f64,
}

impl PowerStageParams {
    pub fn period(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.fs
    }

    /// `R / (R + Rc)`.
    pub fn rho(&self) -> f64 {
        self.r / (self.r + self.rc)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("L", self.l),
            ("C", self.c),
            ("R", self.r),
            ("Vh", self.vh),
            ("fs", self.fs),
        ] {
            positive(name, v)?;
        }
        if !(self.rc >= 0.0 && self.rc.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Rc must be a finite value >= 0, got {}",
                self.rc
            )));
        }
        for (name, v) in [("vs", self.vs), ("vr", self.vr)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(())
    }
}

/// Controller parameters. Only the fields used by `scheme` are read.
///
/// Poles and zeros are in rad/s. When `ma` is set it overrides the ramp
/// amplitude: the model uses `Vh = ma * T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensatorParams {
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kp: Option<f64>,
    #[serde(rename = "Kc", default, skip_serializing_if = "Option::is_none")]
    pub kc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    #[serde(rename = "Rs", default, skip_serializing_if = "Option::is_none")]
    pub rs: Option<f64>,
    #[serde(rename = "Ri", default, skip_serializing_if = "Option::is_none")]
    pub ri: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ma: Option<f64>,
}

impl CompensatorParams {
    pub fn new(scheme: Scheme) -> Self {
        CompensatorParams {
            scheme,
            kp: None,
            kc: None,
            wz: None,
            z1: None,
            z2: None,
            wp: None,
            p1: None,
            p2: None,
            rs: None,
            ri: None,
            delta: None,
            kappa_z: None,
            ma: None,
        }
    }

    pub fn proportional(scheme: Scheme, kp: f64) -> Self {
        CompensatorParams {
            kp: Some(kp),
            ..Self::new(scheme)
        }
    }

    /// Type II current-loop compensator `Kc (1 + s/wz) / ((s + δ)(1 + s/wp))`.
    pub fn acmc_type2(kc: f64, wz: f64, wp: f64, rs: f64) -> Self {
        CompensatorParams {
            kc: Some(kc),
            wz: Some(wz),
            wp: Some(wp),
            rs: Some(rs),
            ..Self::new(Scheme::AcmcType2)
        }
    }

    /// PI current-loop compensator `Kc (1 + s/wz) / (s + δ)`.
    pub fn acmc_pi(kc: f64, wz: f64, rs: f64) -> Self {
        CompensatorParams {
            kc: Some(kc),
            wz: Some(wz),
            rs: Some(rs),
            ..Self::new(Scheme::AcmcPi)
        }
    }

    /// Type III voltage compensator with two zeros and poles at δ, p1, p2.
    pub fn type3(kc: f64, z1: f64, z2: f64, p1: f64, p2: f64) -> Self {
        CompensatorParams {
            kc: Some(kc),
            z1: Some(z1),
            z2: Some(z2),
            p1: Some(p1),
            p2: Some(p2),
            ..Self::new(Scheme::VmcType3)
        }
    }

    /// Type III compensator laid out by the usual industrial rule:
    /// `z1 = κz/√(LC)`, `z2 = 1/√(LC)`, `p1 = ωs/2`, `p2 = 1/(Rc C)`.
    pub fn type3_guideline(ps: &PowerStageParams, kc: f64, kappa_z: f64) -> Self {
        let w0 = 1.0 / (ps.l * ps.c).sqrt();
        CompensatorParams {
            kappa_z: Some(kappa_z),
            ..Self::type3(
                kc,
                kappa_z * w0,
                w0,
                ps.omega_s() / 2.0,
                1.0 / (ps.rc * ps.c),
            )
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(DEFAULT_DELTA)
    }

    /// Required positive field lookup.
    pub fn get(&self, name: &'static str) -> Result<f64> {
        let v = match name {
            "kp" => self.kp,
            "Kc" => self.kc,
            "wz" => self.wz,
            "z1" => self.z1,
            "z2" => self.z2,
            "wp" => self.wp,
            "p1" => self.p1,
            "p2" => self.p2,
            "Rs" => self.rs,
            "Ri" => self.ri,
            "delta" => Some(self.delta()),
            "kappa_z" => self.kappa_z,
            "ma" => self.ma,
            _ => None,
        };
        let v = v.ok_or(Error::MissingParameter {
            scheme: self.scheme,
            name,
        })?;
        positive(name, v)?;
        Ok(v)
    }

    /// Sets a named field; used by parameter sweeps.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "kp" => &mut self.kp,
            "Kc" => &mut self.kc,
            "wz" => &mut self.wz,
            "z1" => &mut self.z1,
            "z2" => &mut self.z2,
            "wp" => &mut self.wp,
            "p1" => &mut self.p1,
            "p2" => &mut self.p2,
            "Rs" => &mut self.rs,
            "Ri" => &mut self.ri,
            "delta" => &mut self.delta,
            "kappa_z" => &mut self.kappa_z,
            "ma" => &mut self.ma,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown compensator parameter `{name}`"
                )))
            }
        };
        *slot = Some(value);
        Ok(())
    }

    /// Names of the fields read by [`build_model`] for this scheme.
    pub fn required_fields(&self) -> &'static [&'static str] {
        match self.scheme {
            Scheme::Pvmc | Scheme::CfPvr | Scheme::CmcClosed => &["kp"],
            Scheme::CmcOpen => &[],
            Scheme::EnhV2 => &["Ri"],
            Scheme::AcmcType2 => &["Kc", "wz", "wp", "Rs"],
            Scheme::AcmcPi => &["Kc", "wz", "Rs"],
            Scheme::VmcType3 => &["Kc", "z1", "z2", "p1", "p2"],
        }
    }

    /// Zero scale factor; falls back to `z1·√(LC)` when not given.
    pub fn kappa_z(&self, ps: &PowerStageParams) -> Result<f64> {
        match self.kappa_z {
            Some(k) => {
                positive("kappa_z", k)?;
                Ok(k)
            }
            None => Ok(self.get("z1")? * (ps.l * ps.c).sqrt()),
        }
    }

    /// Ramp amplitude seen by the modulator.
    pub fn ramp_amplitude(&self, ps: &PowerStageParams) -> f64 {
        match self.ma {
            Some(ma) => ma * ps.period(),
            None => ps.vh,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value: v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// `A1 == A2`, `B21 == 0`, `B12 == B22`.
    Buck,
    Boost,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedLinearModel {
    pub n: usize,
    pub a1: Matrix,
    pub a2: Matrix,
    /// N×2, columns act on `vs` and `vr`.
    pub b1: Matrix,
    pub b2: Matrix,
    pub c: Vector,
    /// Feedthrough on `(vs, vr)`.
    pub d: Vector,
    /// Output-voltage rows `vo = E x` per stage.
    pub e1: Vector,
    pub e2: Vector,
    pub vh: f64,
    pub period: f64,
    pub topology: Topology,
    pub scheme: Option<Scheme>,
}

impl SwitchedLinearModel {
    pub fn ramp_slope(&self) -> f64 {
        self.vh / self.period
    }

    pub fn ramp(&self, t: f64) -> f64 {
        self.vh * t.rem_euclid(self.period) / self.period
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    pub fn output(&self, x: &Vector, u: &Vector) -> f64 {
        self.c.dot(x) + self.d.dot(u)
    }

    /// First column of `B1`, the source-voltage input during S1.
    pub fn b11(&self) -> Vector {
        self.b1.column(0).into_owned()
    }

    pub fn b12(&self) -> Vector {
        self.b1.column(1).into_owned()
    }
}

/// Operating input pair `u = (vs, vr)`.
pub fn input(vs: f64, vr: f64) -> Vector {
    Vector::from_vec(vec![vs, vr])
}

/// Builds the unified model for `cp.scheme`.
pub fn build_model(ps: &PowerStageParams, cp: &CompensatorParams) -> Result<SwitchedLinearModel> {
    ps.validate()?;
    let n = cp.scheme.state_dim();
    let rho = ps.rho();
    let (l, c, r, rc) = (ps.l, ps.c, ps.r, ps.rc);

    let mut a = Matrix::zeros(n, n);
    a[(0, 0)] = -rho * rc / l;
    a[(0, 1)] = -rho / l;
    a[(1, 0)] = rho / c;
    a[(1, 1)] = -rho / (r * c);
    let mut b1 = Matrix::zeros(n, 2);
    b1[(0, 0)] = 1.0 / l;
    let mut cr = Vector::zeros(n);
    let mut dr = Vector::zeros(2);
    let mut e = Vector::zeros(n);
    e[0] = rho * rc;
    e[1] = rho;

    match cp.scheme {
        Scheme::Pvmc | Scheme::CfPvr => {
            let kp = cp.get("kp")?;
            cr[0] = -kp * rho * rc;
            cr[1] = -kp * rho;
            dr[1] = if cp.scheme == Scheme::Pvmc { kp } else { 1.0 };
        }
        Scheme::CmcOpen => {
            cr[0] = -1.0;
            dr[1] = 1.0;
        }
        Scheme::CmcClosed => {
            let kp = cp.get("kp")?;
            cr[0] = -(1.0 + kp * rho * rc);
            cr[1] = -kp * rho;
            dr[1] = kp;
        }
        Scheme::EnhV2 => {
            let ri = cp.get("Ri")?;
            cr[0] = -(rho * rc + ri);
            cr[1] = -rho;
            dr[1] = 1.0;
        }
        Scheme::AcmcType2 => {
            let (kc, wz, wp, rs, dl) = (
                cp.get("Kc")?,
                cp.get("wz")?,
                cp.get("wp")?,
                cp.get("Rs")?,
                cp.get("delta")?,
            );
            a[(2, 3)] = 1.0;
            a[(3, 0)] = -wp * rs;
            a[(3, 2)] = -dl * wp;
            a[(3, 3)] = -dl - wp;
            b1[(3, 1)] = wp;
            cr[2] = kc;
            cr[3] = kc / wz;
            dr[1] = 1.0;
        }
        Scheme::AcmcPi => {
            let (kc, wz, rs, dl) = (
                cp.get("Kc")?,
                cp.get("wz")?,
                cp.get("Rs")?,
                cp.get("delta")?,
            );
            a[(2, 0)] = -rs;
            a[(2, 2)] = -dl;
            b1[(2, 1)] = 1.0;
            cr[0] = -rs * kc / wz;
            cr[2] = kc * (1.0 - dl / wz);
            dr[1] = 1.0 + kc / wz;
        }
        Scheme::VmcType3 => {
            let (kc, z1, z2, p1, p2, dl) = (
                cp.get("Kc")?,
                cp.get("z1")?,
                cp.get("z2")?,
                cp.get("p1")?,
                cp.get("p2")?,
                cp.get("delta")?,
            );
            let pp = p1 * p2;
            a[(2, 3)] = 1.0;
            a[(3, 4)] = 1.0;
            a[(4, 0)] = -pp * rho * rc;
            a[(4, 1)] = -pp * rho;
            a[(4, 2)] = -dl * pp;
            a[(4, 3)] = -dl * (p1 + p2) - pp;
            a[(4, 4)] = -dl - p1 - p2;
            b1[(4, 1)] = pp;
            cr[2] = kc;
            cr[3] = kc * (1.0 / z1 + 1.0 / z2);
            cr[4] = kc / (z1 * z2);
            dr[1] = 1.0;
        }
    }

    let mut b2 = b1.clone();
    b2[(0, 0)] = 0.0;
    Ok(SwitchedLinearModel {
        n,
        a1: a.clone(),
        a2: a,
        b1,
        b2,
        c: cr,
        d: dr,
        e1: e.clone(),
        e2: e,
        vh: cp.ramp_amplitude(ps),
        period: ps.period(),
        topology: Topology::Buck,
        scheme: Some(cp.scheme),
    })
}

/// Boost converter under proportional voltage-mode control, ideal capacitor.
///
/// S1 charges the inductor from the source while the capacitor feeds the
/// load; S2 connects the inductor to the output.
pub fn build_boost_pvmc(ps: &PowerStageParams, kp: f64) -> Result<SwitchedLinearModel> {
    ps.validate()?;
    positive("kp", kp)?;
    if ps.rc != 0.0 {
        return Err(Error::Unsupported("boost model requires Rc = 0".into()));
    }
    let (l, c, r) = (ps.l, ps.c, ps.r);
    let a1 = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0 / (r * c)]);
    let a2 = Matrix::from_row_slice(2, 2, &[0.0, -1.0 / l, 1.0 / c, -1.0 / (r * c)]);
    let b = Matrix::from_row_slice(2, 2, &[1.0 / l, 0.0, 0.0, 0.0]);
    let e = Vector::from_vec(vec![0.0, 1.0]);
    Ok(SwitchedLinearModel {
        n: 2,
        a1,
        a2,
        b1: b.clone(),
        b2: b,
        c: Vector::from_vec(vec![0.0, -kp]),
        d: Vector::from_vec(vec![0.0, kp]),
        e1: e.clone(),
        e2: e,
        vh: ps.vh,
        period: ps.period(),
        topology: Topology::Boost,
        scheme: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Dimension,
    BuckIdentity,
    NonFinite,
    Parameter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

impl Finding {
    fn new(kind: FindingKind, message: impl Into<String>) -> Self {
        Finding {
            kind,
            message: message.into(),
        }
    }
}

/// Structural checks; an empty list means the model is usable.
pub fn validate_model(m: &SwitchedLinearModel) -> Vec<Finding> {
    use FindingKind::*;
    let n = m.n;
    let mut out = Vec::new();
    let shapes = [
        ("A1", m.a1.shape(), (n, n)),
        ("A2", m.a2.shape(), (n, n)),
        ("B1", m.b1.shape(), (n, 2)),
        ("B2", m.b2.shape(), (n, 2)),
        ("C", (1, m.c.len()), (1, n)),
        ("D", (1, m.d.len()), (1, 2)),
        ("E1", (1, m.e1.len()), (1, n)),
        ("E2", (1, m.e2.len()), (1, n)),
    ];
    for (name, got, want) in shapes {
        if got != want {
            out.push(Finding::new(
                Dimension,
                format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                ),
            ));
        }
    }
    let mats: [(&str, &Matrix); 4] = [("A1", &m.a1), ("A2", &m.a2), ("B1", &m.b1), ("B2", &m.b2)];
    for (name, mat) in mats {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                if !mat[(i, j)].is_finite() {
                    out.push(Finding::new(
                        NonFinite,
                        format!("{name}[{},{}] = {}", i + 1, j + 1, mat[(i, j)]),
                    ));
                }
            }
        }
    }
    let vecs: [(&str, &Vector); 4] = [("C", &m.c), ("D", &m.d), ("E1", &m.e1), ("E2", &m.e2)];
    for (name, v) in vecs {
        for (j, x) in v.iter().enumerate() {
            if !x.is_finite() {
                out.push(Finding::new(NonFinite, format!("{name}[{}] = {x}", j + 1)));
            }
        }
    }
    if !(m.vh > 0.0 && m.vh.is_finite()) {
        out.push(Finding::new(
            Parameter,
            format!("Vh must be positive, got {}", m.vh),
        ));
    }
    if !(m.period > 0.0 && m.period.is_finite()) {
        out.push(Finding::new(
            Parameter,
            format!("T must be positive, got {}", m.period),
        ));
    }
    let dims_ok = out.iter().all(|f| f.kind != Dimension);
    if m.topology == Topology::Buck && dims_ok {
        if m.a1 != m.a2 {
            out.push(Finding::new(BuckIdentity, "buck model requires A1 == A2"));
        }
        if m.b2.column(0).iter().any(|&v| v != 0.0) {
            out.push(Finding::new(BuckIdentity, "buck model requires B21 == 0"));
        }
        if m.b1.column(1) != m.b2.column(1) {
            out.push(Finding::new(BuckIdentity, "buck model requires B12 == B22"));
        }
    }
    out
}
