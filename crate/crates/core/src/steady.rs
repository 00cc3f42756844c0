//! T-periodic orbit, steady-state duty cycle and the steady-state constraint
//! curves that pair with the boundary conditions.

use crate::error::{Error, Result, Saturation};
use crate::model::{PowerStageParams, SwitchedLinearModel, Topology};
use crate::numerics::{expm_with_integral, solve_ctx, solve_vec, Matrix, Vector};
use crate::roots::brent;

/// Grid used to bracket the first crossing of `y⁰(d) − h(d)`.
pub const DUTY_GRID: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    /// Switching instant, seconds.
    pub d: f64,
    /// `d / T`.
    pub duty: f64,
    pub x0_0: Vector,
    pub x0_d: Vector,
    /// `ẋ⁰(d−) = A1 x⁰(d) + B1 u`.
    pub slope_pre: Vector,
    /// `ẋ⁰(d+) = A2 x⁰(d) + B2 u`.
    pub slope_post: Vector,
    pub y_slope_pre: f64,
    pub y_slope_post: f64,
}

impl PeriodicOrbit {
    fn from_states(
        m: &SwitchedLinearModel,
        u: &Vector,
        d: f64,
        x0_0: Vector,
        x0_d: Vector,
    ) -> Self {
        let slope_pre = &m.a1 * &x0_d + &m.b1 * u;
        let slope_post = &m.a2 * &x0_d + &m.b2 * u;
        PeriodicOrbit {
            d,
            duty: d / m.period,
            y_slope_pre: m.c.dot(&slope_pre),
            y_slope_post: m.c.dot(&slope_post),
            x0_0,
            x0_d,
            slope_pre,
            slope_post,
        }
    }

    /// `y⁰(d) − h(d)`; zero on a genuine steady state.
    pub fn switching_residual(&self, m: &SwitchedLinearModel, u: &Vector) -> f64 {
        m.output(&self.x0_d, u) - m.ramp_slope() * self.d
    }
}

fn check_duty(m: &SwitchedLinearModel, d: f64) -> Result<()> {
    if !(0.0..=m.period).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "switch time {d} outside [0, {}]",
            m.period
        )));
    }
    Ok(())
}

fn check_input(m: &SwitchedLinearModel, u: &Vector) -> Result<()> {
    if u.len() != 2 {
        return Err(Error::Dimension(format!(
            "input must be (vs, vr), got length {}",
            u.len()
        )));
    }
    if m.b1.nrows() != m.n || m.a1.nrows() != m.n {
        return Err(Error::Dimension("model matrices do not match N".into()));
    }
    Ok(())
}

/// Periodic orbit that switches at `d`, for any topology.
pub fn orbit_at_duty(m: &SwitchedLinearModel, u: &Vector, d: f64) -> Result<PeriodicOrbit> {
    check_input(m, u)?;
    check_duty(m, d)?;
    let n = m.n;
    let (e1, psi1) = expm_with_integral(&m.a1, d)?;
    let (e2, psi2) = expm_with_integral(&m.a2, m.period - d)?;
    let b2u = &m.b2 * u;
    let rhs = &e1 * &psi2 * &b2u + &psi1 * (&m.b1 * u);
    let lhs = Matrix::identity(n, n) - &e1 * &e2;
    let x0_d = solve_vec(&lhs, &rhs, "I - e^{A1 d} e^{A2 (T-d)}")?;
    let x0_0 = &e2 * &x0_d + &psi2 * &b2u;
    Ok(PeriodicOrbit::from_states(m, u, d, x0_0, x0_d))
}

/// Buck-only closed form with `A1 == A2`, `B21 == 0`, `B12 == B22`:
/// `x⁰(d) = (I − e^{AT})⁻¹ Ψ(d) B11 vs − A⁻¹ B12 vr`, with `Ψ(d) = A⁻¹(e^{Ad} − I)`.
pub fn orbit_at_duty_buck(m: &SwitchedLinearModel, u: &Vector, d: f64) -> Result<PeriodicOrbit> {
    check_input(m, u)?;
    check_duty(m, d)?;
    if m.topology != Topology::Buck {
        return Err(Error::Unsupported(
            "buck closed form on a non-buck model".into(),
        ));
    }
    let n = m.n;
    let a = &m.a1;
    let (e_t, _) = expm_with_integral(a, m.period)?;
    let (_, psi_d) = expm_with_integral(a, d)?;
    let drive = &psi_d * m.b11() * u[0];
    let forced = solve_vec(&(Matrix::identity(n, n) - e_t), &drive, "I - e^{AT}")?;
    let offset = solve_vec(a, &(m.b12() * u[1]), "A1")?;
    let x0_d = forced - offset;
    let (e2, psi2) = expm_with_integral(&m.a2, m.period - d)?;
    let x0_0 = &e2 * &x0_d + &psi2 * (&m.b2 * u);
    Ok(PeriodicOrbit::from_states(m, u, d, x0_0, x0_d))
}

/// Steady-state orbit at the first switching instant in the cycle.
///
/// Brackets `y⁰(d) − h(d)` on a uniform grid over `[0, T]` and polishes the
/// smallest sign change. No crossing means the duty ratio saturates.
pub fn solve_duty(m: &SwitchedLinearModel, u: &Vector) -> Result<PeriodicOrbit> {
    let t = m.period;
    let r = |d: f64| -> Result<f64> { Ok(orbit_at_duty(m, u, d)?.switching_residual(m, u)) };
    let mut prev_d = 0.0;
    let mut prev_r = r(0.0)?;
    let ftol = 1e-10 * m.vh;
    for i in 1..=DUTY_GRID {
        let d = t * i as f64 / DUTY_GRID as f64;
        let cur = r(d)?;
        if cur == 0.0 {
            return refine_orbit(m, u, orbit_at_duty(m, u, d)?);
        }
        if prev_r != 0.0 && prev_r.signum() != cur.signum() {
            let root = brent(r, prev_d, d, prev_r, cur, 1e-15 * t, ftol)?;
            return refine_orbit(m, u, orbit_at_duty(m, u, root)?);
        }
        prev_d = d;
        prev_r = cur;
    }
    let r_end = prev_r;
    Err(Error::DutySaturated(if r_end > 0.0 {
        Saturation::High
    } else {
        Saturation::Low
    }))
}

/// Newton polish of `(x⁰(d), d)` on the bordered system
/// `x = e^{A1 d}(e^{A2(T−d)} x + Ψ2 B2 u) + Ψ1 B1 u`, `C x + D u = ḣ d`.
///
/// With an integrator in the loop `y⁰(d) − h(d)` is so steep in `d` that
/// rounding `d` alone leaves a visible switching residual; solving for `x`
/// and `d` together removes it.
fn refine_orbit(
    m: &SwitchedLinearModel,
    u: &Vector,
    mut orbit: PeriodicOrbit,
) -> Result<PeriodicOrbit> {
    let n = m.n;
    let hdot = m.ramp_slope();
    let (b1u, b2u) = (&m.b1 * u, &m.b2 * u);
    let scale =
        m.vh.abs()
            .max(m.output(&orbit.x0_d, u).abs())
            .max(f64::MIN_POSITIVE);
    for _ in 0..4 {
        let r2 = orbit.switching_residual(m, u);
        if r2.abs() <= 1e-14 * scale {
            break;
        }
        let d = orbit.d;
        let (e1, psi1) = expm_with_integral(&m.a1, d)?;
        let (e2, psi2) = expm_with_integral(&m.a2, m.period - d)?;
        let x = &orbit.x0_d;
        let z = &e2 * x + &psi2 * &b2u;
        let r1 = x - (&e1 * &z + &psi1 * &b1u);
        let e12 = &e1 * &e2;
        let dp = &e1 * (&m.a1 * &z + &b1u) - &e12 * (&m.a2 * x + &b2u);
        let mut jac = Matrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n))
            .copy_from(&(Matrix::identity(n, n) - &e12));
        jac.view_mut((0, n), (n, 1)).copy_from(&(-dp));
        jac.view_mut((n, 0), (1, n)).copy_from(&m.c.transpose());
        jac[(n, n)] = -hdot;
        let mut rhs = Vector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&r1);
        rhs[n] = r2;
        let Ok(step) = solve_vec(&jac, &rhs, "bordered orbit system") else {
            break;
        };
        let d_new = d - step[n];
        if !(0.0..=m.period).contains(&d_new) {
            break;
        }
        let x_new = x - step.rows(0, n);
        let x0_0 =
            expm_with_integral(&m.a2, m.period - d_new).map(|(e, p)| &e * &x_new + &p * &b2u)?;
        let next = PeriodicOrbit::from_states(m, u, d_new, x0_0, x_new);
        if next.switching_residual(m, u).abs() >= r2.abs() {
            break;
        }
        orbit = next;
    }
    Ok(orbit)
}

/// Source voltage that makes `d` the steady-state switching instant (buck).
///
/// `vs = (h(d) + C A⁻¹ B12 vr − D2 vr) / (C (I − e^{AT})⁻¹ A⁻¹ (e^{Ad} − I) B11 + D1)`.
pub fn critical_vs_at_duty(m: &SwitchedLinearModel, d: f64, vr: f64) -> Result<f64> {
    check_duty(m, d)?;
    if m.topology != Topology::Buck {
        return critical_vs_at_duty_affine(m, d, vr);
    }
    let n = m.n;
    let a = &m.a1;
    let (e_t, _) = expm_with_integral(a, m.period)?;
    let (_, psi_d) = expm_with_integral(a, d)?;
    let inv_a_b12 = solve_vec(a, &m.b12(), "A1")?;
    let num = m.ramp_slope() * d + m.c.dot(&inv_a_b12) * vr - m.d[1] * vr;
    let k = solve_ctx(&(Matrix::identity(n, n) - e_t), &psi_d, "I - e^{AT}")?;
    let den = m.c.dot(&(k * m.b11())) + m.d[0];
    if den.abs() <= 1e-300 {
        return Err(Error::SingularDenominator {
            equation: "eq5",
            denominator: den,
        });
    }
    Ok(num / den)
}

/// Same quantity from linearity of the orbit in `u`; valid for any topology.
pub fn critical_vs_at_duty_affine(m: &SwitchedLinearModel, d: f64, vr: f64) -> Result<f64> {
    let xs = orbit_at_duty(m, &Vector::from_vec(vec![1.0, 0.0]), d)?.x0_d;
    let xr = orbit_at_duty(m, &Vector::from_vec(vec![0.0, 1.0]), d)?.x0_d;
    let den = m.c.dot(&xs) + m.d[0];
    if den.abs() <= 1e-300 {
        return Err(Error::SingularDenominator {
            equation: "eq5",
            denominator: den,
        });
    }
    Ok((m.ramp_slope() * d - (m.c.dot(&xr) + m.d[1]) * vr) / den)
}

/// Averaged steady-state line of proportional voltage mode: `vs = vr/D − Vh/kp`.
pub fn steady_line_pvmc(ps: &PowerStageParams, kp: f64, duty: f64) -> Result<f64> {
    if duty == 0.0 {
        return Err(Error::InvalidArgument("duty ratio must be nonzero".into()));
    }
    if !(kp > 0.0) {
        return Err(Error::NonPositive {
            name: "kp",
            value: kp,
        });
    }
    Ok(ps.vr / duty - ps.vh / kp)
}
