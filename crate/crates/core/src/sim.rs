//! Exact switched simulation: each stage is propagated with the matrix
//! exponential of an input-augmented system, so there is no integration
//! error; only the switching instant is found numerically.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SwitchedLinearModel;
use crate::numerics::{expm, Matrix, Vector};
use crate::roots::brent;
use crate::sampled::{classify, jacobian_phi};
use crate::steady::{solve_duty, PeriodicOrbit};

/// Sub-intervals per cycle used to bracket the switching instant.
pub const EVENT_GRID: usize = 64;
/// Default relative tolerance for period detection.
pub const PERIOD_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleFlag {
    Normal,
    /// `y ≤ h` at the start of the cycle; the switch stays in S2 all cycle.
    SaturatedLow,
    /// No crossing inside the cycle; the switch stays in S1 all cycle.
    SaturatedHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub h: f64,
    pub stage: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// States at `t = nT`, one more than the number of cycles.
    pub cycle_states: Vec<Vector>,
    /// Switching instant of each cycle, seconds into the cycle.
    pub switch_times: Vec<f64>,
    pub flags: Vec<CycleFlag>,
    /// Crossings of `y` and `h` after the latched switch, summed over all cycles.
    pub extra_crossings: usize,
    pub dense: Option<Vec<DenseSample>>,
}

impl Trajectory {
    pub fn cycles(&self) -> usize {
        self.switch_times.len()
    }

    pub fn saturated_cycles(&self) -> usize {
        self.flags
            .iter()
            .filter(|f| **f != CycleFlag::Normal)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleOutcome {
    pub d: f64,
    pub flag: CycleFlag,
    pub extra_crossings: usize,
}

/// `[[A, Bu], [0, 0]]`, whose exponential advances `[x; 1]`.
fn augmented(a: &Matrix, b: &Matrix, u: &Vector) -> Matrix {
    let n = a.nrows();
    let mut m = Matrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, 1)).copy_from(&(b * u));
    m
}

fn apply(p: &Matrix, x: &Vector) -> Vector {
    let n = x.len();
    let mut out = p.view((0, 0), (n, n)) * x;
    out += p.view((0, n), (n, 1));
    out
}

/// Propagators for a fixed model and input.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    m: &'a SwitchedLinearModel,
    u: Vector,
    aug1: Matrix,
    aug2: Matrix,
    step1: Matrix,
    step2: Matrix,
    dt: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(m: &'a SwitchedLinearModel, u: &Vector) -> Result<Self> {
        if u.len() != 2 {
            return Err(Error::Dimension(format!(
                "input must be (vs, vr), got length {}",
                u.len()
            )));
        }
        let aug1 = augmented(&m.a1, &m.b1, u);
        let aug2 = augmented(&m.a2, &m.b2, u);
        let dt = m.period / EVENT_GRID as f64;
        Ok(Simulator {
            m,
            u: u.clone(),
            step1: expm(&aug1, dt)?,
            step2: expm(&aug2, dt)?,
            aug1,
            aug2,
            dt,
        })
    }

    fn residual(&self, x: &Vector, t: f64) -> f64 {
        self.m.output(x, &self.u) - self.m.ramp_slope() * t
    }

    fn advance(&self, aug: &Matrix, x: &Vector, t: f64) -> Result<Vector> {
        if t == 0.0 {
            return Ok(x.clone());
        }
        Ok(apply(&expm(aug, t)?, x))
    }

    fn record(
        &self,
        dense: &mut Option<&mut Vec<DenseSample>>,
        t0: f64,
        t: f64,
        x: &Vector,
        stage: u8,
    ) {
        if let Some(out) = dense {
            out.push(DenseSample {
                t: t0 + t,
                x: x.as_slice().to_vec(),
                y: self.m.output(x, &self.u),
                h: self.m.ramp(t),
                stage,
            });
        }
    }

    /// Advances one clock period from `x`, returning the next sampled state.
    pub fn step(&self, x: &Vector) -> Result<(Vector, CycleOutcome)> {
        self.step_dense(x, 0.0, None)
    }

    fn step_dense(
        &self,
        x: &Vector,
        t0: f64,
        mut dense: Option<&mut Vec<DenseSample>>,
    ) -> Result<(Vector, CycleOutcome)> {
        let period = self.m.period;
        self.record(&mut dense, t0, 0.0, x, 1);
        let (d, xd, flag) = if self.residual(x, 0.0) <= 0.0 {
            (0.0, x.clone(), CycleFlag::SaturatedLow)
        } else {
            let mut xi = x.clone();
            let mut found = None;
            for i in 0..EVENT_GRID {
                let ti = i as f64 * self.dt;
                let next = apply(&self.step1, &xi);
                let tn = if i + 1 == EVENT_GRID {
                    period
                } else {
                    ti + self.dt
                };
                let rn = self.residual(&next, tn);
                if rn <= 0.0 {
                    let ri = self.residual(&xi, ti);
                    let f = |t: f64| Ok(self.residual(&self.advance(&self.aug1, &xi, t - ti)?, t));
                    let d = brent(f, ti, tn, ri, rn, 1e-12 * period, 0.0)?;
                    found = Some((d, self.advance(&self.aug1, &xi, d - ti)?));
                    break;
                }
                xi = next;
                if i + 1 < EVENT_GRID {
                    self.record(&mut dense, t0, tn, &xi, 1);
                }
            }
            match found {
                Some((d, xd)) => (d, xd, CycleFlag::Normal),
                None => (period, xi, CycleFlag::SaturatedHigh),
            }
        };
        self.record(&mut dense, t0, d, &xd, 1);
        self.record(&mut dense, t0, d, &xd, 2);

        // Walk S2 on the event grid to count crossings the latch ignores.
        let mut extra = 0;
        let first = ((d / self.dt).floor() as usize + 1).min(EVENT_GRID);
        let x_end = if first >= EVENT_GRID {
            self.advance(&self.aug2, &xd, period - d)?
        } else {
            let mut xk = self.advance(&self.aug2, &xd, first as f64 * self.dt - d)?;
            let mut prev = self.residual(&xk, first as f64 * self.dt);
            for k in first..EVENT_GRID {
                self.record(&mut dense, t0, k as f64 * self.dt, &xk, 2);
                xk = apply(&self.step2, &xk);
                let r = self.residual(&xk, (k + 1) as f64 * self.dt);
                if r.signum() != prev.signum() && r != 0.0 && prev != 0.0 {
                    extra += 1;
                }
                prev = r;
            }
            xk
        };
        Ok((
            x_end,
            CycleOutcome {
                d,
                flag,
                extra_crossings: extra,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    /// Record `(t, x, y, h, stage)` on the event grid and at each switch.
    pub dense: bool,
}

/// Simulates `n_cycles` clock periods from `x_init`.
pub fn simulate(
    m: &SwitchedLinearModel,
    u: &Vector,
    x_init: &Vector,
    n_cycles: usize,
    opts: SimOptions,
) -> Result<Trajectory> {
    if x_init.len() != m.n {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, model has {}",
            x_init.len(),
            m.n
        )));
    }
    let sim = Simulator::new(m, u)?;
    let mut traj = Trajectory {
        cycle_states: Vec::with_capacity(n_cycles + 1),
        switch_times: Vec::with_capacity(n_cycles),
        flags: Vec::with_capacity(n_cycles),
        extra_crossings: 0,
        dense: opts.dense.then(Vec::new),
    };
    let mut x = x_init.clone();
    traj.cycle_states.push(x.clone());
    for n in 0..n_cycles {
        let t0 = n as f64 * m.period;
        let (next, out) = sim.step_dense(&x, t0, traj.dense.as_mut())?;
        traj.switch_times.push(out.d);
        traj.flags.push(out.flag);
        traj.extra_crossings += out.extra_crossings;
        x = next;
        traj.cycle_states.push(x.clone());
    }
    if let Some(dense) = traj.dense.as_mut() {
        let t_end = n_cycles as f64 * m.period;
        dense.push(DenseSample {
            t: t_end,
            x: x.as_slice().to_vec(),
            y: m.output(&x, u),
            h: 0.0,
            stage: 1,
        });
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    One,
    Two,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodVerdict {
    pub period: Period,
    /// Largest relative deviation between the compared samples.
    pub residual: f64,
}

/// Number of leading cycles treated as transient.
pub fn transient_cycles(total: usize) -> usize {
    (total / 2).max(32)
}

fn max_relative_gap(states: &[Vector], lag: usize) -> f64 {
    states
        .windows(lag + 1)
        .map(|w| (&w[lag] - &w[0]).norm() / w[0].norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Periodicity of the settled part of a trajectory.
pub fn detect_period(traj: &Trajectory, tol: f64) -> Result<PeriodVerdict> {
    let samples = traj.cycle_states.len();
    let skip = transient_cycles(samples);
    let settled = samples.saturating_sub(skip);
    if settled < 16 {
        return Err(Error::InsufficientCycles {
            needed: skip + 16,
            available: samples,
        });
    }
    let window = &traj.cycle_states[skip..];
    let one = max_relative_gap(window, 1);
    if one <= tol {
        return Ok(PeriodVerdict {
            period: Period::One,
            residual: one,
        });
    }
    let two = max_relative_gap(window, 2);
    if two <= tol {
        return Ok(PeriodVerdict {
            period: Period::Two,
            residual: two,
        });
    }
    Ok(PeriodVerdict {
        period: Period::Other,
        residual: one.min(two),
    })
}

/// Per-coordinate scale used to perturb and compare states of mixed units:
/// the larger of `|x⁰(0)|`, `|x⁰(d)|` and the jump between them.
pub fn state_scales(orbit: &PeriodicOrbit) -> Vector {
    let (a, b) = (&orbit.x0_0, &orbit.x0_d);
    let raw = Vector::from_fn(a.len(), |i, _| {
        a[i].abs().max(b[i].abs()).max((a[i] - b[i]).abs())
    });
    let floor = 1e-12 * raw.amax().max(f64::MIN_POSITIVE);
    raw.map(|v| v.max(floor))
}

/// Central-difference Jacobian of the one-cycle map at `orbit.x0_0`.
pub fn numeric_poincare_jacobian(
    m: &SwitchedLinearModel,
    u: &Vector,
    orbit: &PeriodicOrbit,
    h_rel: f64,
) -> Result<Matrix> {
    let sim = Simulator::new(m, u)?;
    let scales = state_scales(orbit);
    let mut jac = Matrix::zeros(m.n, m.n);
    for j in 0..m.n {
        let h = h_rel * scales[j];
        let mut plus = orbit.x0_0.clone();
        let mut minus = orbit.x0_0.clone();
        plus[j] += h;
        minus[j] -= h;
        let (xp, op) = sim.step(&plus)?;
        let (xm, om) = sim.step(&minus)?;
        for out in [op, om] {
            if out.flag != CycleFlag::Normal {
                return Err(Error::DutySaturated(match out.flag {
                    CycleFlag::SaturatedLow => crate::error::Saturation::Low,
                    _ => crate::error::Saturation::High,
                }));
            }
        }
        jac.set_column(j, &((xp - xm) / (2.0 * h)));
    }
    Ok(jac)
}

/// `‖S⁻¹(a − b)S‖ / ‖S⁻¹bS‖` with `S = diag(scales)`.
pub fn scaled_relative_error(a: &Matrix, b: &Matrix, scales: &Vector) -> f64 {
    let n = scales.len();
    let conj = |m: &Matrix| Matrix::from_fn(n, n, |i, j| m[(i, j)] * scales[j] / scales[i]);
    (conj(a) - conj(b)).norm() / conj(b).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifyBy {
    /// Spectral radius of the sampled-data Jacobian.
    Eigenvalue,
    /// Growth or decay of a small perturbation of the periodic orbit over `cycles` periods.
    Simulation { cycles: usize, perturbation: f64 },
}

impl ClassifyBy {
    pub fn simulation() -> Self {
        ClassifyBy::Simulation {
            cycles: 4000,
            perturbation: 1e-6,
        }
    }
}

fn mean_step(states: &[Vector], scales: &Vector, from: usize, len: usize) -> f64 {
    (from..from + len)
        .map(|i| (&states[i + 1] - &states[i]).component_div(scales).norm())
        .sum::<f64>()
        / len as f64
}

/// Whether the periodic orbit of `(m, u)` is unstable.
pub fn orbit_unstable(m: &SwitchedLinearModel, u: &Vector, by: ClassifyBy) -> Result<bool> {
    let orbit = solve_duty(m, u)?;
    match by {
        ClassifyBy::Eigenvalue => Ok(!classify(&jacobian_phi(m, &orbit)?)?
            .classification
            .is_stable()),
        ClassifyBy::Simulation {
            cycles,
            perturbation,
        } => {
            if cycles < 64 {
                return Err(Error::InsufficientCycles {
                    needed: 64,
                    available: cycles,
                });
            }
            let scales = state_scales(&orbit);
            let mut x0 = orbit.x0_0.clone();
            for j in 0..m.n {
                x0[j] += perturbation * scales[j] * if j % 2 == 0 { 1.0 } else { -1.0 };
            }
            let traj = simulate(m, u, &x0, cycles, SimOptions::default())?;
            let s = &traj.cycle_states;
            let first = mean_step(s, &scales, 0, 10);
            let mid = mean_step(s, &scales, cycles / 2, 10);
            let late = mean_step(s, &scales, cycles - 10, 10);
            if late > 10.0 * first {
                return Ok(true);
            }
            if late < 1e-3 * first {
                return Ok(false);
            }
            Ok(late >= mid)
        }
    }
}

/// Bisects `range` for the parameter value where the orbit changes stability.
pub fn bisect_critical<F>(build: F, range: (f64, f64), by: ClassifyBy, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<(SwitchedLinearModel, Vector)>,
{
    let unstable = |p: f64| -> Result<bool> {
        let (m, u) = build(p)?;
        orbit_unstable(&m, &u, by)
    };
    let (mut lo, mut hi) = range;
    let at_lo = unstable(lo)?;
    if unstable(hi)? == at_lo {
        return Err(Error::NoBracket(if at_lo { "unstable" } else { "stable" }));
    }
    while (hi - lo).abs() > rel_tol * 0.5 * (hi + lo).abs() {
        let mid = 0.5 * (lo + hi);
        if unstable(mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, input, CompensatorParams, PowerStageParams, Scheme};

    fn ex11() -> (SwitchedLinearModel, Vector) {
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
        (
            build_model(&ps, &CompensatorParams::proportional(Scheme::Pvmc, 8.4)).unwrap(),
            input(50.0, 12.276),
        )
    }

    #[test]
    fn one_cycle_reproduces_orbit() {
        let (m, u) = ex11();
        let orbit = solve_duty(&m, &u).unwrap();
        let (x, out) = Simulator::new(&m, &u).unwrap().step(&orbit.x0_0).unwrap();
        assert!((&x - &orbit.x0_0).norm() <= 1e-9 * orbit.x0_0.norm());
        assert!((out.d - orbit.d).abs() <= 1e-9 * m.period);
        assert_eq!(out.flag, CycleFlag::Normal);
    }

    #[test]
    fn saturated_fixed_point_is_constant() {
        let (m, _) = ex11();
        // vs = 0 and vr = 0: the origin is the S2 fixed point and y = h at t = 0.
        let u = input(0.0, 0.0);
        let traj = simulate(&m, &u, &Vector::zeros(2), 40, SimOptions::default()).unwrap();
        assert!(traj.cycle_states.iter().all(|x| x.norm() == 0.0));
        assert!(traj.flags.iter().all(|f| *f == CycleFlag::SaturatedLow));
        let v = detect_period(&traj, PERIOD_TOL);
        assert!(v.is_err());
    }

    #[test]
    fn fixed_point_has_period_one() {
        let (m, u) = ex11();
        let orbit = solve_duty(&m, &u).unwrap();
        let traj = simulate(&m, &u, &orbit.x0_0, 64, SimOptions::default()).unwrap();
        let v = detect_period(&traj, PERIOD_TOL).unwrap();
        assert_eq!(v.period, Period::One);
        assert!(v.residual < 1e-9);
        assert!(matches!(
            detect_period(
                &simulate(&m, &u, &orbit.x0_0, 40, SimOptions::default()).unwrap(),
                PERIOD_TOL
            ),
            Err(Error::InsufficientCycles { .. })
        ));
    }

    #[test]
    fn fd_jacobian_matches_closed_form() {
        let (m, u) = ex11();
        let orbit = solve_duty(&m, &u).unwrap();
        let fd = numeric_poincare_jacobian(&m, &u, &orbit, 1e-6).unwrap();
        let phi = jacobian_phi(&m, &orbit).unwrap();
        assert!(scaled_relative_error(&fd, &phi, &state_scales(&orbit)) < 1e-4);
    }

    #[test]
    fn map_without_switching_is_state_transition() {
        let (m, _) = ex11();
        let u = input(0.0, 0.0);
        let sim = Simulator::new(&m, &u).unwrap();
        let x = Vector::from_vec(vec![0.1, 1.0]);
        let e = expm(&m.a2, m.period).unwrap();
        let (base, out) = sim.step(&x).unwrap();
        assert_eq!(out.flag, CycleFlag::SaturatedLow);
        assert!((&base - &e * &x).norm() <= 1e-12 * base.norm());
        for j in 0..2 {
            let mut xp = x.clone();
            xp[j] += 1e-3;
            let col = (sim.step(&xp).unwrap().0 - &base) / 1e-3;
            assert!((col - e.column(j)).norm() <= 1e-9 * e.norm());
        }
    }

    #[test]
    fn dense_samples_follow_ramp() {
        let (m, u) = ex11();
        let orbit = solve_duty(&m, &u).unwrap();
        let traj = simulate(&m, &u, &orbit.x0_0, 2, SimOptions { dense: true }).unwrap();
        let dense = traj.dense.unwrap();
        assert!(dense.windows(2).all(|w| w[1].t >= w[0].t));
        let at_switch: Vec<_> = dense
            .iter()
            .filter(|s| (s.t - orbit.d).abs() < 1e-12)
            .collect();
        assert_eq!(at_switch.len(), 2);
        assert!((at_switch[0].y - at_switch[0].h).abs() < 1e-9 * m.vh);
        assert_eq!(traj.extra_crossings, 0);
    }

    #[test]
    fn bisection_finds_known_boundary() {
        // Proportional gain sweep on preset 11's stage: the eigenvalue boundary
        // equals the gain at which the exact boundary passes through vs = 50.
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
        let build = |kp: f64| {
            Ok((
                build_model(&ps, &CompensatorParams::proportional(Scheme::Pvmc, kp))?,
                input(50.0, 12.276),
            ))
        };
        let kp_eig = bisect_critical(build, (8.4, 40.0), ClassifyBy::Eigenvalue, 1e-6).unwrap();
        let (m, u) = build(kp_eig).unwrap();
        let rep = classify(&jacobian_phi(&m, &solve_duty(&m, &u).unwrap()).unwrap()).unwrap();
        assert!((rep.nearest_to_minus_one().unwrap() + 1.0).norm() < 1e-4);
        let kp_sim = bisect_critical(
            build,
            (8.4, 40.0),
            ClassifyBy::Simulation {
                cycles: 2000,
                perturbation: 1e-6,
            },
            1e-4,
        )
        .unwrap();
        assert!(
            (kp_sim - kp_eig).abs() < 2e-3 * kp_eig,
            "{kp_sim} vs {kp_eig}"
        );
        assert!(matches!(
            bisect_critical(build, (8.4, 9.0), ClassifyBy::Eigenvalue, 1e-6),
            Err(Error::NoBracket(_))
        ));
    }
}
