use anyhow::Context;
use rayon::prelude::*;
use subharm::closed_forms::{available, evaluate};
use subharm::error::Result as CoreResult;
use subharm::hb::{loop_g_from_model, HarmonicTable};
use subharm::model::{Scheme, SwitchedLinearModel, Topology};
use subharm::numerics::Vector;
use subharm::presets::{run_example, ExampleOptions, ExampleReport};
use subharm::sampled::{
    boundary_intersection, classify, critical_vs_approx, critical_vs_exact, jacobian_phi, s_plot,
    s_value, SteadyConstraint,
};
use subharm::sim::{
    bisect_critical, detect_period, orbit_unstable, simulate, ClassifyBy, SimOptions,
};
use subharm::steady::solve_duty;

use crate::config::{config_error, AxisSpec, RunConfig};
use crate::output::{Cell, Table};

pub const DEFAULT_DUTY_AXIS: &str = "D:0.05:0.95:181";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SteadyChoice {
    /// Exact switching condition solved for vs.
    Exact,
    /// `vs = vr/D − Vh/kp` (proportional voltage mode).
    Line,
    /// `vs = vr/D`.
    LargeGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Eigenvalue,
    Simulation,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub axis: Option<AxisSpec>,
    pub pool: rayon::ThreadPool,
}

impl Ctx {
    /// Maps `f` over `items` on the worker pool, keeping input order.
    fn par_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn duty_axis(&self) -> anyhow::Result<AxisSpec> {
        let axis = match &self.axis {
            Some(a) => a.clone(),
            None => DEFAULT_DUTY_AXIS.parse().expect("default axis parses"),
        };
        if !axis.is_duty() {
            return Err(config_error(format!(
                "this command sweeps the duty ratio; use --axis D:min:max:points, not `{}`",
                axis.name
            )));
        }
        if !(axis.min > 0.0 && axis.max <= 1.0) {
            return Err(config_error("duty axis must lie inside (0, 1]"));
        }
        Ok(axis)
    }

    /// Configurations along a parameter axis, or the base configuration alone.
    fn param_points(&self) -> anyhow::Result<Vec<(Option<f64>, RunConfig)>> {
        match &self.axis {
            None => Ok(vec![(None, self.cfg)]),
            Some(a) if a.is_duty() => Err(config_error(
                "the duty ratio is an output of this command; sweep a parameter instead",
            )),
            Some(a) => {
                self.cfg.check_param(&a.name)?;
                a.values()
                    .into_iter()
                    .map(|v| Ok((Some(v), self.cfg.with_param(&a.name, v)?)))
                    .collect()
            }
        }
    }

    fn model(&self) -> anyhow::Result<SwitchedLinearModel> {
        Ok(self.cfg.model()?)
    }

    fn axis_column(&self) -> Vec<String> {
        self.axis
            .iter()
            .filter(|a| !a.is_duty())
            .map(|a| a.name.clone())
            .collect()
    }
}

fn status(e: Option<&subharm::error::Error>) -> Cell {
    e.map_or_else(|| "ok".into(), |e| e.to_string().into())
}

/// Rows of a parameter sweep: one row per point, blanks and an error message
/// when a point fails. A single point propagates its error instead.
fn sweep_rows(
    ctx: &Ctx,
    width: usize,
    row: impl Fn(&RunConfig) -> CoreResult<Vec<Cell>> + Sync + Send,
) -> anyhow::Result<Vec<Vec<Cell>>> {
    let points = ctx.param_points()?;
    let results = ctx.par_map(&points, |(_, cfg)| row(cfg));
    if ctx.axis.is_none() {
        let mut r = results.into_iter().next().expect("one point")?;
        r.push(status(None));
        return Ok(vec![r]);
    }
    Ok(points
        .iter()
        .zip(results)
        .map(|((v, _), res)| {
            let mut out: Vec<Cell> = v.iter().map(|&v| Cell::Num(v)).collect();
            match res {
                Ok(cells) => {
                    out.extend(cells);
                    out.push(status(None));
                }
                Err(e) => {
                    out.extend(std::iter::repeat_n(Cell::Empty, width));
                    out.push(status(Some(&e)));
                }
            }
            out
        })
        .collect())
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

pub fn steady(ctx: &Ctx) -> anyhow::Result<Table> {
    let n = ctx.model()?.n;
    let mut cols = ctx.axis_column();
    cols.extend(["D".to_string(), "d".to_string()]);
    cols.extend(indexed("x0_start_", n));
    cols.extend(indexed("x0_switch_", n));
    cols.push("switching_residual".into());
    let width = cols.len() - ctx.axis_column().len();
    cols.push("status".into());
    let rows = sweep_rows(ctx, width, |cfg| {
        let (m, u) = (cfg.model()?, cfg.input());
        let o = solve_duty(&m, &u)?;
        let mut r: Vec<Cell> = vec![o.duty.into(), o.d.into()];
        r.extend(o.x0_0.iter().chain(o.x0_d.iter()).map(|&v| Cell::Num(v)));
        r.push(o.switching_residual(&m, &u).into());
        Ok(r)
    })?;
    Ok(Table {
        columns: cols,
        rows,
    })
}

/// Eigenvalues sorted by real part, then imaginary part, both descending.
fn sorted_eigenvalues(
    mut ev: Vec<subharm::numerics::Complex64>,
) -> Vec<subharm::numerics::Complex64> {
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

pub fn stability(ctx: &Ctx) -> anyhow::Result<Table> {
    let n = ctx.model()?.n;
    let mut cols = ctx.axis_column();
    cols.extend(["D", "classification", "deadbeat", "spectral_radius"].map(String::from));
    for i in 1..=n {
        cols.push(format!("eig_re_{i}"));
        cols.push(format!("eig_im_{i}"));
    }
    for i in 1..=n {
        cols.extend((1..=n).map(|j| format!("phi_eq8_{i}_{j}")));
    }
    let width = cols.len() - ctx.axis_column().len();
    cols.push("status".into());
    let rows = sweep_rows(ctx, width, |cfg| {
        let (m, u) = (cfg.model()?, cfg.input());
        let o = solve_duty(&m, &u)?;
        let rep = classify(&jacobian_phi(&m, &o)?)?;
        let class = serde_json::to_value(rep.classification).expect("enum serializes");
        let mut r: Vec<Cell> = vec![
            o.duty.into(),
            class.as_str().unwrap_or_default().into(),
            rep.deadbeat.into(),
            rep.spectral_radius().into(),
        ];
        for l in sorted_eigenvalues(rep.eigenvalues.clone()) {
            r.push(l.re.into());
            r.push(l.im.into());
        }
        for i in 0..n {
            r.extend((0..n).map(|j| Cell::Num(rep.phi[(i, j)])));
        }
        Ok(r)
    })?;
    Ok(Table {
        columns: cols,
        rows,
    })
}

fn has_integrator(s: Scheme) -> bool {
    matches!(s, Scheme::AcmcType2 | Scheme::AcmcPi | Scheme::VmcType3)
}

/// Steady-state relation used to pair a duty ratio with a source voltage.
fn steady_constraint(
    cfg: &RunConfig,
    m: &SwitchedLinearModel,
    choice: Option<SteadyChoice>,
) -> anyhow::Result<SteadyConstraint> {
    let scheme = cfg.compensator.scheme;
    let choice = choice.unwrap_or(if scheme == Scheme::Pvmc && m.topology == Topology::Buck {
        SteadyChoice::Line
    } else if has_integrator(scheme) {
        SteadyChoice::LargeGain
    } else {
        SteadyChoice::Exact
    });
    Ok(match choice {
        SteadyChoice::Exact => SteadyConstraint::Exact,
        SteadyChoice::LargeGain => SteadyConstraint::LargeGain,
        SteadyChoice::Line => {
            if scheme != Scheme::Pvmc {
                return Err(config_error("--steady line needs scheme PVMC"));
            }
            SteadyConstraint::ProportionalLine {
                kp: cfg.compensator.get("kp")?,
            }
        }
    })
}

fn exact_tag(m: &SwitchedLinearModel) -> &'static str {
    if m.topology == Topology::Boost {
        "eq19"
    } else {
        "eq13"
    }
}

pub fn boundary(
    ctx: &Ctx,
    steady: Option<SteadyChoice>,
    intersections: bool,
) -> anyhow::Result<Table> {
    let axis = ctx.duty_axis()?;
    let (cfg, m) = (ctx.cfg, ctx.model()?);
    let constraint = steady_constraint(&cfg, &m, steady)?;
    let vr = cfg.power_stage.vr;
    let tag = exact_tag(&m);
    if intersections {
        let pts = boundary_intersection(&m, vr, (axis.min, axis.max), constraint)?;
        let mut t = Table::new([
            "D".to_string(),
            format!("vs_star_{tag}_{}", constraint.equation()),
        ]);
        for p in pts {
            t.push(vec![p.duty.into(), p.vs.into()]);
        }
        return Ok(t);
    }
    let mut t = Table::new([
        "D".to_string(),
        format!("vs_star_exact_{tag}"),
        "vs_star_approx_eq16".to_string(),
        format!("steady_line_{}", constraint.equation()),
    ]);
    let rows = ctx.par_map(&axis.values(), |&duty| {
        let d = duty * m.period;
        vec![
            duty.into(),
            critical_vs_exact(&m, d, vr).ok().map(|c| c.value).into(),
            critical_vs_approx(&m, d).ok().map(|c| c.value).into(),
            constraint.source_voltage(&m, vr, duty).ok().into(),
        ]
    });
    t.rows = rows;
    Ok(t)
}

pub fn splot(ctx: &Ctx) -> anyhow::Result<Table> {
    let axis = ctx.duty_axis()?;
    let (m, u) = (ctx.model()?, ctx.cfg.input());
    let meta = s_plot(&m, &u, &[]);
    let mut t = Table::new([
        "D".to_string(),
        format!("S_{}", meta.criterion_id),
        "threshold_hdot".to_string(),
    ]);
    t.rows = ctx.par_map(&axis.values(), |&duty| {
        vec![
            duty.into(),
            s_value(&m, &u, duty).ok().into(),
            meta.threshold.into(),
        ]
    });
    Ok(t)
}

pub fn hbplot(ctx: &Ctx, steady: Option<SteadyChoice>) -> anyhow::Result<Table> {
    let axis = ctx.duty_axis()?;
    let (cfg, m) = (ctx.cfg, ctx.model()?);
    let constraint = steady_constraint(&cfg, &m, steady)?;
    let table = HarmonicTable::new(&loop_g_from_model(&m)?, m.omega_s(), cfg.hb)?;
    let vr = cfg.power_stage.vr;
    let mut t = Table::new([
        "D".to_string(),
        format!("vs_{}", constraint.equation()),
        "re_H_eq82".to_string(),
        "im_H_eq82".to_string(),
        "threshold".to_string(),
    ]);
    t.rows = ctx.par_map(&axis.values(), |&duty| {
        let vs = constraint.source_voltage(&m, vr, duty).ok();
        let h = vs.and_then(|vs| table.sum(duty).ok()?.complex().map(|h| h * (vs / m.vh)));
        vec![
            duty.into(),
            vs.into(),
            h.map(|h| h.re).into(),
            h.map(|h| h.im).into(),
            0.5.into(),
        ]
    });
    Ok(t)
}

pub fn mplot(ctx: &Ctx, steady: Option<SteadyChoice>) -> anyhow::Result<Table> {
    let axis = ctx.duty_axis()?;
    let (cfg, m) = (ctx.cfg, ctx.model()?);
    if m.topology != Topology::Buck {
        return Err(
            subharm::error::Error::Unsupported("the M plot needs a buck model".into()).into(),
        );
    }
    let constraint = steady_constraint(&cfg, &m, steady)?;
    let vr = cfg.power_stage.vr;
    let mut t = Table::new([
        "D".to_string(),
        format!("vs_{}", constraint.equation()),
        "M_eq85".to_string(),
        "threshold".to_string(),
    ]);
    t.rows = ctx.par_map(&axis.values(), |&duty| {
        let point = subharm::hb::m_plot(&m, vr, &[duty], constraint);
        let value = point.samples.first().and_then(|p| p.value);
        vec![
            duty.into(),
            constraint.source_voltage(&m, vr, duty).ok().into(),
            value.into(),
            1.0.into(),
        ]
    });
    Ok(t)
}

pub fn closed_form(ctx: &Ctx, id: &str, duty: Option<f64>) -> anyhow::Result<Table> {
    let scheme = ctx.cfg.compensator.scheme;
    let ids = available(scheme);
    if id == "list" {
        let mut t = Table::new(["equation"]);
        for id in ids {
            t.push(vec![(*id).into()]);
        }
        return Ok(t);
    }
    if !ids.contains(&id) {
        return Err(config_error(format!(
            "closed form `{id}` does not apply to scheme {scheme:?}; available: {}",
            if ids.is_empty() {
                "none".to_string()
            } else {
                ids.join(", ")
            }
        )));
    }
    if let Some(d) = duty {
        if !(d > 0.0 && d < 1.0) {
            return Err(config_error(format!("--duty must lie in (0, 1), got {d}")));
        }
    }
    let eval = |cfg: &RunConfig, d: Option<f64>| -> CoreResult<Vec<Cell>> {
        let d = match d {
            Some(d) => d,
            None => solve_duty(&cfg.model()?, &cfg.input())?.duty,
        };
        let r = evaluate(id, &cfg.power_stage, &cfg.compensator, d)?;
        let side = serde_json::to_value(r.stable_side).expect("enum serializes");
        Ok(vec![
            d.into(),
            r.value.into(),
            r.unit.into(),
            side.as_str().unwrap_or_default().into(),
            r.in_regime.into(),
        ])
    };
    let head = [
        "D".to_string(),
        format!("value_{id}"),
        "unit".into(),
        "stable_side".into(),
        "in_regime".into(),
    ];
    if let Some(axis) = ctx.axis.as_ref().filter(|a| a.is_duty()) {
        let axis = ctx.duty_axis().map(|_| axis.clone())?;
        let mut t = Table::new(head.into_iter().chain(["status".to_string()]));
        t.rows = ctx.par_map(&axis.values(), |&d| match eval(&ctx.cfg, Some(d)) {
            Ok(mut r) => {
                r.push(status(None));
                r
            }
            Err(e) => {
                let mut r = vec![Cell::Num(d)];
                r.extend(std::iter::repeat_n(Cell::Empty, 4));
                r.push(status(Some(&e)));
                r
            }
        });
        return Ok(t);
    }
    let mut cols = ctx.axis_column();
    cols.extend(head);
    let width = cols.len() - ctx.axis_column().len();
    cols.push("status".into());
    let rows = sweep_rows(ctx, width, |cfg| eval(cfg, duty))?;
    Ok(Table {
        columns: cols,
        rows,
    })
}

pub struct SimulateArgs {
    pub cycles: usize,
    pub from_rest: bool,
    pub kick: f64,
    pub per_cycle: bool,
}

pub fn simulate_cmd(ctx: &Ctx, args: &SimulateArgs) -> anyhow::Result<Table> {
    if ctx.axis.is_some() {
        return Err(config_error("simulate does not take --axis"));
    }
    if args.cycles == 0 {
        return Err(config_error("--cycles must be at least 1"));
    }
    let (m, u) = (ctx.model()?, ctx.cfg.input());
    let x0 = if args.from_rest {
        Vector::zeros(m.n)
    } else {
        solve_duty(&m, &u)
            .context("no periodic orbit to start from; try --from-rest")?
            .x0_0
            .map(|v| v * (1.0 + args.kick))
    };
    let traj = simulate(
        &m,
        &u,
        &x0,
        args.cycles,
        SimOptions {
            dense: !args.per_cycle,
        },
    )?;
    if let Ok(v) = detect_period(&traj, ctx.cfg.period_tol) {
        eprintln!(
            "period: {:?} (residual {:.3e}), saturated cycles: {}, extra crossings: {}",
            v.period,
            v.residual,
            traj.saturated_cycles(),
            traj.extra_crossings
        );
    }
    if args.per_cycle {
        let mut cols = vec!["cycle".to_string(), "t".to_string()];
        cols.extend(indexed("x", m.n));
        cols.extend(["d", "flag"].map(String::from));
        let mut t = Table::new(cols);
        for (k, (x, (d, flag))) in traj
            .cycle_states
            .iter()
            .zip(traj.switch_times.iter().zip(&traj.flags))
            .enumerate()
        {
            let mut r: Vec<Cell> = vec![Cell::Int(k as i64), (k as f64 * m.period).into()];
            r.extend(x.iter().map(|&v| Cell::Num(v)));
            let flag = serde_json::to_value(flag).expect("enum serializes");
            r.push((*d).into());
            r.push(flag.as_str().unwrap_or_default().into());
            t.push(r);
        }
        return Ok(t);
    }
    let mut cols = vec!["t".to_string()];
    cols.extend(indexed("x", m.n));
    cols.extend(["y", "h", "stage"].map(String::from));
    let mut t = Table::new(cols);
    for s in traj.dense.unwrap_or_default() {
        let mut r: Vec<Cell> = vec![s.t.into()];
        r.extend(s.x.iter().map(|&v| Cell::Num(v)));
        r.extend([s.y.into(), s.h.into(), Cell::Int(s.stage.into())]);
        t.push(r);
    }
    Ok(t)
}

pub struct FindCriticalArgs {
    pub param: String,
    pub method: Method,
    pub range: Option<(f64, f64)>,
    pub rel_tol: f64,
    pub cycles: Option<usize>,
}

fn base_value(cfg: &RunConfig, name: &str) -> Option<f64> {
    let ps = &cfg.power_stage;
    match name {
        "L" => Some(ps.l),
        "C" => Some(ps.c),
        "R" => Some(ps.r),
        "Rc" => Some(ps.rc),
        "vs" => Some(ps.vs),
        "vr" => Some(ps.vr),
        "Vh" => Some(ps.vh),
        "fs" => Some(ps.fs),
        "delta" => Some(cfg.compensator.delta()),
        _ => {
            let name: &'static str = cfg.sweepable().into_iter().find(|n| *n == name)?;
            cfg.compensator.get(name).ok()
        }
    }
}

/// Walks geometrically outward from the configured value until the verdict flips.
fn find_bracket(
    cfg: &RunConfig,
    name: &str,
    unstable: &dyn Fn(f64) -> CoreResult<bool>,
) -> anyhow::Result<(f64, f64)> {
    let p0 = base_value(cfg, name).filter(|v| *v > 0.0).ok_or_else(|| {
        config_error(format!(
            "`{name}` has no positive configured value to search from; give --range lo:hi"
        ))
    })?;
    let c0 = unstable(p0)?;
    let step = 1.25_f64;
    let (mut up, mut down) = (Some(p0), Some(p0));
    for _ in 0..40 {
        if let Some(p) = up {
            let next = p * step;
            up = match unstable(next) {
                Ok(c) if c != c0 => return Ok((p, next)),
                Ok(_) => Some(next),
                Err(_) => None,
            };
        }
        if let Some(p) = down {
            let next = p / step;
            down = match unstable(next) {
                Ok(c) if c != c0 => return Ok((next, p)),
                Ok(_) => Some(next),
                Err(_) => None,
            };
        }
        if up.is_none() && down.is_none() {
            break;
        }
    }
    Err(config_error(format!(
        "the orbit stays {} for every `{name}` tried around {p0}; give --range lo:hi",
        if c0 { "unstable" } else { "stable" }
    )))
}

pub fn find_critical(ctx: &Ctx, args: &FindCriticalArgs) -> anyhow::Result<Table> {
    let cfg = ctx.cfg;
    cfg.check_param(&args.param)?;
    let by = match args.method {
        Method::Eigenvalue => ClassifyBy::Eigenvalue,
        Method::Simulation => match (ClassifyBy::simulation(), args.cycles) {
            (ClassifyBy::Simulation { perturbation, .. }, Some(cycles)) => ClassifyBy::Simulation {
                cycles,
                perturbation,
            },
            (by, _) => by,
        },
    };
    let build = |p: f64| -> CoreResult<(SwitchedLinearModel, Vector)> {
        let mut c = cfg;
        c.apply_param(&args.param, p)?;
        Ok((c.model()?, c.input()))
    };
    let range = match args.range {
        Some(r) => r,
        None => find_bracket(&cfg, &args.param, &|p| {
            let (m, u) = build(p)?;
            orbit_unstable(&m, &u, by)
        })?,
    };
    let value = bisect_critical(build, range, by, args.rel_tol)?;
    let method = match args.method {
        Method::Eigenvalue => "eigenvalue",
        Method::Simulation => "simulation",
    };
    let mut t = Table::new([
        "param".to_string(),
        format!("critical_{}", args.param),
        "method".to_string(),
    ]);
    t.push(vec![
        args.param.as_str().into(),
        value.into(),
        method.into(),
    ]);
    Ok(t)
}

pub fn example(n: u8, rc: Option<f64>, skip_simulation: bool) -> anyhow::Result<ExampleReport> {
    Ok(run_example(
        n,
        ExampleOptions {
            rc,
            skip_simulation,
        },
    )?)
}

pub fn report_text(rep: &ExampleReport) -> String {
    use std::fmt::Write;
    let mut s = format!("Example {}: {}\n", rep.number, rep.title);
    let width = rep.checks.iter().map(|c| c.label.len()).max().unwrap_or(0);
    for c in &rep.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let computed = if c.computed.is_nan() {
            "n/a".to_string()
        } else {
            format!("{:.6}", c.computed)
        };
        let _ = write!(
            s,
            "  {verdict}  {:width$}  expected {} {}  computed {computed}",
            c.label, c.expected, c.tolerance
        );
        if let Some(e) = &c.error {
            let _ = write!(s, "  ({e})");
        }
        s.push('\n');
    }
    for n in &rep.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    let passed = rep.checks.iter().filter(|c| c.pass).count();
    let _ = writeln!(
        s,
        "{}: {passed}/{} checks",
        if rep.passed() { "PASS" } else { "FAIL" },
        rep.checks.len()
    );
    s
}

pub fn report_table(rep: &ExampleReport) -> Table {
    let mut t = Table::new(["label", "expected", "computed", "tolerance", "pass"]);
    for c in &rep.checks {
        t.push(vec![
            c.label.as_str().into(),
            c.expected.into(),
            c.computed.into(),
            c.tolerance.to_string().into(),
            c.pass.into(),
        ]);
    }
    t
}
