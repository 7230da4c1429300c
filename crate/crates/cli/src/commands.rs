//! Single-computation subcommands.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use mfldp::ldp::{local_rate, local_rate_primal, minimize_action_with, path_action, quasipotential as ldp_quasipotential, MinimizeOptions};
use mfldp::lln::integrate_lln;
use mfldp::model::{validate_model, LatticePoint, PiecewiseLinearPath};
use mfldp::rates::rate_estimate_report;
use mfldp::simulate::{gillespie_run, SimStream};
use mfldp::structure::{check_simjumps, check_single_ergodic, check_ue, is_k_ergodic, SingleMatrix};

use crate::emit::{coord_headers, floats, fmt_float, json_string, to_value, write_output, Csv};
use crate::{parse_list, parse_point, CliError, Context, Format, ModelArgs};

fn emit_json(ctx: &Context, command: &str, args: &impl Serialize, mut report: Value, out: Option<&Path>) -> Result<(), CliError> {
    report["config"] = ctx.config(command, args)?;
    write_output(out, &json_string(&report))
}

fn path_csv(path: &PiecewiseLinearPath) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(coord_headers(path.d()));
    let mut csv = Csv::new(&header);
    for (t, k) in path.times().iter().zip(path.knots()) {
        let mut row = vec![fmt_float(*t)];
        row.extend(floats(k.coords()));
        csv.row(&row);
    }
    csv.into_string()
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of particles.
    #[arg(long)]
    pub n: u32,
    /// Initial point; the nearest lattice point is used.
    #[arg(long)]
    pub x0: String,
    /// Horizon.
    #[arg(long)]
    pub t: f64,
    /// Random stream id.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// CSV columns: `t,direction,x1..xd`; the first row is the initial state
/// with an empty direction.
pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    if !(a.t > 0.0) || !a.t.is_finite() {
        return Err(CliError::Usage("--t must be positive".into()));
    }
    let x0 = LatticePoint::nearest(&parse_point("--x0", &a.x0, ctx.table.d())?, a.n);
    let s = gillespie_run(&ctx.table, &x0, a.t, &mut SimStream::new(ctx.seed, a.stream))?;
    match a.format {
        Format::Csv => {
            let mut header = vec!["t".to_string(), "direction".to_string()];
            header.extend(coord_headers(s.d));
            let mut csv = Csv::new(&header);
            for k in 0..s.times.len() {
                let dir = if k == 0 { String::new() } else { s.directions[k - 1].to_string() };
                let mut row = vec![fmt_float(s.times[k]), dir];
                row.extend(floats(&s.coords(k)));
                csv.row(&row);
            }
            write_output(a.out.as_deref(), &csv.into_string())
        }
        Format::Json => emit_json(ctx, "simulate", a, to_value(&s)?, a.out.as_deref()),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct LlnArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub x0: String,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = mfldp::lln::DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// CSV columns: `t,x1..xd`.
pub fn lln(ctx: &Context, a: &LlnArgs) -> Result<(), CliError> {
    let x0 = parse_point("--x0", &a.x0, ctx.table.d())?;
    let traj = integrate_lln(&ctx.table, &x0, a.t, a.dt)?;
    match a.format {
        Format::Csv => {
            let mut header = vec!["t".to_string()];
            header.extend(coord_headers(x0.d()));
            let mut csv = Csv::new(&header);
            for (t, p) in traj.times.iter().zip(&traj.points) {
                let mut row = vec![fmt_float(*t)];
                row.extend(floats(p.coords()));
                csv.row(&row);
            }
            write_output(a.out.as_deref(), &csv.into_string())
        }
        Format::Json => emit_json(ctx, "lln", a, to_value(&traj)?, a.out.as_deref()),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub x: String,
    /// Velocity, comma-separated, summing to zero.
    #[arg(long = "beta-vec", allow_hyphen_values = true)]
    pub beta_vec: String,
    /// Use the primal (flow) solver.
    #[arg(long)]
    pub primal: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn rate(ctx: &Context, a: &RateArgs) -> Result<(), CliError> {
    let x = parse_point("--x", &a.x, ctx.table.d())?;
    let beta = parse_list("--beta-vec", &a.beta_vec)?;
    if beta.len() != x.d() {
        return Err(CliError::Usage(format!("--beta-vec needs {} entries", x.d())));
    }
    let r = if a.primal {
        local_rate_primal(&ctx.table, &x, &beta)?
    } else {
        local_rate(&ctx.table, &x, &beta)?
    };
    let mut report = to_value(&r)?;
    report["finite"] = json!(r.is_finite());
    report["x"] = json!(x.coords());
    report["beta"] = json!(beta);
    report["directions"] = json!(ctx.table.directions().iter().map(|e| e.v.delta().to_vec()).collect::<Vec<_>>());
    emit_json(ctx, "rate", a, report, a.out.as_deref())
}

#[derive(Debug, Args, Serialize)]
pub struct ActionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV path file with columns `t,x1..xd`.
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_path(file: &Path, d: usize) -> Result<PiecewiseLinearPath, CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CliError::Usage("--path file is empty".into()))?;
    if header.split(',').count() != d + 1 {
        return Err(CliError::Usage(format!("--path needs columns t,x1..x{d}")));
    }
    let mut times = Vec::new();
    let mut knots = Vec::new();
    for line in lines {
        let row = parse_list("--path", line)?;
        if row.len() != d + 1 {
            return Err(CliError::Usage(format!("--path row `{line}` has the wrong width")));
        }
        times.push(row[0]);
        knots.push(row[1..].to_vec());
    }
    Ok(PiecewiseLinearPath::from_coords(times, knots)?)
}

pub fn action(ctx: &Context, a: &ActionArgs) -> Result<(), CliError> {
    let path = read_path(&a.path, ctx.table.d())?;
    let r = path_action(&ctx.table, &path)?;
    let mut report = to_value(&r)?;
    report["finite"] = json!(r.value.is_finite());
    emit_json(ctx, "action", a, report, a.out.as_deref())
}

#[derive(Debug, Args, Serialize)]
pub struct MinimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub x0: String,
    #[arg(long)]
    pub xt: String,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = mfldp::ldp::DEFAULT_KNOTS)]
    pub knots: usize,
    /// Also write the minimizing path as CSV.
    #[arg(long)]
    pub path_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn minimize(ctx: &Context, a: &MinimizeArgs) -> Result<(), CliError> {
    let d = ctx.table.d();
    let x0 = parse_point("--x0", &a.x0, d)?;
    let xt = parse_point("--xt", &a.xt, d)?;
    if a.knots < 2 {
        return Err(CliError::Usage("--knots must be at least 2".into()));
    }
    let opts = MinimizeOptions {
        knots: a.knots,
        ..MinimizeOptions::default()
    };
    let r = minimize_action_with(&ctx.table, &x0, &xt, a.t, &opts)?;
    if let Some(p) = &a.path_out {
        write_output(Some(p), &path_csv(&r.path))?;
    }
    emit_json(ctx, "minimize", a, to_value(&r)?, a.out.as_deref())
}

#[derive(Debug, Args, Serialize)]
pub struct QuasipotentialArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    /// Also write the best path (on its own horizon) as CSV.
    #[arg(long)]
    pub path_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn quasipotential(ctx: &Context, a: &QuasipotentialArgs) -> Result<(), CliError> {
    let d = ctx.table.d();
    let x = parse_point("--x", &a.x, d)?;
    let y = parse_point("--y", &a.y, d)?;
    let r = ldp_quasipotential(&ctx.table, &x, &y)?;
    if let Some(p) = &a.path_out {
        write_output(Some(p), &path_csv(&r.native_path()?))?;
    }
    emit_json(ctx, "quasipotential", a, to_value(&r)?, a.out.as_deref())
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Exit with status 1 when an assumption fails.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Structural report; `assumptions_hold` covers rate validity, uniform
/// positivity, K-ergodicity and the simultaneous-jump condition.
pub fn structure_report(ctx: &Context) -> Value {
    let spec = &ctx.spec;
    let findings = validate_model(spec);
    let kerg = is_k_ergodic(spec);
    let g1 = check_single_ergodic(spec, SingleMatrix::Single);
    let g2 = check_single_ergodic(spec, SingleMatrix::Effective);
    let ue = check_ue(spec);
    let sim = check_simjumps(spec);
    let estimates = rate_estimate_report(spec);
    let holds = findings.is_empty() && kerg.ergodic && ue.ok && sim.ok;
    json!({
        "assumptions_hold": holds,
        "validity": findings,
        "k_ergodic": kerg.ergodic,
        "k_ergodic_certificates": kerg.closures,
        "g1": g1.ergodic,
        "g1_counterexample": g1.counterexample,
        "g2": g2.ergodic,
        "g2_counterexample": g2.counterexample,
        "ue": ue.ok,
        "ue_report": ue,
        "simjumps": sim.ok,
        "simjumps_report": sim,
        "rate_estimates": estimates,
    })
}

pub fn check(ctx: &Context, a: &CheckArgs) -> Result<(), CliError> {
    let report = structure_report(ctx);
    let holds = report["assumptions_hold"].as_bool().unwrap_or(false);
    emit_json(ctx, "check", a, report, a.out.as_deref())?;
    if a.strict && !holds {
        return Err(CliError::Failed("structural assumptions fail".into()));
    }
    Ok(())
}
