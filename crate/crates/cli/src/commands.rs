use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use spinxfer::analytic::{analytic_pulse_four_spin, analytic_three_spin};
use spinxfer::dante::{dante_convert, fidelity_at_offset, offset_grid, shaped_sequence, OffsetProfile, Refocusing};
use spinxfer::grape::{
    control_mask_presets, find_crossing, grape_optimize, random_pulse, restart_rng, top_curve, top_point, GradientMode,
    GrapeConfig, GrapeResult, StepPolicy, TopCurve, TransferProblem,
};
use spinxfer::operator::Pauli;
use spinxfer::pulse_io::{read_pulse, to_csv_shape, to_json_string, PulseDocument, PulseFormat};
use spinxfer::sequence::{conventional_sequence, simulate_sequence, EventSequence};
use spinxfer::{evolve_pulse, transfer_fidelity, ControlChannel, ProductOperatorSpec, ShapedPulse, SpinSystem};

use crate::args::*;
use crate::output::{io_error, CliError, Outcome, OutputDir};
use crate::plot;

pub fn dispatch(cli: Cli, arguments: &[String], started: Instant) -> Result<Outcome, CliError> {
    let ctx = Ctx { arguments, started };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Conventional(a) => conventional(&ctx, a),
        Command::Analytic3(a) => analytic3(&ctx, a),
        Command::Analytic4(a) => analytic4(&ctx, a),
        Command::Grape(a) => grape(&ctx, a),
        Command::Top(a) => top(&ctx, a),
        Command::Dante(a) => dante(&ctx, a),
        Command::Profile(a) => profile(&ctx, a),
        Command::Plot(a) => plot_file(a),
        Command::Run { .. } => Err(CliError::Config("job files may not nest".into())),
    }
}

struct Ctx<'a> {
    arguments: &'a [String],
    started: Instant,
}

impl Ctx<'_> {
    fn finish(
        &self,
        out: OutputDir,
        command: &str,
        seed: Option<u64>,
        outcome: Outcome,
        summary: Value,
    ) -> Result<Outcome, CliError> {
        out.finish(command, self.arguments, seed, self.started, &outcome, summary)?;
        Ok(outcome)
    }
}

fn load_system(args: &SystemArgs, out: &mut OutputDir) -> Result<SpinSystem, CliError> {
    match (&args.system, &args.chain) {
        (Some(path), _) => {
            if !path.is_file() {
                return Err(CliError::Config(format!("system file {} does not exist", path.display())));
            }
            out.input(path);
            Ok(SpinSystem::load(path)?)
        }
        (None, Some(chain)) => Ok(SpinSystem::linear_chain(chain)?),
        (None, None) => Err(CliError::Config("one of --system or --chain is required".into())),
    }
}

fn transfer_specs(args: &TransferArgs, n: usize) -> Result<(ProductOperatorSpec, ProductOperatorSpec), CliError> {
    let initial = match &args.initial {
        Some(s) => ProductOperatorSpec::parse(s)?,
        None => ProductOperatorSpec::single(n, 1, Pauli::X),
    };
    let target = match &args.target {
        Some(s) => ProductOperatorSpec::parse(s)?,
        None => ProductOperatorSpec::chain_target(n),
    };
    for spec in [&initial, &target] {
        if spec.n() != n {
            return Err(CliError::Config(format!("operator {spec} does not have {n} labels")));
        }
    }
    Ok(if args.reverse { (target, initial) } else { (initial, target) })
}

fn default_transfer() -> TransferArgs {
    TransferArgs {
        initial: None,
        target: None,
        reverse: false,
    }
}

fn load_document(path: &Path, out: &mut OutputDir) -> Result<PulseDocument, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!("pulse file {} does not exist", path.display())));
    }
    out.input(path);
    Ok(read_pulse(path, PulseFormat::from_path(path))?)
}

fn document_sequence(doc: PulseDocument) -> Result<EventSequence, CliError> {
    Ok(match doc {
        PulseDocument::ShapedPulse { pulse } => shaped_sequence(&pulse)?,
        PulseDocument::Sequence { sequence, .. } => sequence,
    })
}

fn sequence_fidelity(
    seq: &EventSequence,
    system: &SpinSystem,
    initial: &ProductOperatorSpec,
    target: &ProductOperatorSpec,
) -> Result<f64, CliError> {
    let n = system.n();
    let rho0 = spinxfer::build_operator(initial, n)?;
    let c = spinxfer::build_operator(target, n)?;
    Ok(transfer_fidelity(&simulate_sequence(seq, system, &rho0)?, &c, &rho0)?)
}

fn write_pulse_files(out: &mut OutputDir, pulse: &ShapedPulse, title: &str) -> Result<(), CliError> {
    out.text("pulse.json", &to_json_string(&PulseDocument::from(pulse.clone()))?)?;
    out.text("pulse.csv", &to_csv_shape(pulse))?;
    out.text("pulse.svg", &plot::render(&plot::pulse_chart(pulse, title)))
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.base.output.out)?;
    let system = load_system(&a.base.system, &mut out)?;
    let (initial, target) = transfer_specs(&a.transfer, system.n())?;
    let seq = document_sequence(load_document(&a.pulse, &mut out)?)?;
    let fidelity = sequence_fidelity(&seq, &system, &initial, &target)?;
    let result = json!({
        "initial": initial.to_string(),
        "target": target.to_string(),
        "duration": seq.duration(),
        "fidelity": fidelity,
    });
    out.json("result.json", &result)?;
    ctx.finish(out, "simulate", None, Outcome::Success, result)
}

fn conventional(ctx: &Ctx, a: BaseArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.output.out)?;
    let system = load_system(&a.system, &mut out)?;
    let seq = conventional_sequence(&system)?;
    let (initial, target) = transfer_specs(&default_transfer(), system.n())?;
    let fidelity = sequence_fidelity(&seq, &system, &initial, &target)?;
    out.text("sequence.json", &to_json_string(&PulseDocument::from(seq.clone()))?)?;
    let result = json!({
        "n": system.n(),
        "chain_couplings": system.chain_couplings(),
        "duration": seq.duration(),
        "fidelity": fidelity,
    });
    out.json("result.json", &result)?;
    ctx.finish(out, "conventional", None, Outcome::Success, result)
}

fn chain_of(system: &SpinSystem, n: usize) -> Result<Vec<f64>, CliError> {
    if system.n() != n || !system.is_linear_chain() {
        return Err(CliError::Config(format!("expected a linear {n}-spin chain")));
    }
    Ok(system.chain_couplings())
}

fn analytic3(ctx: &Ctx, a: AnalyticArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.base.output.out)?;
    let system = load_system(&a.base.system, &mut out)?;
    let j = chain_of(&system, 3)?;
    let (pulse, solution) = analytic_three_spin(j[0], j[1], a.dt)?;
    let fidelity = TransferProblem::chain_transfer(system, pulse.channels().to_vec())?.fidelity(&pulse)?;
    write_pulse_files(&mut out, &pulse, &format!("analytic pulse, k = {:.4}", solution.k))?;
    out.json("shooting.json", &solution)?;
    let mut csv = Vec::new();
    solution.write_diagnostics_csv(&mut csv)?;
    out.text("shooting_diagnostics.csv", &String::from_utf8_lossy(&csv))?;
    let result = json!({
        "k": solution.k,
        "duration": pulse.duration(),
        "segments": pulse.segment_count(),
        "fidelity": fidelity,
        "residual": solution.residual,
        "first_integral_drift": solution.path.first_integral_drift(),
        "total_flip_rad": pulse.accumulated_flip(0),
    });
    out.json("result.json", &result)?;
    ctx.finish(out, "analytic3", None, Outcome::Success, result)
}

fn analytic4(ctx: &Ctx, a: AnalyticArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.base.output.out)?;
    let system = load_system(&a.base.system, &mut out)?;
    let j = chain_of(&system, 4)?;
    let (pulse, split) = analytic_pulse_four_spin(j[0], j[1], j[2], a.dt)?;
    let seq = split.to_sequence(a.dt)?;
    write_pulse_files(&mut out, &pulse, "analytic four-spin pulse")?;
    out.text("sequence.json", &to_json_string(&PulseDocument::from(seq))?)?;
    out.json("split.json", &split)?;
    let result = json!({
        "gamma": split.gamma,
        "first_leg_duration": split.first_leg_seconds(),
        "second_leg_duration": split.second_leg_seconds(),
        "duration": split.total_duration(),
        "sequential_duration": split.sequential_duration,
        "sequence_fidelity": split.sequence_fidelity(a.dt)?,
        "pulse_fidelity": split.pulse_fidelity(&pulse)?,
    });
    out.json("result.json", &result)?;
    ctx.finish(out, "analytic4", None, Outcome::Success, result)
}

fn grape_config(a: &OptimArgs, seed: u64) -> Result<GrapeConfig, CliError> {
    let cfg = GrapeConfig {
        segments: a.segments,
        max_iterations: a.max_iter,
        target_fidelity: a.target_fidelity,
        step: match a.fixed_step {
            Some(size) => StepPolicy::Fixed { size },
            None => StepPolicy::LineSearch,
        },
        gradient: match a.gradient {
            GradientArg::Exact => GradientMode::Exact,
            GradientArg::FirstOrder => GradientMode::FirstOrder,
        },
        restarts: a.restarts,
        seed,
        init_amplitude: a.init_amplitude,
        ..GrapeConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn problem(system: SpinSystem, a: &OptimArgs) -> Result<TransferProblem, CliError> {
    let n = system.n();
    let channels = match &a.channels {
        Some(list) => list
            .iter()
            .map(|s| ControlChannel::parse(s))
            .collect::<Result<Vec<_>, _>>()?,
        None => control_mask_presets(n, a.mask)?,
    };
    let (initial, target) = transfer_specs(&a.transfer, n)?;
    Ok(TransferProblem::new(system, initial, target, channels)?.with_bound(a.bound)?)
}

fn grape(ctx: &Ctx, a: GrapeArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.base.output.out)?;
    let seed = a.base.output.seed;
    let system = load_system(&a.base.system, &mut out)?;
    let problem = problem(system, &a.optim)?;
    let cfg = grape_config(&a.optim, seed)?;
    let init = match &a.init {
        Some(p) => Some(load_document(p, &mut out)?.into_shaped_pulse()?),
        None => None,
    };
    // The first attempt starts from the given pulse or the seed; further
    // attempts use the same restart streams as a TOP point at index 0.
    let mut best: Option<GrapeResult> = None;
    let mut attempts = 0;
    for attempt in 0..cfg.restarts.max(1) {
        let start = match (attempt, &init) {
            (0, Some(p)) => Some(p.clone()),
            (0, None) => None,
            _ => {
                let scale = cfg.init_amplitude.unwrap_or_else(|| problem.system.max_coupling());
                let mut rng = restart_rng(seed, 0, attempt);
                Some(random_pulse(&problem.channels, cfg.segments_for(a.duration), a.duration, scale, &mut rng)?)
            }
        };
        let r = grape_optimize(&problem, a.duration, &cfg, start.as_ref())?;
        attempts += 1;
        if best.as_ref().is_none_or(|b| r.fidelity > b.fidelity) {
            best = Some(r);
        }
        if best.as_ref().is_some_and(|b| b.converged()) {
            break;
        }
    }
    let best = best.expect("at least one attempt");
    write_pulse_files(&mut out, &best.pulse, &format!("GRAPE, F = {:.6}", best.fidelity))?;
    let summary = json!({
        "duration": a.duration,
        "channels": problem.channels.iter().map(|c| c.label()).collect::<Vec<_>>(),
        "segments": best.pulse.segment_count(),
        "fidelity": best.fidelity,
        "converged": best.converged(),
        "stop": best.stop,
        "iterations": best.iterations,
        "evaluations": best.evaluations,
        "attempts": attempts,
    });
    let mut result = summary.clone();
    result["history"] = json!(best.history);
    out.json("result.json", &result)?;
    let outcome = if best.converged() {
        Outcome::Success
    } else {
        Outcome::NotConverged(format!(
            "best fidelity {} below target {}",
            best.fidelity, cfg.target_fidelity
        ))
    };
    ctx.finish(out, "grape", Some(seed), outcome, summary)
}

/// `start:stop:step`, both ends included.
pub fn parse_grid(s: &str) -> Result<(f64, f64, f64, Vec<f64>), CliError> {
    let bad = || CliError::Config(format!("--t-grid expects start:stop:step, got \"{s}\""));
    let parts = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if !(start > 0.0 && stop >= start && step > 0.0 && stop.is_finite()) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(CliError::Config(format!("--t-grid has {count} points")));
    }
    Ok((start, stop, step, (0..count).map(|i| start + i as f64 * step).collect()))
}

#[derive(Serialize)]
struct PointSummary {
    duration: f64,
    fidelity: f64,
    log10_infidelity: f64,
    restarts_used: usize,
    converged: bool,
}

fn top(ctx: &Ctx, a: TopArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.base.output.out)?;
    let seed = a.base.output.seed;
    let system = load_system(&a.base.system, &mut out)?;
    let problem = problem(system, &a.optim)?;
    let cfg = grape_config(&a.optim, seed)?;
    let (start, stop, step, grid) = parse_grid(&a.t_grid)?;

    let curve = if a.descend {
        match find_crossing(&problem, start, stop, step, &cfg) {
            Ok(c) => c.curve(),
            Err(spinxfer::Error::NoFeasibleSolution { reason, .. }) => {
                let result = json!({ "crossing": null, "reason": reason });
                out.json("result.json", &result)?;
                let outcome = Outcome::NotConverged(format!("no crossing below {stop} s: {reason}"));
                return ctx.finish(out, "top", Some(seed), outcome, result);
            }
            Err(e) => return Err(e.into()),
        }
    } else if a.warm_start {
        top_curve(&problem, &grid, &cfg, true)?
    } else {
        let points = grid
            .par_iter()
            .enumerate()
            .map(|(i, &t)| top_point(&problem, t, &cfg, i, None))
            .collect::<Result<Vec<_>, _>>()?;
        TopCurve { points }
    };

    let threshold = cfg.target_fidelity;
    let crossing = curve.crossing(threshold);
    curve.write_csv(out.path("top.csv"))?;
    out.written("top.csv");
    let rows: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.duration, p.log_infidelity())).collect();
    out.text("topcurve.svg", &plot::render(&plot::top_chart(&rows, "TOP curve")))?;
    if let Some(t) = crossing {
        let p = curve.points.iter().find(|p| p.duration == t).expect("crossing point");
        out.text("crossing_pulse.json", &to_json_string(&PulseDocument::from(p.pulse.clone()))?)?;
    }
    let summary = json!({
        "channels": problem.channels.iter().map(|c| c.label()).collect::<Vec<_>>(),
        "threshold": threshold,
        "crossing": crossing,
        "grid_step": step,
        "monotonicity_violations": curve.monotonicity_violations(),
    });
    let mut result = summary.clone();
    result["points"] = json!(curve
        .points
        .iter()
        .map(|p| PointSummary {
            duration: p.duration,
            fidelity: p.fidelity,
            log10_infidelity: p.log_infidelity(),
            restarts_used: p.restarts_used,
            converged: p.converged,
        })
        .collect::<Vec<_>>());
    out.json("result.json", &result)?;
    let outcome = match crossing {
        Some(_) => Outcome::Success,
        None => Outcome::NotConverged(format!("no grid point reached F >= {threshold}")),
    };
    ctx.finish(out, "top", Some(seed), outcome, summary)
}

fn dante(ctx: &Ctx, a: DanteArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.base.output.out)?;
    let system = load_system(&a.base.system, &mut out)?;
    let n = system.n();
    let (initial, target) = transfer_specs(&a.transfer, n)?;
    let pulse = load_document(&a.pulse, &mut out)?.into_shaped_pulse()?;
    let refocusing = match a.refocusing {
        RefocusingArg::Ideal => Refocusing::Ideal,
        RefocusingArg::Finite => Refocusing::Finite,
    };
    let d = dante_convert(&pulse, a.flip_per_pulse.to_radians(), a.rf_amp, n, refocusing)?;
    let rho0 = spinxfer::build_operator(&initial, n)?;
    let c = spinxfer::build_operator(&target, n)?;
    let shaped_fidelity = transfer_fidelity(&evolve_pulse(&rho0, &system, &pulse)?, &c, &rho0)?;
    let dante_fidelity = sequence_fidelity(&d.sequence, &system, &initial, &target)?;
    let result = json!({
        "hard_pulses": d.hard_pulse_count(),
        "pulse_flips_deg": d.annotation.pulse_flips.iter().map(|f| f.to_degrees()).collect::<Vec<_>>(),
        "total_flip_deg": d.total_flip().to_degrees(),
        "refocusing_pulses": d.annotation.phase_cycle.len(),
        "follows_mlev4": d.follows_mlev4(),
        "duration": d.sequence.duration(),
        "shaped_fidelity": shaped_fidelity,
        "dante_fidelity": dante_fidelity,
    });
    out.text("dante.json", &to_json_string(&PulseDocument::from(d))?)?;
    out.json("result.json", &result)?;
    ctx.finish(out, "dante", None, Outcome::Success, result)
}

fn profile(ctx: &Ctx, a: ProfileArgs) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&a.base.output.out)?;
    let system = load_system(&a.base.system, &mut out)?;
    let n = system.n();
    if a.offset_spin == 0 || a.offset_spin > n {
        return Err(CliError::Config(format!("--offset-spin {} outside 1..={n}", a.offset_spin)));
    }
    let (initial, target) = transfer_specs(&a.transfer, n)?;
    let seq = document_sequence(load_document(&a.pulse, &mut out)?)?;
    let rho0 = spinxfer::build_operator(&initial, n)?;
    let c = spinxfer::build_operator(&target, n)?;
    let offsets = offset_grid(a.offset_range, a.steps)?;
    let fidelities = offsets
        .par_iter()
        .map(|&o| fidelity_at_offset(&seq, &system, &rho0, &c, a.offset_spin, o))
        .collect::<Result<Vec<_>, _>>()?;
    let prof = OffsetProfile {
        offset_spin: a.offset_spin,
        offsets,
        fidelities,
    };
    prof.write_csv(out.path("profile.csv"))?;
    out.written("profile.csv");
    out.json("profile.json", &prof)?;
    let rows: Vec<(f64, f64)> = prof.offsets.iter().copied().zip(prof.fidelities.iter().copied()).collect();
    let title = format!("offset profile, spin {}", a.offset_spin);
    out.text("profile.svg", &plot::render(&plot::profile_chart(&rows, &title)))?;
    let min = prof.fidelities.iter().copied().fold(f64::INFINITY, f64::min);
    let max = prof.fidelities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let summary = json!({
        "offset_spin": a.offset_spin,
        "offset_range": a.offset_range,
        "steps": a.steps,
        "min_fidelity": min,
        "max_fidelity": max,
    });
    ctx.finish(out, "profile", None, Outcome::Success, summary)
}

fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_error(path, e))?;
    let headers = rdr.headers().map_err(|e| io_error(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: no column \"{name}\"", path.display())))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let field = |i: usize| {
            rec.get(i).and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| {
                CliError::Config(format!("{}: line {}: field {} is not a number", path.display(), line + 2, i + 1))
            })
        };
        rows.push((field(xi)?, field(yi)?));
    }
    Ok(rows)
}

fn plot_file(a: PlotArgs) -> Result<Outcome, CliError> {
    if !a.input.is_file() {
        return Err(CliError::Config(format!("{} does not exist", a.input.display())));
    }
    let chart = match a.kind {
        PlotKind::Pulse => {
            let pulse = read_pulse(&a.input, PulseFormat::from_path(&a.input))?.into_shaped_pulse()?;
            plot::pulse_chart(&pulse, "pulse")
        }
        PlotKind::Topcurve => plot::top_chart(&read_columns(&a.input, "t_p", "log10_infidelity")?, "TOP curve"),
        PlotKind::Profile => plot::profile_chart(&read_columns(&a.input, "offset_hz", "fidelity")?, "offset profile"),
    };
    let output = a.output.unwrap_or_else(|| a.input.with_extension("svg"));
    std::fs::write(&output, plot::render(&chart)).map_err(|e| io_error(&output, e))?;
    Ok(Outcome::Success)
}
