//! Subcommands: each writes CSV artifacts, the config echo and a manifest.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ladderfp_core::states::StateKind;
use ladderfp_core::MagDiff;

use crate::config::{GammaPairs, RunConfig};
use crate::csvout::{
    coarse_block_table, compare_table, distribution_table, eth_table, fine_block_table, format_number,
    quantum_table, rates_table, Cell, Table,
};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::session::Session;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Info,
    EvolveQuantum,
    EvolveStochastic,
    Tcl,
    FitGamma,
    Delta,
    BlockStructure,
    Eth,
    Compare,
    ReproduceFigure(u8),
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Info => "info".into(),
            Command::EvolveQuantum => "evolve-quantum".into(),
            Command::EvolveStochastic => "evolve-stochastic".into(),
            Command::Tcl => "tcl".into(),
            Command::FitGamma => "fit-gamma".into(),
            Command::Delta => "delta".into(),
            Command::BlockStructure => "block-structure".into(),
            Command::Eth => "eth".into(),
            Command::Compare => "compare".into(),
            Command::ReproduceFigure(n) => format!("reproduce-figure {n}"),
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Ok(match s {
            "info" => Command::Info,
            "evolve-quantum" => Command::EvolveQuantum,
            "evolve-stochastic" => Command::EvolveStochastic,
            "tcl" => Command::Tcl,
            "fit-gamma" => Command::FitGamma,
            "delta" => Command::Delta,
            "block-structure" => Command::BlockStructure,
            "eth" => Command::Eth,
            "compare" => Command::Compare,
            other => return Err(CliError::validation(format!("unknown subcommand '{other}'"))),
        })
    }
}

pub fn figure(n: u8) -> CliResult<Command> {
    if (1..=7).contains(&n) {
        Ok(Command::ReproduceFigure(n))
    } else {
        Err(CliError::validation(format!("figure must be 1..=7, got {n}")))
    }
}

/// Output directory, manifest and console of one run.
struct Run<'a> {
    dir: &'a Path,
    manifest: Manifest,
    log: &'a mut dyn Write,
}

impl Run<'_> {
    fn table(&mut self, name: &str, table: &Table) -> CliResult<()> {
        table.write(&self.dir.join(name))?;
        self.manifest.add_artifact(name);
        Ok(())
    }

    fn say(&mut self, line: impl AsRef<str>) -> CliResult<()> {
        writeln!(self.log, "{}", line.as_ref())?;
        Ok(())
    }
}

/// Runs `command` with `config`, writing everything into `config.out`.
pub fn run(command: Command, config: &RunConfig, log: &mut dyn Write) -> CliResult<()> {
    let dir = config.out.clone();
    fs::create_dir_all(&dir)?;
    let echo = config.to_text();
    fs::write(dir.join("config.txt"), &echo)?;
    // the output location does not change the computation, so it is not hashed
    let hashed: String = echo.lines().filter(|l| !l.starts_with("out = ")).map(|l| format!("{l}\n")).collect();
    let mut manifest = Manifest::start(&command.name(), &hashed, config.seed);
    manifest.set("convention", config.ladder.convention.name());
    manifest.add_artifact("config.txt");
    let mut run = Run {
        dir: &dir,
        manifest,
        log,
    };
    let result = match command {
        Command::Info => info(config, &mut run),
        Command::EvolveQuantum => evolve_quantum(config, &mut run),
        Command::EvolveStochastic => evolve_stochastic(config, &mut run),
        Command::Tcl => tcl(config, &mut run),
        Command::FitGamma => fit_gamma(config, &mut run),
        Command::Delta => delta(config, &mut run),
        Command::BlockStructure => Session::new(config.clone()).and_then(|s| block(&s, &mut run, true, true)),
        Command::Eth => eth(config, &mut run),
        Command::Compare => compare(config, &mut run),
        Command::ReproduceFigure(n) => reproduce(n, config, &mut run),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed (exit {}): {e}", e.exit_code()),
    };
    run.manifest.set("status", status);
    run.manifest.finish(&dir)?;
    result
}

fn info(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    run.say(format!("sites N = {}, rungs L = {}", s.sites(), s.ladder.rungs))?;
    run.say(format!("sector dimension = {}", s.basis.dim()))?;
    let mut t = Table::new(["X", "d_X"]);
    for (x, d) in s.labels().iter().zip(s.projectors.dims()) {
        run.say(format!("  d_X[{x}] = {d}"))?;
        t.push(vec![Cell::Num(x.value()), Cell::Int(d as i64)])?;
    }
    run.table("dims.csv", &t)
}

fn set_gamma(s: &Session, run: &mut Run<'_>) -> CliResult<f64> {
    let g = s.gamma()?;
    run.manifest.set("gamma_used", format_number(g.value));
    run.manifest.set("gamma_source", g.source);
    Ok(g.value)
}

fn evolve_quantum(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    let q = s.quantum_series(config.initial_state, config.initial_x, config.seed)?;
    run.say(format!("final mean = {}, final variance = {}", format_number(q.mean[q.mean.len() - 1]), format_number(q.variance[q.variance.len() - 1])))?;
    run.table("quantum_series.csv", &quantum_table(&q)?)
}

fn evolve_stochastic(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    let gamma = set_gamma(&s, run)?;
    let p0 = s.point_mass(config.initial_x)?;
    let naive = s.naive_series(&p0, gamma)?;
    run.table("stochastic_series.csv", &distribution_table(&naive)?)?;
    run.say(format!("gamma = {} ({})", format_number(gamma), s.gamma()?.source))
}

fn initial_value_table(s: &Session, run: &mut Run<'_>) -> CliResult<()> {
    let report = s.initial_value()?;
    let mut t = Table::new(["from", "to", "c0", "unit_naive_rate", "ratio"]);
    for e in &report.entries {
        t.push(vec![
            Cell::Num(e.from.value()),
            Cell::Num(e.to.value()),
            Cell::Num(e.correlation_at_zero),
            Cell::Num(e.naive_rate),
            e.ratio.map_or(Cell::Text("none".into()), Cell::Num),
        ])?;
    }
    run.table("initial_value.csv", &t)?;
    run.say(format!(
        "C(0)*gamma/R common = {} spread = {:.3e} ({})",
        format_number(report.common),
        report.spread,
        if report.pass { "constant" } else { "NOT constant" }
    ))?;
    run.say(report.explanation())
}

fn tcl(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    let (set, _) = s.tcl()?;
    run.table("rates.csv", &rates_table(set)?)?;
    initial_value_table(&s, run)?;
    let series = s.tcl_series(&s.point_mass(config.initial_x)?)?;
    run.table("tcl_series.csv", &distribution_table(&series)?)
}

fn gamma_table(fit: &ladderfp_core::tcl::GammaFit) -> CliResult<Table> {
    let mut t = Table::new(["from", "to", "unit_rate", "plateau_mean", "plateau_std", "plateau_min", "plateau_max"]);
    for p in &fit.pairs {
        t.push_nums([
            p.from.value(),
            p.to.value(),
            p.unit_rate,
            p.plateau.mean,
            p.plateau.std,
            p.plateau.min,
            p.plateau.max,
        ])?;
    }
    Ok(t)
}

fn fit_gamma(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    let mut summary = Table::new(["pairs", "gamma", "dispersion_x", "dispersion_t", "dispersion"]);
    let mut chosen = None;
    for (name, pairs) in [("leaving", GammaPairs::Leaving), ("within", GammaPairs::Within)] {
        match s.fit_gamma(pairs) {
            Ok(fit) => {
                run.say(format!(
                    "{name}: gamma = {} dispersion over X = {:.4}, over t = {:.4}",
                    format_number(fit.gamma),
                    fit.dispersion_x,
                    fit.dispersion_t
                ))?;
                summary.push(vec![
                    Cell::Text(name.into()),
                    Cell::Num(fit.gamma),
                    Cell::Num(fit.dispersion_x),
                    Cell::Num(fit.dispersion_t),
                    Cell::Num(fit.dispersion),
                ])?;
                if pairs == config.gamma_pairs {
                    chosen = Some(fit);
                }
            }
            Err(e) => run.say(format!("{name}: no plateau ({e})"))?,
        }
    }
    run.table("gamma_summary.csv", &summary)?;
    let fit = match chosen {
        Some(f) => f,
        None => s.fit_gamma(config.gamma_pairs)?,
    };
    run.manifest.set("gamma_used", format_number(fit.gamma));
    run.manifest.set("gamma_source", "fit");
    run.table("gamma.csv", &gamma_table(&fit)?)?;
    initial_value_table(&s, run)
}

fn delta_study(s: &Session, x: MagDiff, prefix: &str, run: &mut Run<'_>) -> CliResult<Vec<(String, f64)>> {
    let gamma = set_gamma(s, run)?;
    let study = s.delta_study(x)?;
    let mut t = Table::new(["class", "index", "seed", "delta"]);
    for (class, k, seed, d) in &study.rows {
        t.push(vec![Cell::Text(class.clone()), Cell::Int(*k as i64), Cell::Int(*seed as i64), Cell::Num(*d)])?;
    }
    run.table(&format!("{prefix}delta.csv"), &t)?;
    let mut m = Table::new(["t", "quantum_mean", "stochastic_mean"]);
    for k in 0..study.report.times.len() {
        m.push_nums([study.report.times[k], study.report.quantum_mean[k], study.report.stochastic_mean[k]])?;
    }
    run.table(&format!("{prefix}delta_mean.csv"), &m)?;
    let means: Vec<(String, f64)> = study.report.classes.iter().map(|c| (c.name.clone(), c.mean())).collect();
    for (name, mean) in &means {
        run.say(format!("kappa = {} gamma = {}: mean delta[{name}] = {}", s.kappa(), format_number(gamma), format_number(*mean)))?;
    }
    Ok(means)
}

fn delta(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    delta_study(&s, config.initial_x, "", run).map(|_| ())
}

fn block(s: &Session, run: &mut Run<'_>, fine: bool, coarse: bool) -> CliResult<()> {
    let r = s.block_report()?;
    if let Some(n) = &r.notice {
        run.say(n)?;
    }
    if fine {
        run.table("block_fine.csv", &fine_block_table(&r)?)?;
        let (mean, err) = r.fine.mean_and_stderr();
        run.say(format!("fine block mean = {} +/- {}", format_number(mean), format_number(err)))?;
    }
    if coarse {
        run.table("block_coarse.csv", &coarse_block_table(&r)?)?;
        let near = r.mean_sq_by_energy_difference(0.0, 1.0);
        let far = r.mean_sq_by_energy_difference(3.0, f64::INFINITY);
        let show = |v: Option<f64>| v.map_or("none".to_string(), format_number);
        run.say(format!("mean |V|^2: |dE| < 1 -> {}, |dE| > 3 -> {}", show(near), show(far)))?;
    }
    Ok(())
}

fn eth(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    let (report, trace) = s.eth()?;
    run.table("eth.csv", &eth_table(&report)?)?;
    run.say(format!(
        "window states = {}, max |<n|x|n>| = {:.3e}, mean <n|x^2|n> = {} (std {}), sector trace x^2 = {}",
        report.rows.len(),
        report.max_abs_x,
        format_number(report.mean_x2),
        format_number(report.std_x2),
        format_number(trace)
    ))
}

/// Quantum run, naive and TCL master equations from its `P_X(0)`, and their differences.
fn comparison(
    s: &Session,
    kind: StateKind,
    x: MagDiff,
    prefix: &str,
    run: &mut Run<'_>,
) -> CliResult<ladderfp_core::propagation::ObservableSeries> {
    let gamma = set_gamma(s, run)?;
    let q = s.quantum_series(kind, x, s.config.seed)?;
    let naive = s.naive_series(q.initial(), gamma)?;
    let report = ladderfp_core::analysis::compare_report(&q, &naive)?;
    run.table(&format!("{prefix}quantum.csv"), &quantum_table(&q)?)?;
    run.table(&format!("{prefix}stochastic.csv"), &distribution_table(&naive)?)?;
    run.table(&format!("{prefix}compare.csv"), &compare_table(&report)?)?;
    let delta = ladderfp_core::analysis::delta_metric(&q.times, &q.mean, &naive.times, &naive.mean())?;
    run.say(format!(
        "X0 = {x}, kappa = {}, gamma = {}: sup|dP| = {}, sup|da| = {}, sup|dvar| = {}, delta = {}",
        s.kappa(),
        format_number(gamma),
        format_number(report.sup_p),
        format_number(report.sup_a),
        format_number(report.sup_var),
        format_number(delta)
    ))?;
    Ok(q)
}

fn compare(config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    let s = Session::new(config.clone())?;
    let q0 = comparison(&s, config.initial_state, config.initial_x, "", run)?;
    let t = s.tcl_series(q0.initial())?;
    run.table("tcl_series.csv", &distribution_table(&t)?)
}

/// Figures 2/3 (and 6/7): quantum and naive series from the window states at `X = 0, 1, 2`.
fn moment_figures(s: &Session, figure: u8, run: &mut Run<'_>) -> CliResult<()> {
    for x in [0, 1, 2].map(MagDiff::from_int) {
        if s.projectors.get(x).is_none() {
            run.say(format!("X = {x} does not occur at this size; skipped"))?;
            continue;
        }
        comparison(s, StateKind::WindowMixed, x, &format!("fig{figure}_x{x}_"), run)?;
    }
    Ok(())
}

fn reproduce(n: u8, config: &RunConfig, run: &mut Run<'_>) -> CliResult<()> {
    match n {
        1 => {
            let s = Session::new(config.clone())?;
            comparison(&s, StateKind::WindowMixed, MagDiff::from_int(1), "fig1_", run).map(|_| ())
        }
        2 | 3 => moment_figures(&Session::new(config.clone())?, n, run),
        4 => block(&Session::new(config.clone())?, run, true, false),
        5 => block(&Session::new(config.clone())?, run, false, true),
        6 | 7 => {
            run.manifest.set("kappa", config.weak_kappa);
            moment_figures(&Session::with_kappa(config.clone(), config.weak_kappa)?, n, run)
        }
        _ => Err(CliError::validation(format!("figure must be 1..=7, got {n}"))),
    }
}
