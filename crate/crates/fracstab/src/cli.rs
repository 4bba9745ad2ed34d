//! Command-line front end: system-file ingestion, the four workflows
//! (expand, stability, synthesize, simulate), machine-readable reports,
//! and plot emission.
//!
//! Exit codes compose in scripts: 0 stable/success, 1 unstable/
//! infeasible/diverged, 2 input or usage error, 3 inconclusive solve,
//! 4 internal inconsistency (method disagreement, recovery or
//! verification failure).

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::document::{write_atomic, SystemDocument};
use crate::error::Error;
use crate::lmi::{build_stability_lmi, lmi_stability_check, LmiOptions, LmiStability};
use crate::plot::{eigenvalue_svg, trajectory_svg};
use crate::report::{
    AnalysisReport, ExpandedReport, LiftingReport, LmiSection, SimulationReport, SynthesisReport,
    TimingReport, VerdictReport,
};
use crate::sim::{simulate_closed_loop, simulate_commensurate, SimConfig, SimError, Trajectory};
use crate::spectral::argument_stability_test;
use crate::synthesis::{build_synthesis_lmi, synthesize, SynthesisOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_INCONSISTENT: i32 = 4;

/// Spectral margins this close to zero do not raise the inconsistency
/// alarm when the two stability methods disagree.
const DISAGREEMENT_MARGIN_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "fracstab",
    version,
    about = "Stability analysis and output-feedback stabilization of fractional-order \
             LTI systems with mixed derivative orders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodFlag {
    Spectral,
    Lmi,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeFlag {
    Explicit,
    Implicit,
}

#[derive(Subcommand)]
pub enum Command {
    /// Lift a multi-order plant to its commensurate single-order realization
    Expand {
        /// System document (JSON)
        input: PathBuf,
        /// Write the report to a file as well as stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide asymptotic stability (spectral sector test and/or LMI test)
    Stability {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodFlag::Both)]
        method: MethodFlag,
        /// Semidefinite margin standing in for strict inequalities
        #[arg(long)]
        margin: Option<f64>,
        /// Infinity-norm cap on scalar LMI variables
        #[arg(long)]
        bound: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dump the assembled LMI as plain text for external-solver debugging
        #[arg(long)]
        dump_lmi: Option<PathBuf>,
    },
    /// Synthesize a fixed-order dynamic output-feedback stabilizer
    Synthesize {
        input: PathBuf,
        /// Controller order (0 = static output feedback)
        #[arg(long, default_value_t = 0)]
        nc: usize,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        bound: Option<f64>,
        /// Write a document with the plant and the synthesized controller
        #[arg(long)]
        controller_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_lmi: Option<PathBuf>,
    },
    /// Simulate the lifted dynamics (CSV to stdout unless --csv is given)
    Simulate {
        input: PathBuf,
        /// Step size in seconds
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Final time in seconds
        #[arg(long, default_value_t = 20.0)]
        t_final: f64,
        /// Close the loop with the document's controller block
        #[arg(long)]
        closed_loop: bool,
        /// Stepping rule; implicit removes the explicit step restriction
        /// for stiff closed loops
        #[arg(long, value_enum, default_value_t = SchemeFlag::Explicit)]
        scheme: SchemeFlag,
        /// Write the trajectory CSV here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Base path for SVG plots (<base>.states.svg, <base>.eigenvalues.svg)
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Write the JSON report to a file
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run_from_args() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    let started = Instant::now();
    let outcome = match cli.command {
        Command::Expand { input, out } => cmd_expand(&input, out.as_deref(), started),
        Command::Stability {
            input,
            method,
            margin,
            bound,
            out,
            dump_lmi,
        } => cmd_stability(
            &input,
            method,
            lmi_options(margin, bound),
            out.as_deref(),
            dump_lmi.as_deref(),
            started,
        ),
        Command::Synthesize {
            input,
            nc,
            margin,
            bound,
            controller_out,
            out,
            dump_lmi,
        } => cmd_synthesize(
            &input,
            nc,
            lmi_options(margin, bound),
            controller_out.as_deref(),
            out.as_deref(),
            dump_lmi.as_deref(),
            started,
        ),
        Command::Simulate {
            input,
            step,
            t_final,
            closed_loop,
            scheme,
            csv,
            plot,
            out,
        } => cmd_simulate(
            &input,
            step,
            t_final,
            closed_loop,
            scheme,
            csv.as_deref(),
            plot.as_deref(),
            out.as_deref(),
            started,
        ),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            classify_error(&e)
        }
    }
}

fn classify_error(e: &Error) -> i32 {
    match e {
        Error::SynthesisInfeasible { .. } => EXIT_NEGATIVE,
        Error::SolverInconclusive(_) => EXIT_INCONCLUSIVE,
        Error::RecoveryFailure(_) | Error::VerificationFailure(_) | Error::Inconsistency(_) => {
            EXIT_INCONSISTENT
        }
        _ => EXIT_ERROR,
    }
}

fn lmi_options(margin: Option<f64>, bound: Option<f64>) -> LmiOptions {
    let mut opts = LmiOptions::default();
    if let Some(m) = margin {
        opts.margin = m;
    }
    if let Some(b) = bound {
        opts.variable_bound = b;
    }
    opts
}

fn emit_report(
    report: &mut AnalysisReport,
    started: Instant,
    out: Option<&Path>,
) -> crate::Result<()> {
    report.timing = TimingReport {
        total_ms: started.elapsed().as_millis(),
    };
    let text = report.to_json_pretty();
    println!("{text}");
    if let Some(path) = out {
        write_atomic(path, format!("{text}\n").as_bytes())?;
    }
    Ok(())
}

fn cmd_expand(input: &Path, out: Option<&Path>, started: Instant) -> crate::Result<i32> {
    let doc = SystemDocument::load(input)?;
    let system = doc.to_system()?;
    let lifted = system.lift()?;
    let mut report = AnalysisReport::new(doc, LiftingReport::from_realization(&lifted));
    report.expanded = Some(ExpandedReport::from_realization(&lifted));
    emit_report(&mut report, started, out)?;
    Ok(EXIT_OK)
}

fn cmd_stability(
    input: &Path,
    method: MethodFlag,
    opts: LmiOptions,
    out: Option<&Path>,
    dump_lmi: Option<&Path>,
    started: Instant,
) -> crate::Result<i32> {
    let doc = SystemDocument::load(input)?;
    let system = doc.to_system()?;
    let lifted = system.lift()?;
    let subunit = lifted.alpha_c().value() < 1.0;

    if method == MethodFlag::Lmi && !subunit {
        return Err(Error::UnsupportedOrderRange(
            lifted.alpha_c().decimal_string(),
        ));
    }
    if let Some(path) = dump_lmi {
        if subunit {
            let problem = build_stability_lmi(lifted.a_big(), lifted.alpha_c(), opts)?;
            write_atomic(path, problem.dump_text().as_bytes())?;
        }
    }

    let mut report = AnalysisReport::new(doc, LiftingReport::from_realization(&lifted));

    let spectral = if method != MethodFlag::Lmi {
        let verdict = argument_stability_test(lifted.a_big(), lifted.alpha_c())?;
        report.spectral = Some(VerdictReport::from_verdict(&verdict));
        Some(verdict)
    } else {
        None
    };

    let lmi = if method != MethodFlag::Spectral {
        if subunit {
            match lmi_stability_check(&system, opts)? {
                LmiStability::Decided(verdict) => {
                    report.lmi = Some(LmiSection {
                        status: if verdict.stable {
                            "feasible"
                        } else {
                            "infeasible"
                        }
                        .into(),
                        verdict: Some(VerdictReport::from_verdict(&verdict)),
                        diagnostic: String::new(),
                    });
                    Some(Ok(verdict))
                }
                LmiStability::Inconclusive { diagnostic } => {
                    report.lmi = Some(LmiSection {
                        status: "inconclusive".into(),
                        verdict: None,
                        diagnostic: diagnostic.clone(),
                    });
                    Some(Err(diagnostic))
                }
            }
        } else {
            let diagnostic = format!(
                "base order {} is not below 1; the LMI criterion does not apply, use the \
                 spectral test",
                lifted.alpha_c()
            );
            report.lmi = Some(LmiSection {
                status: "inconclusive".into(),
                verdict: None,
                diagnostic: diagnostic.clone(),
            });
            Some(Err(diagnostic))
        }
    } else {
        None
    };

    emit_report(&mut report, started, out)?;

    match (spectral, lmi) {
        (Some(sv), None) => Ok(if sv.stable { EXIT_OK } else { EXIT_NEGATIVE }),
        (None, Some(Ok(lv))) => Ok(if lv.stable { EXIT_OK } else { EXIT_NEGATIVE }),
        (None, Some(Err(diagnostic))) => {
            eprintln!("inconclusive: {diagnostic}");
            Ok(EXIT_INCONCLUSIVE)
        }
        (Some(sv), Some(Ok(lv))) => {
            if sv.stable != lv.stable && sv.margin.abs() > DISAGREEMENT_MARGIN_TOLERANCE {
                eprintln!(
                    "internal inconsistency: spectral test says stable={} (margin {:.3e}) \
                     but the LMI test says stable={}",
                    sv.stable, sv.margin, lv.stable
                );
                return Ok(EXIT_INCONSISTENT);
            }
            Ok(if sv.stable { EXIT_OK } else { EXIT_NEGATIVE })
        }
        (Some(sv), Some(Err(diagnostic))) => {
            eprintln!("note: LMI leg inconclusive ({diagnostic}); spectral verdict applies");
            Ok(if sv.stable { EXIT_OK } else { EXIT_NEGATIVE })
        }
        (None, None) => unreachable!("at least one method always runs"),
    }
}

fn cmd_synthesize(
    input: &Path,
    nc: usize,
    opts: LmiOptions,
    controller_out: Option<&Path>,
    out: Option<&Path>,
    dump_lmi: Option<&Path>,
    started: Instant,
) -> crate::Result<i32> {
    let doc = SystemDocument::load(input)?;
    let system = doc.to_system()?;
    if system.input_dim() == 0 || system.output_dim() == 0 {
        return Err(Error::Document(
            "synthesis requires the document to carry \"B\" and \"C\"".into(),
        ));
    }
    let lifted = system.lift()?;
    if let Some(path) = dump_lmi {
        let (problem, _) = build_synthesis_lmi(
            lifted.a_big(),
            lifted.b_big(),
            lifted.c_big(),
            nc,
            lifted.alpha_c(),
            opts,
        )?;
        write_atomic(path, problem.dump_text().as_bytes())?;
    }

    let synth_opts = SynthesisOptions {
        lmi: opts,
        ..SynthesisOptions::default()
    };
    let result = synthesize(&system, nc, &synth_opts)?;

    let mut report = AnalysisReport::new(doc, LiftingReport::from_realization(&lifted));
    report.synthesis = Some(SynthesisReport::from_result(&result));
    emit_report(&mut report, started, out)?;

    if let Some(path) = controller_out {
        let ctrl_doc = SystemDocument::from_system(&system).with_controller(&result.controller);
        write_atomic(path, format!("{}\n", ctrl_doc.to_json_pretty()).as_bytes())?;
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    input: &Path,
    step: f64,
    t_final: f64,
    closed_loop: bool,
    scheme: SchemeFlag,
    csv: Option<&Path>,
    plot: Option<&Path>,
    out: Option<&Path>,
    started: Instant,
) -> crate::Result<i32> {
    let doc = SystemDocument::load(input)?;
    let system = doc.to_system()?;
    let mut config = SimConfig::new(step, t_final)?;
    if scheme == SchemeFlag::Implicit {
        config = config.implicit();
    }

    let (sim_outcome, lifted_for_plot) = if closed_loop {
        let controller = doc.controller_realization()?.ok_or_else(|| {
            Error::Document("--closed-loop requires a \"controller\" block in the document".into())
        })?;
        let augmented = crate::synthesis::assemble_closed_loop(&system, &controller)?;
        let lifted = augmented.lift()?;
        (simulate_closed_loop(&system, &controller, &config), lifted)
    } else {
        let lifted = system.lift()?;
        let l = system.input_dim();
        let zero = move |_t: f64| nalgebra::DVector::<f64>::zeros(l);
        (
            simulate_commensurate(&lifted, &zero, &config),
            system.lift()?,
        )
    };

    let (trajectory, diverged_at) = match sim_outcome {
        Ok(t) => (t, None),
        Err(SimError::Diverged { partial, t }) => (partial, Some(t)),
        Err(SimError::Other(e)) => return Err(e),
    };

    let csv_text = render_csv(&trajectory, diverged_at)?;
    match csv {
        Some(path) => write_atomic(path, csv_text.as_bytes())?,
        None => print!("{csv_text}"),
    }

    if let Some(base) = plot {
        let states_path = plot_path(base, "states");
        write_atomic(
            &states_path,
            trajectory_svg(&trajectory, "lifted pseudo-states").as_bytes(),
        )?;
        let eigs = crate::spectral::eigenvalues(lifted_for_plot.a_big())?;
        let boundary = lifted_for_plot.alpha_c().value() * std::f64::consts::FRAC_PI_2;
        let eig_path = plot_path(base, "eigenvalues");
        write_atomic(
            &eig_path,
            eigenvalue_svg(&eigs, boundary, "lifted spectrum and sector boundary").as_bytes(),
        )?;
    }

    let final_norm = trajectory
        .states
        .row(trajectory.times.len() - 1)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut report = AnalysisReport::new(doc, LiftingReport::from_realization(&lifted_for_plot));
    report.simulation = Some(SimulationReport {
        step,
        t_final,
        closed_loop,
        samples: trajectory.times.len(),
        diverged: diverged_at.is_some(),
        diverged_at,
        final_state_norm: final_norm,
    });
    report.timing = TimingReport {
        total_ms: started.elapsed().as_millis(),
    };
    let text = report.to_json_pretty();
    if csv.is_some() {
        println!("{text}");
    }
    if let Some(path) = out {
        write_atomic(path, format!("{text}\n").as_bytes())?;
    }

    Ok(if diverged_at.is_some() {
        EXIT_NEGATIVE
    } else {
        EXIT_OK
    })
}

fn render_csv(trajectory: &Trajectory, diverged_at: Option<f64>) -> crate::Result<String> {
    let mut buf = Vec::new();
    trajectory.to_csv(&mut buf).map_err(Error::Io)?;
    let mut text = String::from_utf8(buf).expect("CSV is ASCII");
    if let Some(t) = diverged_at {
        text.push_str(&format!(
            "# diverged at t = {t:.9e}; trajectory truncated\n"
        ));
    }
    Ok(text)
}

fn plot_path(base: &Path, kind: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let stem = stem.strip_suffix(".svg").unwrap_or(stem);
    base.with_file_name(format!("{stem}.{kind}.svg"))
}
