//! Command line front end for the chainlab toolkit.
//!
//! Exit codes: 0 when the command succeeds and any verdict is positive,
//! 2 when the command succeeds but its verdict is negative (growing
//! reciprocity excess, a chain outside the positive class, ergodic
//! classes disagreeing with the flow graph, a violated bound), 1 on
//! any error. All output is deterministic for fixed inputs; the
//! `CHAINLAB_THREADS` environment variable sizes the thread pool
//! without affecting results.

use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand};

use chainlab::absolute_probability::{aps_backward, class_pstar_verdict};
use chainlab::bounds::{eta_n, verify_product_lower_bound_log, EtaParams};
use chainlab::chain_core::{
    deviation_from_stochasticity, strong_aperiodicity_gamma, ChainWindow, Extension, Stochasticity,
    TOL_STOCH,
};
use chainlab::continuous_time::{
    ct_reciprocity_beta, load_ct_chain, sample_discrete, transition, uniform_grid,
};
use chainlab::dynamics::{contraction_check, epoch_times, simulate, FlowMode};
use chainlab::error::Error;
use chainlab::flow_graph::{build_flow_graph, ergodic_classes};
use chainlab::format::{format_f64, load_chain, write_chain_spec};
use chainlab::random_chains::{generate, parse_family, CounterRng, GeneratorSpec};
use chainlab::reciprocity::{approximate_reciprocity_beta, cut_balance_alpha};
use chainlab::Result;

/// Relative growth of the reciprocity excess between half and full
/// horizon above which the excess is judged unbounded.
const GROWTH_FRACTION: f64 = 0.1;
const GROWTH_SLACK: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "chainlab",
    version,
    about = "Analysis of time-varying stochastic chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where a discrete chain comes from: a file, or a seeded family.
#[derive(Args)]
struct Source {
    /// Chain file to analyze.
    #[arg(long, conflicts_with_all = ["family", "params", "seed", "n"])]
    input: Option<PathBuf>,
    /// Random family name, e.g. gossip-pairs.
    #[arg(long)]
    family: Option<String>,
    /// Family parameters, comma separated key=value pairs.
    #[arg(long, default_value = "")]
    params: String,
    /// Seed for the family generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dimension for the family generator.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Stored window length for the family generator.
    #[arg(long, default_value_t = 100)]
    count: usize,
}

impl Source {
    fn load(&self) -> Result<ChainWindow> {
        match (&self.input, &self.family) {
            (Some(path), None) => load_chain(path),
            (None, Some(name)) => {
                let family = parse_family(name, &self.params)?;
                let spec = GeneratorSpec::new(family, self.n, self.seed)?;
                generate(&spec, self.count)
            }
            (None, None) => Err(Error::Parse(
                "either --input or --family must be given".into(),
            )),
            (Some(_), Some(_)) => Err(Error::Parse(
                "--input and --family are mutually exclusive".into(),
            )),
        }
    }
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Output {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(path) => {
                std::fs::write(path, text)?;
                Ok(())
            }
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a chain and report its shape and step classification.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Certify the windowed reciprocity inequality and judge growth.
    Reciprocity {
        #[command(flatten)]
        source: Source,
        /// Reciprocity weight in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        p0: f64,
        /// Steps to scan from the chain start.
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Propagate an absolute probability vector backward from a
    /// terminal condition.
    Aps {
        #[command(flatten)]
        source: Source,
        /// Terminal time offset from the chain start.
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// Terminal vector: `uniform` or comma separated entries.
        #[arg(long, default_value = "uniform")]
        terminal: String,
        #[command(flatten)]
        output: Output,
    },
    /// Probe membership in the uniformly positive class.
    Pstar {
        #[command(flatten)]
        source: Source,
        /// Reciprocity weight in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        p0: f64,
        /// Base horizon; the probe also inspects 2x and 4x.
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Accumulate cross weights into the truncated flow graph.
    Flowgraph {
        #[command(flatten)]
        source: Source,
        /// Steps to accumulate.
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// Edge presence threshold.
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Group agents into ergodic classes and compare with the flow
    /// graph components.
    Classes {
        #[command(flatten)]
        source: Source,
        /// Product length used for the grouping.
        #[arg(long, default_value_t = 400)]
        horizon: usize,
        /// Row distance tolerance.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Run the averaging dynamics from an initial state.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Initial state, comma separated entries.
        #[arg(long, conflicts_with = "random_seed")]
        x0: Option<String>,
        /// Draw the initial state uniformly from [0, 1]^n instead.
        #[arg(long)]
        random_seed: Option<u64>,
        /// Steps to run.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Measure epoch contraction of the quadratic comparison function
    /// against the guaranteed factor.
    Rate {
        #[command(flatten)]
        source: Source,
        /// Horizon the epochs are selected within.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        /// Flow level that closes an epoch.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Hypothesis constant in the guaranteed factor.
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        /// Epoch flow quantity: cross-flow or principal-block.
        #[arg(long, default_value = "cross-flow")]
        mode: String,
        /// Random starts to try.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Seed for the random starts.
        #[arg(long, default_value_t = 0)]
        trial_seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Evaluate the constructive diagonal lower bound, optionally
    /// verifying it against a chain.
    Bound {
        /// Dimension the bound is taken at.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Strong aperiodicity coefficient in (0, 1).
        #[arg(long)]
        gamma: f64,
        /// Reciprocity weight in (0, 1).
        #[arg(long, default_value_t = 0.5)]
        p0: f64,
        /// Reciprocity excess, positive.
        #[arg(long)]
        beta: f64,
        /// Accumulated deviation from stochasticity, nonnegative.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        /// Chain file to verify the bound against.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Window length for verification.
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Write a seeded family realization as a chain file.
    Generate {
        /// Random family name, e.g. gossip-pairs.
        #[arg(long)]
        family: String,
        /// Family parameters, comma separated key=value pairs.
        #[arg(long, default_value = "")]
        params: String,
        /// Seed for the family generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dimension.
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Number of matrices to store.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Evaluate the transition operator of a continuous chain.
    CtPhi {
        /// Piecewise chain file.
        #[arg(long)]
        input: PathBuf,
        /// Interval start; defaults to the chain start.
        #[arg(long)]
        from: Option<f64>,
        /// Interval end; defaults to the chain end.
        #[arg(long)]
        to: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Sample a continuous chain on a uniform grid and write the
    /// discrete chain file.
    CtSample {
        /// Piecewise chain file.
        #[arg(long)]
        input: PathBuf,
        /// Number of discrete steps.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Reciprocity certificate over integrated generator flows.
    CtReciprocity {
        /// Piecewise chain file.
        #[arg(long)]
        input: PathBuf,
        /// Reciprocity weight in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        p0: f64,
        /// Number of grid intervals; must be even for the growth check.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[command(flatten)]
        output: Output,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("CHAINLAB_THREADS") {
        match threads.parse::<usize>() {
            Ok(k) if k > 0 => {
                // A failure here means a pool already exists, which is
                // fine for a process that builds it once.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: CHAINLAB_THREADS must be a positive integer");
                exit(1);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                exit(0);
            }
            eprintln!("{e}");
            exit(1);
        }
    };
    match run(cli.command) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(1);
        }
    }
}

/// Materializes the extension over a horizon so window statistics see
/// exactly the steps the verdict is about.
fn materialize(chain: &ChainWindow, horizon: usize) -> Result<ChainWindow> {
    let t0 = chain.t0();
    let mats = (t0..t0 + horizon)
        .map(|t| chain.matrix_at(t))
        .collect::<Result<Vec<_>>>()?;
    ChainWindow::new(t0, mats, Extension::RepeatLast)
}

fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("cannot parse entry `{tok}`")))
        })
        .collect()
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Validate { source } => {
            let chain = source.load()?;
            let mut out = String::new();
            out.push_str(&format!("n {}\n", chain.n()));
            out.push_str(&format!("t0 {}\n", chain.t0()));
            out.push_str(&format!("count {}\n", chain.matrices().len()));
            out.push_str(&format!("extension {}\n", chain.extension().keyword()));
            let (mut st, mut sub, mut gen) = (0usize, 0usize, 0usize);
            for m in chain.matrices() {
                match m.classify(TOL_STOCH) {
                    Stochasticity::Stochastic => st += 1,
                    Stochasticity::Substochastic => sub += 1,
                    Stochasticity::General => gen += 1,
                }
            }
            out.push_str(&format!(
                "stochastic {st}\nsubstochastic {sub}\ngeneral {gen}\n"
            ));
            out.push_str(&format!(
                "gamma {}\n",
                format_f64(strong_aperiodicity_gamma(&chain))
            ));
            if gen == 0 {
                out.push_str(&format!(
                    "deviation {}\n",
                    format_f64(deviation_from_stochasticity(&chain)?)
                ));
            }
            out.push_str(&format!(
                "cut_balance_alpha {}\n",
                format_f64(cut_balance_alpha(&chain)?)
            ));
            print!("{out}");
            Ok(0)
        }
        Command::Reciprocity {
            source,
            p0,
            horizon,
            output,
        } => {
            let chain = source.load()?;
            let full = approximate_reciprocity_beta(&chain, p0, horizon)?;
            let half = approximate_reciprocity_beta(&chain, p0, horizon / 2)?;
            let growing = full.beta_required - half.beta_required
                > GROWTH_FRACTION * half.beta_required + GROWTH_SLACK;
            let mut text = full.to_text();
            text.push_str(&format!(
                "beta_half {}\n",
                format_f64(half.beta_required)
            ));
            text.push_str(&format!(
                "growth {}\n",
                if growing { "growing" } else { "bounded" }
            ));
            output.emit(&text)?;
            Ok(if growing { 2 } else { 0 })
        }
        Command::Aps {
            source,
            horizon,
            terminal,
            output,
        } => {
            let chain = source.load()?;
            let n = chain.n();
            let term = if terminal == "uniform" {
                vec![1.0 / n as f64; n]
            } else {
                parse_vector(&terminal)?
            };
            let t0 = chain.t0();
            let trace = aps_backward(&chain, t0, t0 + horizon, &term)?;
            output.emit(&trace.to_tsv())?;
            Ok(0)
        }
        Command::Pstar {
            source,
            p0,
            horizon,
            output,
        } => {
            let chain = source.load()?;
            let report = class_pstar_verdict(&chain, p0, horizon)?;
            output.emit(&report.to_text())?;
            Ok(if report.in_pstar { 0 } else { 2 })
        }
        Command::Flowgraph {
            source,
            horizon,
            threshold,
            output,
        } => {
            let chain = source.load()?;
            let graph = build_flow_graph(&chain, horizon, threshold)?;
            output.emit(&graph.to_tsv())?;
            Ok(0)
        }
        Command::Classes {
            source,
            horizon,
            tol,
            output,
        } => {
            let chain = source.load()?;
            let report = ergodic_classes(&chain, horizon, tol)?;
            let mut text = String::new();
            for (k, class) in report.classes.iter().enumerate() {
                let members: Vec<String> = class.iter().map(usize::to_string).collect();
                text.push_str(&format!("class {k}: {}\n", members.join(" ")));
            }
            for (k, comp) in report.flow_components.iter().enumerate() {
                let members: Vec<String> = comp.iter().map(usize::to_string).collect();
                text.push_str(&format!("flow_component {k}: {}\n", members.join(" ")));
            }
            text.push_str(&format!("cauchy_gap {}\n", format_f64(report.cauchy_gap)));
            text.push_str(&format!("class_ergodic {}\n", report.class_ergodic));
            text.push_str(&format!(
                "matches_flow_graph {}\n",
                report.matches_flow_graph
            ));
            output.emit(&text)?;
            Ok(if report.matches_flow_graph { 0 } else { 2 })
        }
        Command::Simulate {
            source,
            x0,
            random_seed,
            steps,
            output,
        } => {
            let chain = source.load()?;
            let n = chain.n();
            let state = match (x0, random_seed) {
                (Some(text), None) => parse_vector(&text)?,
                (None, seed) => {
                    let mut rng = CounterRng::keyed(seed.unwrap_or(0), &[0xD7, 0]);
                    (0..n).map(|_| rng.next_f64()).collect()
                }
                (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
            };
            let traj = simulate(&chain, &state, steps)?;
            output.emit(&traj.to_tsv())?;
            Ok(0)
        }
        Command::Rate {
            source,
            horizon,
            delta,
            eps,
            mode,
            trials,
            trial_seed,
            output,
        } => {
            let chain = source.load()?;
            let mode = match mode.as_str() {
                "cross-flow" => FlowMode::CrossFlow,
                "principal-block" => FlowMode::PrincipalBlock,
                other => {
                    return Err(Error::Parse(format!(
                        "unknown mode `{other}` (expected cross-flow or principal-block)"
                    )))
                }
            };
            let t0 = chain.t0();
            let n = chain.n();
            let window = materialize(&chain, horizon)?;
            let gamma = strong_aperiodicity_gamma(&window);
            let uniform = vec![1.0 / n as f64; n];
            let aps = aps_backward(&chain, t0, t0 + horizon, &uniform)?;
            let epochs = epoch_times(&chain, delta, horizon, mode)?;
            let mut text = String::new();
            text.push_str(&format!("gamma {}\n", format_f64(gamma)));
            text.push_str(&format!("p_star {}\n", format_f64(aps.p_star)));
            text.push_str(&format!("epochs {}\n", epochs.len()));
            if gamma <= 0.0 || aps.p_star <= 0.0 || epochs.len() < 2 {
                text.push_str("verdict hypotheses-not-met\n");
                output.emit(&text)?;
                return Ok(2);
            }
            let report = contraction_check(
                &chain, &aps, &epochs, gamma, aps.p_star, delta, eps, trials, trial_seed,
            )?;
            text.push_str(&format!("bound {}\n", format_f64(report.bound)));
            text.push_str(&format!("max_ratio {}\n", format_f64(report.max_ratio)));
            text.push_str(&format!("checked {}\n", report.checked));
            text.push_str(&format!(
                "verdict {}\n",
                if report.holds { "holds" } else { "violated" }
            ));
            output.emit(&text)?;
            Ok(if report.holds { 0 } else { 2 })
        }
        Command::Bound {
            n,
            gamma,
            p0,
            beta,
            delta,
            input,
            horizon,
            output,
        } => {
            let params = EtaParams {
                n,
                gamma,
                p0,
                beta,
                delta,
            };
            let bound = eta_n(&params)?;
            let mut text = String::new();
            text.push_str(&format!("ln_eta {}\n", format_f64(bound.ln_value)));
            text.push_str(&format!("eta {}\n", format_f64(bound.value)));
            text.push_str(&format!("underflowed {}\n", bound.underflowed));
            let mut code = 0;
            if let Some(path) = input {
                let chain = load_chain(&path)?;
                let report = verify_product_lower_bound_log(&chain, bound.ln_value, horizon)?;
                text.push_str(&format!(
                    "min_diagonal {}\n",
                    format_f64(report.min_diagonal)
                ));
                let (t1, t2, i) = report.witness;
                text.push_str(&format!("witness {t1} {t2} {i}\n"));
                text.push_str(&format!(
                    "verdict {}\n",
                    if report.holds { "holds" } else { "violated" }
                ));
                if !report.holds {
                    code = 2;
                }
            }
            output.emit(&text)?;
            Ok(code)
        }
        Command::Generate {
            family,
            params,
            seed,
            n,
            count,
            output,
        } => {
            let family = parse_family(&family, &params)?;
            let spec = GeneratorSpec::new(family, n, seed)?;
            let chain = generate(&spec, count)?;
            output.emit(&write_chain_spec(&chain))?;
            Ok(0)
        }
        Command::CtPhi {
            input,
            from,
            to,
            output,
        } => {
            let chain = load_ct_chain(&input)?;
            let from = from.unwrap_or_else(|| chain.t0());
            let to = to.unwrap_or_else(|| chain.end_time());
            let op = transition(&chain, from, to)?;
            let mut text = String::new();
            text.push_str(&format!("pieces {}\n", op.pieces));
            text.push_str(&format!("clamped {}\n", op.clamped));
            for i in 0..op.matrix.n() {
                let row: Vec<String> = op.matrix.row(i).iter().map(|v| format_f64(*v)).collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            output.emit(&text)?;
            Ok(0)
        }
        Command::CtSample {
            input,
            steps,
            output,
        } => {
            let chain = load_ct_chain(&input)?;
            let grid = uniform_grid(&chain, steps)?;
            let window = sample_discrete(&chain, &grid)?;
            output.emit(&write_chain_spec(&window))?;
            Ok(0)
        }
        Command::CtReciprocity {
            input,
            p0,
            steps,
            output,
        } => {
            let chain = load_ct_chain(&input)?;
            let grid = uniform_grid(&chain, steps)?;
            let full = ct_reciprocity_beta(&chain, p0, &grid)?;
            let half = ct_reciprocity_beta(&chain, p0, &grid[..=steps / 2])?;
            let growing = full.beta_required - half.beta_required
                > GROWTH_FRACTION * half.beta_required + GROWTH_SLACK;
            let mut text = full.to_text();
            text.push_str(&format!(
                "beta_half {}\n",
                format_f64(half.beta_required)
            ));
            text.push_str(&format!(
                "growth {}\n",
                if growing { "growing" } else { "bounded" }
            ));
            output.emit(&text)?;
            Ok(if growing { 2 } else { 0 })
        }
    }
}
