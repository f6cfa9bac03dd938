use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dmc_prune::bound::{capacity_loss_bound, BoundMode, BoundOptions, BoundReport, DistanceKind};
use dmc_prune::capacity::{blahut_arimoto, pseudo_capacity, BaOptions, PseudoOptions, DEFAULT_MAX_ITER, DEFAULT_TOL_NATS};
use dmc_prune::gen::{sample_dmc, GeneratorConfig, SlotAssignment};
use dmc_prune::hull::{chi2_to_hull, prune_redundant, HullOptions, DEFAULT_MEMBERSHIP_TOL};
use dmc_prune::io::{read_channel, write_channel_file, ChannelFile};
use dmc_prune::prob::nats_to_bits;
use dmc_prune::select::{check_submodularity_counterexample, select_with, Method, SelectOptions, DEFAULT_BUDGET};
use dmc_prune::sweep::{run_sweep, write_sweep, SweepConfig, RESULTS_FILE, SUMMARY_FILE};
use dmc_prune::{Channel, Error, InputSubset};

const THREADS_VAR: &str = "DMC_PRUNE_THREADS";

#[derive(Parser)]
#[command(name = "dmc-prune", version, about = "Input selection and capacity-loss certificates for discrete memoryless channels")]
struct Cli {
    /// Report information quantities in nats instead of bits.
    #[arg(long, global = true)]
    nats: bool,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Include wall-clock times (makes output run-dependent).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct SolverArgs {
    /// Capacity solver tolerance in nats.
    #[arg(long, default_value_t = DEFAULT_TOL_NATS)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

impl SolverArgs {
    fn ba(self) -> BaOptions {
        BaOptions::new(self.tol, self.max_iter)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Capacity and capacity-achieving distributions.
    Capacity {
        channel: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Report in bits (the default).
        #[arg(long, conflicts_with = "nats")]
        bits: bool,
    },
    /// Pseudo capacity with output floor eta.
    Pseudo {
        channel: PathBuf,
        #[arg(long)]
        eta: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Keep k inputs.
    Select {
        channel: PathBuf,
        #[arg(long)]
        k: usize,
        /// clustering, exhaustive, greedy or random.
        #[arg(long, default_value = "clustering")]
        method: Method,
        /// Attach a capacity-loss certificate.
        #[arg(long)]
        bound: bool,
        /// surrogate or exact.
        #[arg(long, default_value = "surrogate")]
        mode: BoundMode,
        /// Largest number of subsets the exhaustive search may visit.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u128,
        /// Seed of the random baseline.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Capacity-loss certificate for a kept subset.
    Bound {
        channel: PathBuf,
        /// Kept inputs, e.g. 0,3,7.
        #[arg(long, value_parser = parse_subset)]
        subset: InputSubset,
        /// surrogate or exact.
        #[arg(long, default_value = "surrogate")]
        mode: BoundMode,
        /// Measure the critical symbol against its nearest kept row.
        #[arg(long)]
        nearest_neighbor: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Chi-squared projection of one row onto the hull of a subset.
    Hull {
        channel: PathBuf,
        #[arg(long, value_parser = parse_subset)]
        subset: InputSubset,
        #[arg(long)]
        x: usize,
    },
    /// Drop every row lying in the hull of the remaining rows.
    Prune {
        channel: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
        membership_tol: f64,
    },
    /// Sample a random channel.
    Gen {
        #[arg(long, default_value_t = 30)]
        nx: usize,
        #[arg(long, default_value_t = 30)]
        ny: usize,
        #[arg(long, default_value_t = 5)]
        k0: usize,
        #[arg(long, default_value_t = 0.005)]
        s1: f64,
        #[arg(long, default_value_t = 1e10)]
        s2: f64,
        #[arg(long, default_value_t = 1e-9)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Assign rows to prototypes uniformly at random.
        #[arg(long)]
        uniform_assignment: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a selection experiment over many random channels.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the four-row channel on which capacity gains are not diminishing.
    CheckSubmodularity,
}

fn parse_subset(s: &str) -> Result<InputSubset, String> {
    let idx = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad index {p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    InputSubset::from_unsorted(idx).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

struct Out {
    nats: bool,
    timing: bool,
}

impl Out {
    fn unit(&self) -> &'static str {
        if self.nats {
            "nats"
        } else {
            "bits"
        }
    }

    fn info(&self, nats: f64) -> f64 {
        if self.nats {
            nats
        } else {
            nats_to_bits(nats)
        }
    }

    fn fmt(&self, nats: f64) -> String {
        format!("{:.6} {}", self.info(nats), self.unit())
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

fn load(path: &Path) -> Result<Channel, Failure> {
    Ok(read_channel(path)?)
}

fn bound_text(o: &Out, r: &BoundReport, s: &mut String) {
    let _ = writeln!(s, "eta: {:.6e}", r.eta);
    let _ = writeln!(s, "critical input: {}", r.critical_x);
    let _ = writeln!(s, "delta: {}", r.delta);
    match r.kappa {
        Some(k) => {
            let _ = writeln!(s, "kappa: {k:.6e}");
        }
        None => s.push_str("kappa: none\n"),
    }
    match (r.bound_nats, &r.unavailable_reason) {
        (Some(b), _) => {
            let _ = writeln!(s, "bound: {}", o.fmt(b));
        }
        (None, reason) => {
            let _ = writeln!(s, "bound: unavailable ({})", reason.as_deref().unwrap_or("unknown"));
        }
    }
}


fn run(cli: Cli) -> Result<String, Failure> {
    let o = Out {
        nats: cli.nats,
        timing: cli.timing,
    };
    let start = Instant::now();
    let mut s = String::new();
    let mut js = match cli.command {
        Command::Capacity { channel, solver, .. } => {
            let ch = load(&channel)?;
            let r = blahut_arimoto(&ch, &solver.ba())?;
            let _ = writeln!(s, "capacity: {}", o.fmt(r.capacity_nats));
            let _ = writeln!(s, "gap: {:.3e} nats", r.gap());
            let _ = writeln!(s, "iterations: {}", r.iterations);
            let _ = writeln!(s, "input: {}", list(r.input_dist.as_slice()));
            let _ = writeln!(s, "output: {}", list(r.output_dist.as_slice()));
            json!({
                "capacity": o.info(r.capacity_nats),
                "unit": o.unit(),
                "gap_nats": r.gap(),
                "iterations": r.iterations,
                "input_dist": r.input_dist,
                "output_dist": r.output_dist,
            })
        }
        Command::Pseudo { channel, eta, solver } => {
            let ch = load(&channel)?;
            let r = pseudo_capacity(
                &ch,
                eta,
                &PseudoOptions {
                    tol_nats: solver.tol,
                    max_iter: solver.max_iter,
                },
            )?;
            let _ = writeln!(s, "pseudo capacity: {}", o.fmt(r.pseudo_capacity_nats));
            let _ = writeln!(s, "eta: {:.6e}", r.eta);
            let _ = writeln!(s, "output: {}", list(r.output_dist.as_slice()));
            json!({
                "pseudo_capacity": o.info(r.pseudo_capacity_nats),
                "unit": o.unit(),
                "eta": r.eta,
                "gap_nats": r.upper_bracket - r.lower_bracket,
                "output_dist": r.output_dist,
            })
        }
        Command::Select {
            channel,
            k,
            method,
            bound,
            mode,
            budget,
            seed,
            solver,
        } => {
            let ch = load(&channel)?;
            let ba = solver.ba();
            let opts = SelectOptions {
                ba,
                bound: bound.then(|| BoundOptions {
                    mode,
                    ba,
                    ..BoundOptions::default()
                }),
                budget,
                seed,
            };
            let r = select_with(method, &ch, k, &opts)?;
            let _ = writeln!(s, "method: {}", r.method);
            let _ = writeln!(s, "subset: {}", r.subset);
            let _ = writeln!(s, "capacity: {}", o.fmt(r.capacity_nats));
            if let Some(b) = &r.bound {
                bound_text(&o, b, &mut s);
            }
            json!({
                "method": r.method,
                "subset": r.subset,
                "capacity": o.info(r.capacity_nats),
                "unit": o.unit(),
                "bound": r.bound.as_ref().map(|b| b.to_json()),
            })
        }
        Command::Bound {
            channel,
            subset,
            mode,
            nearest_neighbor,
            solver,
        } => {
            let ch = load(&channel)?;
            let opts = BoundOptions {
                mode,
                distance: if nearest_neighbor {
                    DistanceKind::NearestNeighbor
                } else {
                    DistanceKind::Hull
                },
                ba: solver.ba(),
                ..BoundOptions::default()
            };
            let r = capacity_loss_bound(&ch, &subset, &opts)?;
            let _ = writeln!(s, "subset: {}", r.subset);
            let _ = writeln!(s, "pruned capacity: {}", o.fmt(r.capacity_pruned_nats));
            bound_text(&o, &r, &mut s);
            r.to_json()
        }
        Command::Hull { channel, subset, x } => {
            let ch = load(&channel)?;
            if x >= ch.num_inputs() {
                return Err(Error::IndexOutOfRange {
                    index: x,
                    num_inputs: ch.num_inputs(),
                }
                .into());
            }
            let sub = ch.restrict(&subset)?;
            let r = chi2_to_hull(&sub, ch.row(x), &HullOptions::default())?;
            let _ = writeln!(s, "chi2 distance: {}", r.distance_chi2);
            let _ = writeln!(s, "kappa: {:.6e}", r.kappa);
            let _ = writeln!(s, "weights: {}", list(r.weights.as_slice()));
            let _ = writeln!(s, "hull point: {}", list(r.hull_point.as_slice()));
            json!({
                "subset": subset,
                "x": x,
                "distance_chi2": r.distance_chi2,
                "kappa": r.kappa,
                "weights": r.weights,
                "hull_point": r.hull_point,
            })
        }
        Command::Prune { channel, membership_tol } => {
            let ch = load(&channel)?;
            let kept = prune_redundant(&ch, membership_tol, &HullOptions::default())?;
            let removed = kept.complement(ch.num_inputs());
            let ba = BaOptions::default();
            let full = blahut_arimoto(&ch, &ba)?.capacity_nats;
            let pruned = blahut_arimoto(&ch.restrict(&kept)?, &ba)?.capacity_nats;
            let _ = writeln!(s, "kept: {kept}");
            let _ = writeln!(
                s,
                "removed: {}",
                removed.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            );
            let _ = writeln!(s, "capacity: {}", o.fmt(full));
            let _ = writeln!(s, "pruned capacity: {}", o.fmt(pruned));
            json!({
                "kept": kept,
                "removed": removed,
                "capacity": o.info(full),
                "pruned_capacity": o.info(pruned),
                "unit": o.unit(),
            })
        }
        Command::Gen {
            nx,
            ny,
            k0,
            s1,
            s2,
            eps,
            seed,
            uniform_assignment,
            out,
        } => {
            let cfg = GeneratorConfig {
                num_inputs: nx,
                num_outputs: ny,
                num_prototypes: k0,
                proto_scale: s1,
                row_scale: s2,
                smoothing_eps: eps,
                seed,
                assignment: if uniform_assignment {
                    SlotAssignment::UniformRandom
                } else {
                    SlotAssignment::RoundRobin
                },
            };
            let ch = sample_dmc(&cfg)?;
            let file = ChannelFile {
                generator: Some(serde_json::to_value(&cfg).map_err(Error::from)?),
                ..ChannelFile::from_channel(&ch)
            };
            match out {
                Some(path) => {
                    write_channel_file(&path, &file)?;
                    let _ = writeln!(s, "wrote {}x{} channel to {}", nx, ny, path.display());
                    json!({ "path": path, "num_inputs": nx, "num_outputs": ny })
                }
                None => {
                    let text = serde_json::to_string_pretty(&file).map_err(Error::from)?;
                    return Ok(text + "\n");
                }
            }
        }
        Command::Sweep { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(Error::from)?;
            let mut cfg = SweepConfig::from_json_str(&text)?;
            cfg.record_wall_time |= o.timing;
            let result = run_sweep(&cfg)?;
            write_sweep(&out, &result)?;
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            let _ = writeln!(s, "rows: {}", result.rows.len());
            let _ = writeln!(s, "failed rows: {failed}");
            let _ = writeln!(s, "results: {}", out.join(RESULTS_FILE).display());
            let _ = writeln!(s, "summary: {}", out.join(SUMMARY_FILE).display());
            json!({
                "rows": result.rows.len(),
                "failed_rows": failed,
                "results": out.join(RESULTS_FILE),
                "summary": out.join(SUMMARY_FILE),
            })
        }
        Command::CheckSubmodularity => {
            let r = check_submodularity_counterexample()?;
            let _ = writeln!(s, "gain with {{0,1,3}}: {}", o.fmt(r.gain_large));
            let _ = writeln!(s, "gain with {{0,1}}: {}", o.fmt(r.gain_small));
            let _ = writeln!(s, "margin: {:.6e} nats", r.margin);
            let _ = writeln!(s, "entropy spread: {:.3e} nats", r.entropy_spread);
            s.push_str("PASS\n");
            json!({
                "gain_large": o.info(r.gain_large),
                "gain_small": o.info(r.gain_small),
                "unit": o.unit(),
                "margin_nats": r.margin,
                "entropy_spread_nats": r.entropy_spread,
                "pass": true,
            })
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    if o.timing {
        let _ = writeln!(s, "wall time: {elapsed:.3} s");
        js["wall_time_s"] = json!(elapsed);
    }
    if cli.json {
        let mut text = serde_json::to_string_pretty(&js).map_err(Error::from)?;
        text.push('\n');
        Ok(text)
    } else {
        Ok(s)
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
