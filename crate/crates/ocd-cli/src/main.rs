//! `ocd`: online clustering with delays on finite metric spaces.
//!
//! Subcommands: `validate`, `radius`, `sample`, `simulate`, `trace`,
//! `oracle`, `bounds`, `experiment`. Single results print as JSON,
//! experiments as CSV rows plus a JSON summary. All outputs are
//! deterministic for fixed arguments and seeds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ocd_core::arrivals::ArrivalSequence;
use ocd_core::audit::audit_run;
use ocd_core::bounds::bounds_report;
use ocd_core::clustering::{ClusterSizeSpec, CostParams};
use ocd_core::dgreedy::{run_spec, trace_tsv, MembershipRule, RunResult};
use ocd_core::experiment::{run_experiment, write_csv, ExperimentConfig};
use ocd_core::instance::{instance_to_file, load_instance, Instance, RepairPolicy};
use ocd_core::metric::{radius_table, validate_space, RawSpace};
use ocd_core::oracle::opt_exact;

#[derive(Parser)]
#[command(
    name = "ocd",
    version,
    about = "Online non-centroid clustering with delays: delayed-greedy simulator, exact offline oracle, analytic bounds, and a Monte-Carlo harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// Instance JSON: { "locations": [...], "dist": [[...]], "p": [...] }
    instance: PathBuf,
    /// Repair non-metric input (shift, shortest-path closure, symmetrize)
    #[arg(long)]
    repair: bool,
    /// Positive shift margin used by --repair
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
}

impl InstanceArgs {
    fn load(&self) -> Result<Instance> {
        let policy = if self.repair {
            RepairPolicy::Repair {
                epsilon: self.epsilon,
            }
        } else {
            RepairPolicy::Refuse
        };
        load_instance(&self.instance, policy)
            .with_context(|| format!("loading {}", self.instance.display()))
    }
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct SpecArgs {
    /// Fixed cluster sizes, non-increasing, e.g. 3,2,2
    #[arg(long, value_parser = parse_sizes)]
    sizes: Option<std::vec::Vec<usize>>,
    /// Per-slot size intervals, e.g. 2..3,2..2
    #[arg(long, value_parser = parse_intervals)]
    intervals: Option<std::vec::Vec<(usize, usize)>>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ClusterSizeSpec> {
        match (&self.sizes, &self.intervals) {
            (Some(sizes), None) => Ok(ClusterSizeSpec::fixed_degenerate(sizes.clone())?),
            (None, Some(bounds)) => Ok(ClusterSizeSpec::interval(bounds.clone())?),
            _ => bail!("exactly one of --sizes / --intervals is required"),
        }
    }
}

#[derive(Args, Clone)]
struct SequenceSource {
    /// Number of points to sample
    #[arg(long, requires = "seed", conflicts_with = "sequence")]
    n: Option<usize>,
    /// Sampling seed
    #[arg(long, requires = "n", conflicts_with = "sequence")]
    seed: Option<u64>,
    /// Replay a sequence file ("<time> <label>" per line) instead of sampling
    #[arg(long)]
    sequence: Option<PathBuf>,
}

impl SequenceSource {
    fn resolve(&self, instance: &Instance) -> Result<ArrivalSequence> {
        match (&self.sequence, self.n, self.seed) {
            (Some(path), None, None) => read_sequence(path, instance),
            (None, Some(n), Some(seed)) => Ok(ArrivalSequence::sample(&instance.dist, n, seed)?),
            _ => bail!("provide either --sequence or both --n and --seed"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum RuleArg {
    /// Every member must be within reach of its own delay
    #[default]
    PerMember,
    /// Members are tested against the largest member delay
    MaxMember,
}

impl From<RuleArg> for MembershipRule {
    fn from(value: RuleArg) -> Self {
        match value {
            RuleArg::PerMember => MembershipRule::PerMember,
            RuleArg::MaxMember => MembershipRule::MaxMember,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    source: SequenceSource,
    /// Delay scaling factor
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Cluster membership reading for joins
    #[arg(long, value_enum, default_value_t)]
    membership_rule: RuleArg,
}

impl RunArgs {
    fn execute(&self) -> Result<(Instance, ArrivalSequence, ClusterSizeSpec, RunResult, bool)> {
        let instance = self.instance.load()?;
        let seq = self.source.resolve(&instance)?;
        let spec = self.spec.resolve()?;
        let params = CostParams::new(self.lambda)?;
        let rule: MembershipRule = self.membership_rule.into();
        let result = run_spec(&seq, &instance.space, &spec, &params, rule)?;
        let radii = radius_table(&instance.space, &instance.dist)?;
        let audits = audit_run(
            &result,
            &seq,
            &instance.space,
            &spec,
            &params,
            &radii,
            rule,
            None,
        );
        let audits_ok = audits.values().all(|&v| v);
        if !audits_ok {
            let failed: Vec<&str> = audits
                .iter()
                .filter(|(_, &v)| !v)
                .map(|(k, _)| k.as_str())
                .collect();
            eprintln!("invariant audit failures: {}", failed.join(", "));
        }
        Ok((instance, seq, spec, result, audits_ok))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the metric axioms of an instance and report every violation
    Validate(InstanceArgs),
    /// Per-location assignment radii and their open-ball masses
    Radius(InstanceArgs),
    /// Sample a timed arrival sequence and print it line by line
    Sample {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Run the delayed-greedy engine and print the final clustering
    Simulate(RunArgs),
    /// Run the delayed-greedy engine and print its event log as TSV
    Trace(RunArgs),
    /// Exact offline optimum of a sequence by partition enumeration
    Oracle {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Sequence file to price
        sequence: PathBuf,
        /// Fixed cluster sizes, non-increasing
        #[arg(long, value_parser = parse_sizes)]
        sizes: std::vec::Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Analytic cost/optimum bounds and the asymptotic ratio bound
    Bounds {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_sizes)]
        sizes: std::vec::Vec<usize>,
    },
    /// Run a Monte-Carlo experiment described by a JSON config
    Experiment { config: PathBuf },
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad size `{part}`"))
        })
        .collect()
}

fn parse_intervals(s: &str) -> Result<Vec<(usize, usize)>, String> {
    s.split(',')
        .map(|part| {
            let (lo, hi) = part
                .trim()
                .split_once("..")
                .ok_or_else(|| format!("bad interval `{part}`, expected l..u"))?;
            let lo = lo
                .parse::<usize>()
                .map_err(|_| format!("bad bound `{lo}`"))?;
            let hi = hi
                .parse::<usize>()
                .map_err(|_| format!("bad bound `{hi}`"))?;
            Ok((lo, hi))
        })
        .collect()
}

fn read_sequence(path: &Path, instance: &Instance) -> Result<ArrivalSequence> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ArrivalSequence::parse(&text, &instance.space)?)
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

/// Clustering dump: one-based point ids, slot arrays in slot order.
fn clustering_dump(result: &RunResult) -> serde_json::Value {
    let slots: Vec<Vec<usize>> = result
        .state
        .slots()
        .iter()
        .map(|slot| slot.iter().map(|p| p + 1).collect())
        .collect();
    let mut assign_time = serde_json::Map::new();
    let mut w = serde_json::Map::new();
    for point in 0..result.state.n() {
        assign_time.insert((point + 1).to_string(), json!(result.assign_time(point)));
        w.insert((point + 1).to_string(), json!(result.wait(point)));
    }
    json!({
        "slots": slots,
        "assign_time": assign_time,
        "w": w,
        "tc": result.tc,
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate(args) => {
            let file: ocd_core::InstanceFile = serde_json::from_str(
                &std::fs::read_to_string(&args.instance)
                    .with_context(|| format!("reading {}", args.instance.display()))?,
            )?;
            let raw = RawSpace::new(file.locations.clone(), file.dist.clone())?;
            let report = validate_space(&raw);
            let violations: Vec<serde_json::Value> = report
                .violations
                .iter()
                .map(|v| {
                    json!({
                        "kind": v.kind,
                        "from": file.locations[v.from],
                        "to": file.locations[v.to],
                        "via": v.via.map(|y| file.locations[y].clone()),
                        "magnitude": v.magnitude,
                    })
                })
                .collect();
            let mut out = json!({
                "is_metric": report.is_metric(),
                "violations": violations,
            });
            if args.repair {
                let instance = args.load()?;
                out["repaired"] = serde_json::to_value(instance_to_file(&instance))?;
            }
            print_json(&out);
            Ok(ExitCode::SUCCESS)
        }
        Command::Radius(args) => {
            let instance = args.load()?;
            let radii = radius_table(&instance.space, &instance.dist)?;
            print_json(&json!({
                "locations": instance.space.labels(),
                "r": radii.r,
                "q": radii.q,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample { instance, n, seed } => {
            let instance = instance.load()?;
            let seq = ArrivalSequence::sample(&instance.dist, n, seed)?;
            print!("{}", seq.to_lines(&instance.space));
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => {
            let (_, _, _, result, audits_ok) = args.execute()?;
            print_json(&clustering_dump(&result));
            Ok(exit_for_audits(audits_ok))
        }
        Command::Trace(args) => {
            let (_, _, _, result, audits_ok) = args.execute()?;
            print!("{}", trace_tsv(&result));
            Ok(exit_for_audits(audits_ok))
        }
        Command::Oracle {
            instance,
            sequence,
            sizes,
            lambda,
        } => {
            let instance = instance.load()?;
            let seq = read_sequence(&sequence, &instance)?;
            let params = CostParams::new(lambda)?;
            let oracle = opt_exact(&seq, &instance.space, &sizes, &params)?;
            let mut w = serde_json::Map::new();
            let mut c = serde_json::Map::new();
            for point in 0..seq.n() {
                w.insert((point + 1).to_string(), json!(oracle.w.get(point)));
                c.insert((point + 1).to_string(), json!(oracle.point_costs[point]));
            }
            let partition: Vec<Vec<usize>> = oracle
                .partition
                .iter()
                .map(|cluster| cluster.iter().map(|p| p + 1).collect())
                .collect();
            print_json(&json!({
                "opt_cost": oracle.opt_cost,
                "w": w,
                "c": c,
                "point_cost_lower_bound": oracle.point_cost_lower_bound,
                "partition": partition,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds { instance, n, sizes } => {
            let instance = instance.load()?;
            let radii = radius_table(&instance.space, &instance.dist)?;
            let spec = ClusterSizeSpec::fixed_degenerate(sizes)?;
            let report = bounds_report(&instance.dist, &instance.space, &radii, n, &spec)?;
            print_json(&serde_json::to_value(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { config } => {
            let cfg: ExperimentConfig = serde_json::from_str(
                &std::fs::read_to_string(&config)
                    .with_context(|| format!("reading {}", config.display()))?,
            )
            .context("parsing experiment config")?;
            let report = run_experiment(&cfg)?;
            match &cfg.output {
                Some(path) => {
                    let mut file = std::fs::File::create(path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    write_csv(&report.trials, &mut file)?;
                    print_json(&serde_json::to_value(&report.per_n)?);
                }
                None => {
                    let mut out = Vec::new();
                    write_csv(&report.trials, &mut out)?;
                    print!("{}", String::from_utf8(out).expect("csv is utf-8"));
                    eprintln!(
                        "{}",
                        serde_json::to_string_pretty(&report.per_n).expect("serializable")
                    );
                }
            }
            if !report.all_audits_passed() {
                eprintln!("error: invariant audits failed on at least one trial");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for_audits(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
