//! Command-line front end. JSON goes to stdout, human-readable summaries to
//! stderr. Exit codes: 0 ok, 1 usage, 2 validation or invariant failure, 3 I/O.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use topoprune::engine::{bench, BenchConfig, EngineError};
use topoprune::graph::{self, GraphError, RegularGraph};
use topoprune::mask::{self, bundled, MaskError, ModelSpec};
use topoprune::metrics::{self, MetricsError};
use topoprune::nn::{self, BlobConfig, DemoConfig, NnError, TinyMlp};
use topoprune::search::{self, SearchConfig, SearchError};

#[derive(Parser)]
#[command(name = "topoprune", version, about = "Regular-graph pruning masks: generate, search, measure, map, verify, bench")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress the stderr summary.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ring,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a regular graph and write its edge list.
    Gen {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        degree: usize,
        #[arg(long, value_enum, default_value = "ring")]
        kind: Kind,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Minimize ASPL by degree-preserving edge swaps.
    Search {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        attempts: usize,
        /// Record every n-th attempt in the trace.
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Trajectory CSV (attempt,accepted,aspl).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// ASPL, GR, AOPU and the ASPL lower bound as JSON.
    Metrics {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, default_value_t = 15)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        group_size: usize,
    },
    /// Map a graph onto a model spec and report parameter/FLOP reductions.
    Mask {
        #[arg(short, long)]
        input: PathBuf,
        /// Model spec JSON path or a bundled name (vgg16, resnet18).
        #[arg(long)]
        model: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Use the dense (complete, self-looped) mapping instead.
        #[arg(long)]
        dense: bool,
    },
    /// Check AOPU and GR against gradients of an oracle MLP.
    Verify {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, default_value_t = 15)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        group_size: usize,
    },
    /// Time the gather-dense kernel against the masked dense product.
    Bench {
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long, default_value_t = 4)]
        degree: usize,
        #[arg(long, default_value_t = 8)]
        group_size: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        /// Compare both kernels before timing; exit 2 on mismatch.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        dense: bool,
    },
    /// Train a graph-masked classifier on synthetic blobs.
    Demo {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 8)]
        dims: usize,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 2)]
        group_size: usize,
        /// Accuracy trace CSV (epoch,train_acc,val_acc).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    fn io(msg: impl Into<String>) -> Self {
        Self { code: 3, msg: msg.into() }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io(_) => Failure::io(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Graph(g) => g.into(),
            SearchError::Io(_) | SearchError::Csv(_) => Failure::io(e.to_string()),
            SearchError::InvalidConfig(_) => Failure::usage(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Graph(g) => g.into(),
            MetricsError::InvalidShape => Failure::usage(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<MaskError> for Failure {
    fn from(e: MaskError) -> Self {
        match e {
            MaskError::Graph(g) => g.into(),
            MaskError::Io(_) => Failure::io(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Graph(g) => g.into(),
            EngineError::Mask(m) => m.into(),
            EngineError::InvalidBench(_) => Failure::usage(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io(_) | NnError::Csv(_) => Failure::io(e.to_string()),
            NnError::InvalidConfig(_) => Failure::usage(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    seed: u64,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn emit<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn positive(name: &str, v: usize) -> Outcome {
    if v == 0 {
        return Err(Failure::usage(format!("--{name} must be positive")));
    }
    Ok(())
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn load(path: &PathBuf) -> Result<RegularGraph, Failure> {
    graph::read_graph(path).map_err(|e| match e {
        GraphError::Io(io) => Failure::io(format!("{}: {io}", path.display())),
        other => Failure::invalid(format!("{}: {other}", path.display())),
    })
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn cmd_gen(ctx: &Ctx, nodes: usize, degree: usize, kind: Kind, output: &PathBuf) -> Outcome {
    positive("nodes", nodes)?;
    let g = match kind {
        Kind::Ring => graph::ring_lattice(nodes, degree)?,
        Kind::Random => graph::random_regular(nodes, degree, ctx.seed)?,
    };
    graph::write_graph(&g, output).map_err(|e| Failure::io(format!("{}: {e}", output.display())))?;
    let aspl = graph::aspl(&g).ok();
    let keep = g.k() as f64 / g.n() as f64;
    emit(&json!({
        "n": g.n(),
        "k": g.k(),
        "aspl": aspl,
        "keep_ratio": keep,
        "keep_ratio_pct": round2(100.0 * keep),
        "output": output,
    }));
    let aspl_text = aspl.map_or("inf (disconnected)".to_string(), |a| format!("{a:.4}"));
    ctx.say(format!(
        "wrote {}_{} graph to {}: ASPL {aspl_text}, keep ratio {:.2}%",
        g.n(),
        g.k(),
        output.display(),
        100.0 * keep
    ));
    Ok(())
}

fn cmd_search(ctx: &Ctx, input: &PathBuf, attempts: usize, record_every: usize, output: &PathBuf, trace: Option<&PathBuf>) -> Outcome {
    positive("attempts", attempts)?;
    positive("record-every", record_every)?;
    let g0 = load(input)?;
    let cfg = SearchConfig { attempts, seed: ctx.seed, record_every };
    let out = search::minimize_aspl(&g0, &cfg)?;
    graph::write_graph(&out.graph, output).map_err(|e| Failure::io(format!("{}: {e}", output.display())))?;
    if let Some(path) = trace {
        search::write_trajectory_to(&out.trajectory, create(path)?)?;
    }
    let accepted = out.trajectory.accepted_count();
    emit(&json!({
        "n": out.graph.n(),
        "k": out.graph.k(),
        "attempts": attempts,
        "seed": ctx.seed,
        "initial_aspl": out.initial_aspl(),
        "final_aspl": out.final_aspl(),
        "accepted": accepted,
        "recorded_rows": out.trajectory.rows.len(),
    }));
    ctx.say(format!(
        "ASPL {:.4} -> {:.4} over {attempts} attempts ({accepted} accepted{})",
        out.initial_aspl(),
        out.final_aspl(),
        if record_every > 1 { ", among recorded rows" } else { "" }
    ));
    Ok(())
}

fn cmd_metrics(ctx: &Ctx, input: &PathBuf, layers: usize, group_size: usize) -> Outcome {
    let g = load(input)?;
    let report = metrics::metrics_report(&g, layers, group_size)?;
    emit(&report);
    ctx.say(format!("ASPL {:.4}, GR {}, AOPU {:.2}", report.aspl, serde_json::to_string(&report.gr).unwrap(), report.aopu));
    Ok(())
}

fn resolve_model(name: &str) -> Result<ModelSpec, Failure> {
    if let Some(m) = bundled::by_name(name) {
        return Ok(m);
    }
    let path = PathBuf::from(name);
    if !path.exists() {
        return Err(Failure::io(format!("model {name:?} is neither a bundled name nor an existing file")));
    }
    Ok(ModelSpec::read(&path)?)
}

fn cmd_mask(ctx: &Ctx, input: &PathBuf, model: &str, output: Option<&PathBuf>, dense: bool) -> Outcome {
    let g = load(input)?;
    let spec = resolve_model(model)?;
    let masks = if dense { mask::dense_masks(g.n(), &spec)? } else { mask::model_masks(&g, &spec)? };
    let stats = mask::model_reduction(&masks, &spec)?;
    if let Some(path) = output {
        mask::write_maskset(&masks, path)?;
    }
    emit(&json!({
        "n": masks.n(),
        "k": masks.k,
        "dense": dense,
        "params_orig": stats.params_orig,
        "params_pruned": stats.params_pruned,
        "flops_orig": stats.flops_orig,
        "flops_pruned": stats.flops_pruned,
        "params_reduction": round2(stats.params_reduction),
        "flops_reduction": round2(stats.flops_reduction),
    }));
    ctx.say(format!(
        "params reduction {:.2}%, FLOPs reduction {:.2}% ({} of {} parameters kept)",
        stats.params_reduction, stats.flops_reduction, stats.params_pruned, stats.params_orig
    ));
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_verify(ctx: &Ctx, input: &PathBuf, layers: usize, group_size: usize) -> Outcome {
    let g = load(input)?;
    if graph::is_bipartite(&g)? {
        return Err(Failure::invalid("graph is bipartite: gradient resistance is infinite"));
    }
    let aopu_graph = metrics::aopu(&g, layers, group_size)?;
    let gr_graph = metrics::gr_graph(&g)?;
    let net = TinyMlp::build(&g, layers, group_size, ctx.seed)?;
    let reports = net.grad_reach_all()?;
    let aopu_gradient = reports.iter().map(|r| r.reached).sum::<u64>() as f64 / g.n() as f64;

    let mut gr_ok = true;
    let mut observed = Vec::with_capacity(g.n());
    for r in &reports {
        let expect = metrics::gr_node(&g, r.output_group)?;
        let deep_enough = expect < layers;
        gr_ok &= if deep_enough { r.gr_observed == Some(expect) } else { r.gr_observed.is_none() };
        observed.push(r.gr_observed);
    }
    // Only defined when every output group's gradient reached a full layer.
    let gr_gradient = observed
        .iter()
        .copied()
        .collect::<Option<Vec<usize>>>()
        .map(|v| v.iter().sum::<usize>() as f64 / v.len() as f64);
    let aopu_ok = aopu_gradient == aopu_graph;

    emit(&json!({
        "layers": layers,
        "group_size": group_size,
        "aopu_graph": aopu_graph,
        "aopu_gradient": aopu_gradient,
        "gr_graph": gr_graph,
        "gr_gradient": gr_gradient,
        "aopu_check": verdict(aopu_ok),
        "gr_check": verdict(gr_ok),
    }));
    ctx.say(format!("AOPU {}: graph {aopu_graph} vs gradient {aopu_gradient}", verdict(aopu_ok)));
    let gr_text = gr_gradient.map_or("depth too small for some groups".to_string(), |v| v.to_string());
    ctx.say(format!("GR {}: graph {gr_graph} vs gradient {gr_text}", verdict(gr_ok)));
    if aopu_ok && gr_ok {
        Ok(())
    } else {
        Err(Failure::invalid("graph metrics disagree with the gradient oracle"))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    ctx: &Ctx,
    nodes: usize,
    degree: usize,
    group_size: usize,
    batch: usize,
    repeats: usize,
    check: bool,
    parallel: bool,
    dense: bool,
) -> Outcome {
    positive("nodes", nodes)?;
    positive("group-size", group_size)?;
    positive("batch", batch)?;
    positive("repeats", repeats)?;
    if !dense {
        positive("degree", degree)?;
    }
    let cfg = BenchConfig {
        seed: ctx.seed,
        dense,
        parallel,
        self_check: check,
        ..BenchConfig::new(nodes, degree, group_size, batch, repeats)
    };
    let report = bench(&cfg)?;
    emit(&report);
    ctx.say(format!(
        "naive {:.3} ms, regular {:.3} ms (speedup {:.2}x, MAC ratio {:.4})",
        report.t_naive_ms,
        report.t_regular_ms,
        report.t_naive_ms / report.t_regular_ms,
        report.flops_ratio
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_demo(
    ctx: &Ctx,
    input: &PathBuf,
    classes: usize,
    dims: usize,
    points: usize,
    epochs: usize,
    group_size: usize,
    output: Option<&PathBuf>,
) -> Outcome {
    positive("classes", classes)?;
    positive("dims", dims)?;
    positive("points", points)?;
    positive("epochs", epochs)?;
    let g = load(input)?;
    let data = nn::blobs(&BlobConfig { classes, dims, points, seed: ctx.seed })?;
    let cfg = DemoConfig { epochs, group_size, seed: ctx.seed, ..DemoConfig::default() };
    let trace = nn::train_demo(&g, &data, &cfg)?;
    if let Some(path) = output {
        nn::write_accuracy_trace(&trace, create(path)?)?;
    }
    let last = trace.last().expect("epochs is positive");
    emit(&json!({
        "n": g.n(),
        "k": g.k(),
        "aspl": graph::aspl(&g).ok(),
        "epochs": epochs,
        "final_train_acc": last.train_acc,
        "final_val_acc": last.val_acc,
    }));
    ctx.say(format!("after {epochs} epochs: train {:.3}, validation {:.3}", last.train_acc, last.val_acc));
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let ctx = Ctx { seed: cli.seed, quiet: cli.quiet };
    match &cli.command {
        Command::Gen { nodes, degree, kind, output } => cmd_gen(&ctx, *nodes, *degree, *kind, output),
        Command::Search { input, attempts, record_every, output, trace } => {
            cmd_search(&ctx, input, *attempts, *record_every, output, trace.as_ref())
        }
        Command::Metrics { input, layers, group_size } => cmd_metrics(&ctx, input, *layers, *group_size),
        Command::Mask { input, model, output, dense } => cmd_mask(&ctx, input, model, output.as_ref(), *dense),
        Command::Verify { input, layers, group_size } => cmd_verify(&ctx, input, *layers, *group_size),
        Command::Bench { nodes, degree, group_size, batch, repeats, check, parallel, dense } => {
            cmd_bench(&ctx, *nodes, *degree, *group_size, *batch, *repeats, *check, *parallel, *dense)
        }
        Command::Demo { input, classes, dims, points, epochs, group_size, output } => {
            cmd_demo(&ctx, input, *classes, *dims, *points, *epochs, *group_size, output.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
