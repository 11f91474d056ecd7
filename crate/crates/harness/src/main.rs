use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pathlab::error::{write_file, HarnessError, Result};
use pathlab::expressiveness::{run_expressiveness_suite, run_pair_dataset, ExpressivenessConfig};
use pathlab::inputs::{infer_task, load_dataset, load_graph, load_graphs};
use pathlab::sr::{run_sr_benchmark, SrConfig, SrInstance};
use pathlab::timing::{path_count_csv, timing_bench, TimingConfig};
use pathlab::training::{csl_runs, run_gradcheck, run_training, GradVariant, TrainingRun};
use pathlab::{Format, SuiteReport};
use pathlab_core::format::{write_graph6, write_jsonl_dataset};
use pathlab_core::paths::{enumerate_paths, DEFAULT_BUDGET};
use pathlab_core::refine::{
    compare_colorings, graph_fingerprint, path_refine, wl_refine, ColorTable, InitColors, RefinementConfig,
};
use pathlab_core::trees::{build_path_tree, build_wl_tree, canonical_tree_hash, HashMode};
use pathlab_core::{Dataset, PathKind, Task};
use pathlab_neural::train::TrainConfig;
use pathlab_neural::{Aggregation, CellVariant, Head, ModelConfig, Norm, Phi};

#[derive(Parser)]
#[command(name = "pathlab", version, about = "Path enumeration, path-trees, color refinement and path neural networks")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "PATHLAB_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Most paths (or tree nodes) a single enumeration may store.
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between graph6 and JSONL, or write generated graphs.
    Convert {
        /// Input file or generator spec (e.g. `csl-family`, `er:10:0.3:1`).
        input: String,
        #[arg(long, value_enum)]
        to: GraphFormat,
        #[arg(long)]
        output: Option<String>,
    },
    /// Enumerate paths and print counts per length.
    Paths {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, value_parser = parse_kind, default_value = "ap")]
        kind: PathKind,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Print every path.
        #[arg(long)]
        list: bool,
    },
    /// Build a WL-tree or path-tree rooted at a node.
    Tree {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        node: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// `wl`, `sp`, `spp` or `ap`.
        #[arg(long, default_value = "ap")]
        tree: String,
        /// Print the tree in DOT.
        #[arg(long)]
        dot: bool,
    },
    /// Refine node colors and print classes and fingerprints per iteration.
    Refine {
        #[command(flatten)]
        graph: GraphArg,
        #[command(flatten)]
        refine: RefineArgs,
    },
    /// Compare two graphs by refinement.
    Distinguish {
        first: String,
        second: String,
        #[command(flatten)]
        refine: RefineArgs,
    },
    /// Property checks and fingerprint separations.
    Expressiveness {
        #[arg(long, default_value_t = 200)]
        corpus_size: usize,
        #[arg(long, default_value_t = 100)]
        csl_permutations: usize,
        /// Pair dataset (JSONL, graphs 2i and 2i+1 form a pair) to count
        /// undistinguished pairs on instead.
        #[arg(long)]
        pairs: Option<String>,
        #[command(flatten)]
        refine: RefineArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// All-pairs distinguishability on strongly regular families.
    SrBench {
        /// graph6 files; the builtin Shrikhande/rook pair when empty.
        files: Vec<String>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validated training.
    Train(TrainArgs),
    /// Central finite-difference gradient check.
    Gradcheck {
        /// Cell variants to check; all when omitted.
        #[arg(long, value_parser = parse_variant)]
        variant: Vec<GradVariant>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Path counts and preprocessing, training and inference times.
    Timing {
        /// `csl`, `er`, a JSONL dataset or any graph source.
        #[arg(long, default_value = "csl")]
        dataset: String,
        #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "sp,spp,ap")]
        kinds: Vec<PathKind>,
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        ks: Vec<usize>,
        /// Also time a model with this hidden size.
        #[arg(long)]
        model_hidden: Option<usize>,
        /// Write the path-count table (kind, K, mean paths per graph) here.
        #[arg(long)]
        csv: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Graph6,
    Jsonl,
}

#[derive(Args)]
struct GraphArg {
    /// Graph file (graph6 or JSONL) or generator spec.
    graph: String,
    /// Which graph of a multi-graph source.
    #[arg(long, default_value_t = 0)]
    index: usize,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long, value_parser = parse_kind, default_value = "ap")]
    kind: PathKind,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    distance: bool,
    #[arg(long)]
    edges: bool,
    #[arg(long)]
    no_padding: bool,
    /// Start from node features instead of a uniform coloring.
    #[arg(long)]
    features: bool,
    /// Plain 1-WL with `k` iterations instead of path refinement.
    #[arg(long)]
    wl: bool,
}

impl RefineArgs {
    fn config(&self) -> RefinementConfig {
        let init = if self.features { InitColors::FromNodeFeatures } else { InitColors::Uniform };
        RefinementConfig::new(self.kind, self.k)
            .with_distance(self.distance)
            .with_edges(self.edges)
            .with_padding(!self.no_padding)
            .with_init(init)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Report file; the format follows the extension unless --format is set.
    #[arg(long)]
    out: Option<String>,
    /// `json`, `csv` or `markdown`.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// `csl` or a JSONL dataset.
    #[arg(long, default_value = "csl")]
    dataset: String,
    /// Run the three CSL rows (SP+, AP, SP) instead of one model.
    #[arg(long)]
    csl_rows: bool,
    #[arg(long, value_parser = parse_kind, default_value = "spp")]
    kind: PathKind,
    #[arg(long, default_value_t = 11)]
    k: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_enum, default_value = "plain")]
    cell: CellArg,
    #[arg(long, value_enum, default_value = "none")]
    norm: NormArg,
    #[arg(long, value_enum, default_value = "identity")]
    phi: PhiArg,
    #[arg(long, value_enum, default_value = "linear")]
    head: HeadArg,
    #[arg(long, value_enum, default_value = "sum")]
    agg: AggArg,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Accuracy in percent every fold must reach.
    #[arg(long)]
    target: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum CellArg {
    Plain,
    Distance,
    Edge,
    EdgeDistance,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    None,
    Batch,
    Euclidean,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhiArg {
    Identity,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Linear,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Sum,
    Mean,
}

fn parse_kind(s: &str) -> std::result::Result<PathKind, String> {
    s.parse().map_err(|e: pathlab_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<GradVariant, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when a check of the invoked suite failed.
fn run(cli: &Cli) -> Result<bool> {
    let (seed, budget) = (cli.seed, cli.budget);
    match &cli.command {
        Command::Convert { input, to, output } => {
            let graphs = load_graphs(input)?;
            let bytes = match to {
                GraphFormat::Graph6 => write_graph6(&graphs).into_bytes(),
                GraphFormat::Jsonl => {
                    write_jsonl_dataset(&Dataset::new("converted", infer_task(&graphs), graphs)?)
                }
            };
            emit(output.as_deref(), &bytes)?;
            Ok(true)
        }
        Command::Paths { graph, kind, k, list } => {
            let g = load_graph(&graph.graph, graph.index)?;
            let ps = enumerate_paths(&g, *kind, *k, budget)?;
            println!("graph {} ({} nodes, {} edges), kind {kind}, K {k}", g.id(), g.num_nodes(), g.num_edges());
            for (len, count) in ps.count_by_length().iter().enumerate() {
                println!("length {}: {count}", len + 1);
            }
            println!("total: {}", ps.total());
            if *list {
                for (_, _, p) in ps.iter() {
                    println!("{}", p.iter().map(u32::to_string).collect::<Vec<_>>().join(" "));
                }
            }
            Ok(true)
        }
        Command::Tree { graph, node, k, tree, dot } => {
            let g = load_graph(&graph.graph, graph.index)?;
            if *node >= g.num_nodes() {
                return Err(HarnessError::Input(format!("node {node} outside {} nodes", g.num_nodes())));
            }
            let t = match tree.as_str() {
                "wl" => build_wl_tree(&g, *node, *k, budget)?,
                other => {
                    let kind = parse_kind(other).map_err(HarnessError::Input)?;
                    build_path_tree(&enumerate_paths(&g, kind, *k, budget)?, *node, *k)?
                }
            };
            if *dot {
                print!("{}", t.to_dot(&format!("{tree}_{node}")));
            } else {
                println!("{tree}-tree of node {node}, height {k}: {} nodes", t.len());
                println!("level sizes: {:?}", t.level_sizes(*k));
                println!("hash: {:032x}", canonical_tree_hash(&t, HashMode::Digest).0);
            }
            Ok(true)
        }
        Command::Refine { graph, refine } => {
            let g = load_graph(&graph.graph, graph.index)?;
            let mut table = ColorTable::new();
            let rc = refine.config();
            let c = if refine.wl {
                wl_refine(&g, refine.k, rc.init, &mut table)?
            } else {
                path_refine(&g, &enumerate_paths(&g, rc.kind, rc.max_len, budget)?, &rc, &mut table)?
            };
            let fp = graph_fingerprint(&c);
            for it in 0..=c.iterations() {
                println!("iteration {it}: {} classes, fingerprint {}, colors {:?}", c.num_classes(it), fp.hex(it), c.at(it));
            }
            Ok(true)
        }
        Command::Distinguish { first, second, refine } => {
            let (a, b) = (load_graph(first, 0)?, load_graph(second, 0)?);
            let rc = refine.config();
            let mut table = ColorTable::new();
            let (ca, cb) = if refine.wl {
                (wl_refine(&a, refine.k, rc.init, &mut table)?, wl_refine(&b, refine.k, rc.init, &mut table)?)
            } else {
                let pa = enumerate_paths(&a, rc.kind, rc.max_len, budget)?;
                let pb = enumerate_paths(&b, rc.kind, rc.max_len, budget)?;
                (path_refine(&a, &pa, &rc, &mut table)?, path_refine(&b, &pb, &rc, &mut table)?)
            };
            println!("{:?}", compare_colorings(&ca, &cb));
            Ok(true)
        }
        Command::Expressiveness { corpus_size, csl_permutations, pairs, refine, out } => {
            let report = match pairs {
                Some(path) => run_pair_dataset(&load_dataset(path, seed)?, &refine.config(), seed, budget)?,
                None => {
                    let cfg = ExpressivenessConfig {
                        seed,
                        corpus_size: *corpus_size,
                        csl_permutations: *csl_permutations,
                        budget,
                        ..Default::default()
                    };
                    run_expressiveness_suite(&cfg)?
                }
            };
            finish(&report, out)
        }
        Command::SrBench { files, k, out } => {
            let instances = if files.is_empty() {
                vec![SrInstance::builtin()]
            } else {
                files.iter().map(|f| SrInstance::from_file(f)).collect::<Result<_>>()?
            };
            finish(&run_sr_benchmark(&instances, &SrConfig { max_len: *k, budget, seed })?, out)
        }
        Command::Train(args) => {
            let ds = load_dataset(&args.dataset, seed)?;
            let runs = if args.csl_rows { csl_runs(seed) } else { vec![single_run(args, &ds, seed, budget)?] };
            finish(&run_training(&ds, &runs, seed)?, &args.out)
        }
        Command::Gradcheck { variant, out } => {
            let variants = if variant.is_empty() { GradVariant::ALL.to_vec() } else { variant.clone() };
            finish(&run_gradcheck(&variants, seed)?, out)
        }
        Command::Timing { dataset, kinds, ks, model_hidden, csv, out } => {
            let ds = load_dataset(dataset, seed)?;
            let cfg = TimingConfig { kinds: kinds.clone(), ks: ks.clone(), model_hidden: *model_hidden, budget, seed, ..Default::default() };
            let report = timing_bench(&ds, &cfg)?;
            if let Some(path) = csv {
                write_file(path, path_count_csv(&report)?.as_bytes())?;
            }
            finish(&report, out)
        }
    }
}

fn single_run(args: &TrainArgs, ds: &Dataset, seed: u64, budget: usize) -> Result<TrainingRun> {
    let input_dim = ds.graphs.first().and_then(|g| g.node_features()).map_or(1, |f| f.dim().max(1));
    let edge_dim = ds.graphs.first().and_then(|g| g.edge_features()).and_then(|e| e.values().next()).map_or(0, Vec::len);
    let outputs = match ds.task {
        Task::Classification { num_classes } => num_classes,
        Task::Regression => 1,
        Task::None => return Err(HarnessError::Input(format!("dataset {} has no labels", ds.name))),
    };
    let mut model = ModelConfig::new(args.kind, args.k, args.hidden, input_dim, outputs);
    model.cell = match args.cell {
        CellArg::Plain => CellVariant::Plain,
        CellArg::Distance => CellVariant::Distance,
        CellArg::Edge => CellVariant::Edge,
        CellArg::EdgeDistance => CellVariant::EdgeDistance,
    };
    model.edge_dim = if model.cell.uses_edges() { edge_dim } else { 0 };
    model.norm = match args.norm {
        NormArg::None => Norm::None,
        NormArg::Batch => Norm::BatchNorm,
        NormArg::Euclidean => Norm::Euclidean,
    };
    model.phi = match args.phi {
        PhiArg::Identity => Phi::Identity,
        PhiArg::Mlp => Phi::Mlp,
    };
    model.head = match args.head {
        HeadArg::Linear => Head::Linear,
        HeadArg::Mlp => Head::Mlp,
    };
    let agg = match args.agg {
        AggArg::Sum => Aggregation::Sum,
        AggArg::Mean => Aggregation::Mean,
    };
    model.path_agg = agg;
    model.readout = agg;
    model.dropout = args.dropout;
    model.validate()?;
    let train = TrainConfig { lr: args.lr, epochs: args.epochs, batch_size: args.batch, seed, folds: args.folds, budget };
    let name = format!("PathNN-{} (K={})", args.kind.as_str().to_uppercase().replace("SPP", "SP+"), args.k);
    Ok(TrainingRun { name, model, train, target: args.target })
}

fn emit(path: Option<&str>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => {
            print!("{}", String::from_utf8_lossy(bytes));
            Ok(())
        }
    }
}

/// Writes the report and prints its markdown summary; true iff every check
/// passed.
fn finish(report: &SuiteReport, out: &OutArgs) -> Result<bool> {
    let fmt = match (&out.format, &out.out) {
        (Some(f), _) => f.parse()?,
        (None, Some(p)) if p.ends_with(".csv") => Format::Csv,
        (None, Some(p)) if p.ends_with(".md") => Format::Markdown,
        (None, Some(_)) => Format::Json,
        (None, None) => Format::Markdown,
    };
    match &out.out {
        Some(p) => {
            write_file(p, &report.export(fmt)?)?;
            print!("{}", report.to_markdown());
        }
        None => emit(None, &report.export(fmt)?)?,
    }
    Ok(report.all_passed())
}
