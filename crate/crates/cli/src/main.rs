use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nbody_tsp::baselines::{exact_brute_force, exact_held_karp, nearest_neighbor, nearest_neighbor_best};
use nbody_tsp::bench::{
    self, experiment_named, experiment_random, random_table, summarize, summary_table, variant_table,
    write_reports_csv, write_summary_csv, ExactSolver, GroupBy, Method, NnPolicy, RandomOptions, RunReport,
};
use nbody_tsp::instances::{att48, gen_grid, gen_random_uniform, jitter_duplicates, parse_tsplib, read_tsplib};
use nbody_tsp::ljf::{canonical_from_shape, shape_from_canonical, solve_delta, solve_r_eps, LjfCanonical, LjfShape};
use nbody_tsp::render::{render_tour_svg, render_trace_svgs, RenderSpec};
use nbody_tsp::sim::{self, read_trace_csv, write_bubbles_csv, write_trace_csv};
use nbody_tsp::tour::TourFile;
use nbody_tsp::{CityInstance, SimConfig, Tour, Variant};

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 0;

fn defaults_help() -> String {
    let mut s = String::from("Default simulation config (override with --config FILE or the flags above):\n");
    for line in SimConfig::default().to_text().lines() {
        s.push_str("  ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str("\nNamed instance presets applied before --config and flags:\n");
    if let Some(p) = bench::preset_config("grid4x4") {
        let keys: Vec<&str> = p.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect();
        s.push_str(&format!("  grid4x4: {}\n", keys.join(" ")));
    }
    s.push_str(&format!("\nDefault seed: {DEFAULT_SEED}"));
    s
}

#[derive(Parser)]
#[command(name = "nbody-tsp", version, about = "N-body particle heuristic for the Euclidean TSP", after_help = defaults_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle simulation on one instance and print the tour cost.
    #[command(after_help = defaults_help())]
    Solve(SolveArgs),
    /// Optimal tour by Held-Karp (or brute force).
    Exact(ExactArgs),
    /// Nearest-neighbour tour.
    Nn(NnArgs),
    /// Random-instance sweep or variant comparison on named instances.
    #[command(after_help = defaults_help())]
    Bench(BenchArgs),
    /// Write SVG for a tour file or a simulation trace.
    Render(RenderArgs),
    /// Print derived quantities of a Lennard-Jones-type force law.
    Ljf(LjfArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// TSPLIB file, or a built-in name: att48, grid<R>x<C>
    instance: Option<String>,
    /// Lattice of R rows and C columns with unit spacing, e.g. 4x4
    #[arg(long, value_name = "RxC", conflicts_with_all = ["instance", "random"])]
    grid: Option<String>,
    /// N cities uniform on the unit square, drawn from --seed
    #[arg(long, value_name = "N", conflicts_with = "instance")]
    random: Option<usize>,
    /// Seed for instance generation and simulation jitter
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Perturb coincident cities (noise of 1e-9 x diameter) instead of failing
    #[arg(long)]
    jitter_duplicates: bool,
}

/// Simulation config flags; each one sets the field of the same name.
#[derive(Args, Default)]
struct ConfigArgs {
    /// key=value config file applied before individual flags
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Skip the built-in preset for named instances
    #[arg(long)]
    no_preset: bool,
    /// simple | pressure | bubble | pressure+bubble
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    shape_ratio: Option<String>,
    #[arg(long)]
    force_scale: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    wall_stiffness: Option<String>,
    #[arg(long)]
    contact_width: Option<String>,
    #[arg(long)]
    damping: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    inner_growth_rate: Option<String>,
    #[arg(long)]
    pressure_low: Option<String>,
    #[arg(long)]
    pressure_high: Option<String>,
    #[arg(long)]
    outer_adjust_rate: Option<String>,
    #[arg(long)]
    gap_stop: Option<String>,
    #[arg(long)]
    max_steps: Option<String>,
    #[arg(long)]
    density_cells: Option<String>,
    /// Particle count above which a cell gets a bubble, or "auto"
    #[arg(long)]
    density_threshold: Option<String>,
    #[arg(long)]
    bubble_radius: Option<String>,
    /// Amplitude of the seeded perturbation of initial particle positions
    #[arg(long)]
    jitter: Option<String>,
    #[arg(long)]
    snapshot_stride: Option<String>,
}

impl ConfigArgs {
    /// Defaults, then the preset for `instance`, then `--config`, then flags.
    /// Returns the config and the seed found in the config file, if any.
    fn build(&self, instance: &str) -> Result<(SimConfig, Option<u64>)> {
        let mut cfg = if self.no_preset { SimConfig::default() } else { bench::config_for(instance) };
        let mut seed = None;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            seed = cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let flags = [
            ("variant", &self.variant),
            ("shape_ratio", &self.shape_ratio),
            ("force_scale", &self.force_scale),
            ("delta", &self.delta),
            ("wall_stiffness", &self.wall_stiffness),
            ("contact_width", &self.contact_width),
            ("damping", &self.damping),
            ("dt", &self.dt),
            ("inner_growth_rate", &self.inner_growth_rate),
            ("pressure_low", &self.pressure_low),
            ("pressure_high", &self.pressure_high),
            ("outer_adjust_rate", &self.outer_adjust_rate),
            ("gap_stop", &self.gap_stop),
            ("max_steps", &self.max_steps),
            ("density_cells", &self.density_cells),
            ("density_threshold", &self.density_threshold),
            ("bubble_radius", &self.bubble_radius),
            ("jitter", &self.jitter),
            ("snapshot_stride", &self.snapshot_stride),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok((cfg, seed))
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: InstanceArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the tour ("cost=<v>" then indices)
    #[arg(long, value_name = "FILE")]
    tour_out: Option<PathBuf>,
    /// Write a one-row report CSV
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Write the snapshot trace CSV (uses snapshot_stride, 100 if unset)
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Write bubble positions per snapshot as CSV
    #[arg(long, value_name = "FILE")]
    bubbles: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    source: InstanceArgs,
    /// Enumerate all tours (n <= 12) instead of Held-Karp (n <= 22)
    #[arg(long)]
    brute_force: bool,
    #[arg(long, value_name = "FILE")]
    tour_out: Option<PathBuf>,
}

#[derive(Args)]
struct NnArgs {
    #[command(flatten)]
    source: InstanceArgs,
    /// Start city
    #[arg(long, default_value_t = 0, conflicts_with = "best_start")]
    start: usize,
    /// Best tour over all start cities
    #[arg(long)]
    best_start: bool,
    #[arg(long, value_name = "FILE")]
    tour_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Random-instance sweep: exact, N-body and nearest neighbour per instance
    #[arg(long, conflicts_with = "named", required_unless_present = "named")]
    table1: bool,
    /// Named instances to compare variants on (att48, grid<R>x<C> or a TSPLIB path)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    named: Vec<String>,
    /// Instances per size (sweep) or seeds per variant (named); default 100 / 1
    #[arg(long)]
    runs: Option<u64>,
    /// Sizes for the sweep
    #[arg(long, value_delimiter = ',', default_value = "8,9,10,11,12")]
    n_values: Vec<usize>,
    /// First instance seed of the sweep, first simulation seed of named runs
    #[arg(long, default_value_t = DEFAULT_SEED)]
    base_seed: u64,
    /// Variants for named runs: "all" (simple,pressure,bubble) or a comma list
    #[arg(long, default_value = "all")]
    variants: String,
    /// Use brute force as the exact solver
    #[arg(long)]
    brute_force: bool,
    /// Check Held-Karp against brute force for n <= 10
    #[arg(long)]
    cross_check: bool,
    /// Nearest neighbour from the best start city instead of city 0
    #[arg(long)]
    nn_best: bool,
    /// Leave non-converged N-body runs out of the averages
    #[arg(long)]
    exclude_nonconverged: bool,
    /// Raw report CSV; printed to stdout when absent
    #[arg(long, short, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Summary CSV
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RenderArgs {
    /// Tour file to draw over --instance
    #[arg(long, value_name = "FILE", required_unless_present = "trace", conflicts_with = "trace")]
    tour: Option<PathBuf>,
    /// Instance for --tour: TSPLIB path or built-in name
    #[arg(long, requires = "tour")]
    instance: Option<String>,
    #[arg(long, requires = "tour", conflicts_with = "instance")]
    grid: Option<String>,
    #[arg(long, requires = "tour", conflicts_with_all = ["instance", "grid"])]
    random: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Trace CSV to draw, one SVG per --stride snapshots
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Bubble CSV matching --trace
    #[arg(long, value_name = "FILE", requires = "trace")]
    bubbles: Option<PathBuf>,
    /// Output file (tour) or directory (trace)
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 600)]
    width: u32,
    #[arg(long, default_value_t = 600)]
    height: u32,
}

#[derive(Args)]
struct LjfArgs {
    /// Equilibrium distance
    #[arg(long, requires_all = ["r_min", "m", "delta"], conflicts_with_all = ["g", "h", "q", "p"])]
    l: Option<f64>,
    /// Distance of strongest attraction
    #[arg(long)]
    r_min: Option<f64>,
    /// Strongest attraction magnitude
    #[arg(long)]
    m: Option<f64>,
    /// Exponent gap q - p
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, requires_all = ["h", "q", "p"])]
    g: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Also report the distance where the limiting profile falls to eps
    #[arg(long)]
    eps: Option<f64>,
    /// With --eps, solve for the delta whose force at r_eps is -eps*M
    #[arg(long, requires = "eps")]
    r_eps: Option<f64>,
}

fn parse_grid(spec: &str) -> Result<(usize, usize)> {
    let (r, c) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("grid must look like RxC, got '{spec}'"))?;
    Ok((r.trim().parse().context("grid rows")?, c.trim().parse().context("grid columns")?))
}

/// Built-in name or TSPLIB path.
fn resolve_named(name: &str, seed: u64, jitter: bool) -> Result<CityInstance> {
    if name == "att48" && !Path::new(name).exists() {
        return Ok(att48());
    }
    if let Some(spec) = name.strip_prefix("grid") {
        if !Path::new(name).exists() {
            if let Ok((r, c)) = parse_grid(spec) {
                return Ok(gen_grid(r, c)?);
            }
        }
    }
    let text = fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
    if !jitter {
        let inst = parse_tsplib(&text).with_context(|| format!("parsing {name}"))?;
        warn_att(&text);
        return Ok(inst);
    }
    let mut file = read_tsplib(&text).with_context(|| format!("parsing {name}"))?;
    if file.att_warning {
        eprintln!("warning: ATT edge weights are measured as plain Euclidean distance");
    }
    jitter_duplicates(&mut file.cities, seed);
    Ok(CityInstance::new(file.name, file.cities)?)
}

fn warn_att(text: &str) {
    if read_tsplib(text).is_ok_and(|f| f.att_warning) {
        eprintln!("warning: ATT edge weights are measured as plain Euclidean distance");
    }
}

impl InstanceArgs {
    fn load(&self) -> Result<CityInstance> {
        match (&self.instance, &self.grid, self.random) {
            (Some(name), None, None) => resolve_named(name, self.seed, self.jitter_duplicates),
            (None, Some(g), None) => {
                let (r, c) = parse_grid(g)?;
                Ok(gen_grid(r, c)?)
            }
            (None, None, Some(n)) => Ok(gen_random_uniform(n, self.seed)?),
            _ => bail!("give exactly one of: an instance file or name, --grid RxC, --random N"),
        }
    }
}

fn write_tour(path: &Option<PathBuf>, tour: &Tour) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, tour.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn print_result(inst: &CityInstance, tour: &Tour) {
    println!("instance {} ({} cities)", inst.name(), inst.len());
    println!("cost {:.3}", tour.cost());
    if let Some(opt) = inst.optimal_cost() {
        if let Ok(pe) = nbody_tsp::tour::percent_error(tour.cost(), opt) {
            println!("optimal {opt:.3}");
            println!("percent error {pe:.3}%");
        }
    }
    println!("tour {}", tour.order().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "));
}

fn create(path: &Path) -> Result<io::BufWriter<fs::File>> {
    Ok(io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let inst = args.source.load()?;
    let (mut cfg, file_seed) = args.config.build(inst.name())?;
    let seed = if args.source.seed == DEFAULT_SEED { file_seed.unwrap_or(DEFAULT_SEED) } else { args.source.seed };
    if (args.trace.is_some() || args.bubbles.is_some()) && cfg.snapshot_stride == 0 {
        cfg.snapshot_stride = 100;
    }
    let out = sim::run(&inst, &cfg, seed)?;
    println!("variant {} seed {seed}", cfg.variant);
    print_result(&inst, &out.tour);
    println!("steps {} converged {} time {:.3}s", out.steps, out.converged, out.wall_clock_s);
    if !out.converged {
        eprintln!("warning: max_steps reached before the ring formed; tour read from the last state");
    }
    write_tour(&args.tour_out, &out.tour)?;
    if let Some(p) = &args.report {
        let row = RunReport::new(
            inst.name(),
            inst.len(),
            Method::NBody(cfg.variant),
            seed,
            out.tour.cost(),
            inst.optimal_cost(),
            out.wall_clock_s,
            out.converged,
        );
        write_reports_csv(&[row], create(p)?)?;
    }
    if let Some(p) = &args.trace {
        write_trace_csv(&out.trace, create(p)?)?;
    }
    if let Some(p) = &args.bubbles {
        write_bubbles_csv(&out.trace, create(p)?)?;
    }
    Ok(())
}

fn cmd_exact(args: ExactArgs) -> Result<()> {
    let inst = args.source.load()?;
    let tour = if args.brute_force { exact_brute_force(&inst)? } else { exact_held_karp(&inst)? };
    print_result(&inst, &tour);
    write_tour(&args.tour_out, &tour)
}

fn cmd_nn(args: NnArgs) -> Result<()> {
    let inst = args.source.load()?;
    let tour = if args.best_start { nearest_neighbor_best(&inst) } else { nearest_neighbor(&inst, args.start)? };
    print_result(&inst, &tour);
    write_tour(&args.tour_out, &tour)
}

fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    if s == "all" {
        return Ok(bench::NAMED_VARIANTS.to_vec());
    }
    s.split(',').map(|v| v.trim().parse::<Variant>().map_err(|e| anyhow!("{e}"))).collect()
}

fn emit_reports(reports: &[RunReport], out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => write_reports_csv(reports, create(p)?)?,
        None => {
            let stdout = io::stdout();
            write_reports_csv(reports, stdout.lock())?;
            println!();
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.runs == Some(0) {
        bail!("--runs must be at least 1");
    }
    let (reports, group) = if args.table1 {
        let (cfg, _) = args.config.build("")?;
        let opts = RandomOptions {
            exact: if args.brute_force { ExactSolver::BruteForce } else { ExactSolver::HeldKarp },
            cross_check: args.cross_check,
            nn: if args.nn_best { NnPolicy::BestStart } else { NnPolicy::FromZero },
            include_nonconverged: !args.exclude_nonconverged,
        };
        let exp = experiment_random(&args.n_values, args.runs.unwrap_or(100), args.base_seed, &cfg, &opts)?;
        emit_reports(&exp.reports, &args.out)?;
        for f in &exp.failures {
            eprintln!("failed: {} {} seed {}: {}", f.instance, f.variant, f.seed, f.message);
        }
        print!("{}", random_table(&exp.averages));
        println!();
        (exp.reports, GroupBy::Size)
    } else {
        let variants = parse_variants(&args.variants)?;
        let runs = args.runs.unwrap_or(1);
        let seeds: Vec<u64> = (0..runs).map(|r| args.base_seed.wrapping_add(r)).collect();
        let mut reports = Vec::new();
        for name in &args.named {
            let inst = resolve_named(name, args.base_seed, false)?;
            let (cfg, _) = args.config.build(inst.name())?;
            let (rep, failures) = experiment_named(std::slice::from_ref(&inst), &variants, &cfg, &seeds)?;
            for f in &failures {
                eprintln!("failed: {} {} seed {}: {}", f.instance, f.variant, f.seed, f.message);
            }
            reports.extend(rep);
        }
        emit_reports(&reports, &args.out)?;
        print!("{}", variant_table(&reports));
        println!();
        (reports, GroupBy::Instance)
    };
    if reports.is_empty() {
        return Ok(());
    }
    let rows = summarize(&reports, group)?;
    print!("{}", summary_table(&rows));
    if let Some(p) = &args.summary {
        write_summary_csv(&rows, create(p)?)?;
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let spec = RenderSpec { width: args.width, height: args.height, stride: args.stride, ..RenderSpec::default() };
    if let Some(tour_path) = &args.tour {
        let source = InstanceArgs {
            instance: args.instance.clone(),
            grid: args.grid.clone(),
            random: args.random,
            seed: args.seed,
            jitter_duplicates: false,
        };
        let inst = source.load()?;
        let text = fs::read_to_string(tour_path).with_context(|| format!("reading {}", tour_path.display()))?;
        let file: TourFile = text.parse()?;
        if file.order.len() != inst.len() {
            bail!("tour has {} cities but {} has {}", file.order.len(), inst.name(), inst.len());
        }
        let tour = Tour::new(&inst, file.order)?;
        if (tour.cost() - file.cost).abs() > 1e-6 * tour.cost().max(1.0) {
            eprintln!("warning: file states cost {} but the tour measures {}", file.cost, tour.cost());
        }
        let svg = render_tour_svg(&inst, &tour, &spec)?;
        fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display()))?;
        println!("wrote {}", args.out.display());
    } else if let Some(trace_path) = &args.trace {
        let open = |p: &Path| fs::File::open(p).with_context(|| format!("reading {}", p.display()));
        let bubbles = args.bubbles.as_deref().map(open).transpose()?;
        let trace = read_trace_csv(open(trace_path)?, bubbles)?;
        let frames = render_trace_svgs(&trace, &spec)?;
        fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        for (step, svg) in &frames {
            let p = args.out.join(format!("frame_{step:09}.svg"));
            fs::write(&p, svg).with_context(|| format!("writing {}", p.display()))?;
        }
        println!("wrote {} frames to {}", frames.len(), args.out.display());
    }
    Ok(())
}

fn cmd_ljf(args: LjfArgs) -> Result<()> {
    let canonical = match (args.l, args.g) {
        (Some(l), None) => {
            let shape = LjfShape::new(l, args.r_min.unwrap(), args.m.unwrap(), args.delta.unwrap())?;
            canonical_from_shape(&shape)?
        }
        (None, Some(g)) => LjfCanonical::new(g, args.h.unwrap(), args.q.unwrap(), args.p.unwrap())?,
        _ => bail!("give either --l --r-min --m --delta or --g --h --q --p"),
    };
    let summary = shape_from_canonical(&canonical);
    let s = summary.shape;
    let mut out = io::stdout().lock();
    writeln!(out, "G={}", canonical.g())?;
    writeln!(out, "H={}", canonical.h())?;
    writeln!(out, "ln_G={}", canonical.ln_g())?;
    writeln!(out, "ln_H={}", canonical.ln_h())?;
    writeln!(out, "q={}", canonical.q())?;
    writeln!(out, "p={}", canonical.p())?;
    writeln!(out, "L={}", s.l)?;
    writeln!(out, "r_min={}", s.r_min)?;
    writeln!(out, "M={}", s.m)?;
    writeln!(out, "delta={}", s.delta)?;
    writeln!(out, "r_infl={}", summary.r_infl)?;
    if let Some(eps) = args.eps {
        let r_lower = solve_r_eps(s.l, s.r_min, eps)?;
        writeln!(out, "eps={eps}")?;
        writeln!(out, "R_eps={r_lower}")?;
        if let Some(r_eps) = args.r_eps {
            writeln!(out, "r_eps={r_eps}")?;
            writeln!(out, "delta_for_r_eps={}", solve_delta(s.l, s.r_min, s.m, eps, r_eps)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Nn(a) => cmd_nn(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Render(a) => cmd_render(a),
        Command::Ljf(a) => cmd_ljf(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
