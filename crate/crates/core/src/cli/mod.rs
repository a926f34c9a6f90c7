//! Command-line front end. Every subcommand reads CSV or tensor files,
//! runs one library pipeline and writes its results into `--out`.

mod io;
mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use contratensor::bench::{run_bench, BenchConfig};
use contratensor::cica::{self, CicaModel, FitMode, FitOptions, PcaChoice};
use contratensor::cumulants::Cumulants;
use contratensor::decomp::DecompConfig;
use contratensor::htd::htd_with_diagnostics;
use contratensor::synth::{generate, Bimodal, SourceRates, SynthMode, SyntheticSpec, ThetaConvention};
use contratensor::tensor::SymTensor4;
use contratensor::{Error, ErrorKind, Result};
use nalgebra::DMatrix;

use io::{matrix_csv, read_table, write_atomic, LabelColumn, Table};

pub const THREADS_ENV: &str = "CONTRATENSOR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "contratensor", version, about = "Contrastive ICA with fourth-order cumulant tensors")]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Covariance and fourth-order cumulant of each dataset.
    Cumulant(CumulantArgs),
    /// Eigenvalue magnitudes of the flattened cumulants with suggested ranks.
    Scree(ScreeArgs),
    /// Fit a contrastive model.
    Fit(FitArgs),
    /// Project foreground rows onto two fitted patterns.
    Project(ProjectArgs),
    /// Synthetic recovery benchmark against contrastive PCA.
    Bench(BenchArgs),
    /// Draw a synthetic foreground/background pair.
    Synth(SynthArgs),
    /// Hierarchical decomposition of a tensor file.
    Htd(HtdArgs),
}

#[derive(Debug, Args)]
struct CumulantArgs {
    #[arg(long)]
    fg: Option<PathBuf>,
    /// Label column in the foreground file to leave out (name or 1-based index).
    #[arg(long)]
    label_col: Option<LabelColumn>,
    #[arg(long)]
    bg: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScreeArgs {
    #[arg(long)]
    fg: Option<PathBuf>,
    /// Label column in the foreground file to leave out (name or 1-based index).
    #[arg(long)]
    label_col: Option<LabelColumn>,
    #[arg(long)]
    bg: Option<PathBuf>,
    /// A symtensor4 file instead of data.
    #[arg(long, conflicts_with_all = ["fg", "bg"])]
    tensor: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    General,
    Prop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PcaArg {
    None,
    Auto,
    Fixed(usize),
}

fn parse_pca(s: &str) -> std::result::Result<PcaArg, String> {
    match s {
        "none" => Ok(PcaArg::None),
        "auto" => Ok(PcaArg::Auto),
        _ => match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(PcaArg::Fixed(k)),
            _ => Err(format!("expected a positive integer, auto or none, got {s:?}")),
        },
    }
}

fn parse_components(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected I,J")?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad index {a:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad index {b:?}"))?;
    if a == 0 || b == 0 {
        return Err("component indices start at 1".into());
    }
    if a == b {
        return Err("component indices must differ".into());
    }
    Ok((a, b))
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    fg: PathBuf,
    #[arg(long)]
    bg: PathBuf,
    #[arg(long, value_enum, default_value = "general")]
    mode: ModeArg,
    /// Background rank; suggested from the background scree when omitted.
    #[arg(long)]
    rank_r: Option<usize>,
    /// Foreground rank; defaults to q - r.
    #[arg(long)]
    rank_l: Option<usize>,
    /// Total rank r + l; suggested from the foreground scree when omitted.
    #[arg(long)]
    q: Option<usize>,
    /// Fixed proportionality constant (prop mode only).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_parser = parse_pca, default_value = "none")]
    pca_k: PcaArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    restarts: usize,
    /// Column holding sample labels in the foreground file (name or 1-based index).
    #[arg(long)]
    label_col: Option<LabelColumn>,
    /// Patterns used for projection.csv, 1-based.
    #[arg(long, value_parser = parse_components)]
    components: Option<(usize, usize)>,
    #[arg(long)]
    svg: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    fg: PathBuf,
    /// 1-based pattern indices; defaults to the top two.
    #[arg(long, value_parser = parse_components)]
    components: Option<(usize, usize)>,
    #[arg(long)]
    label_col: Option<LabelColumn>,
    #[arg(long)]
    svg: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Dimensions as a range `4-12` or a list `4,6,8`.
    #[arg(long, default_value = "4-12", value_parser = parse_dims)]
    dims: Dims,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    #[arg(long, default_value_t = 100)]
    alphas: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Reduced profile: p in {4,6,8}, n = 20000, 20 seeds.
    #[arg(long)]
    ci: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone)]
struct Dims(Vec<usize>);

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let bad = || format!("bad dimension list {s:?}");
    let dims: Vec<usize> = if let Some((a, b)) = s.split_once('-') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
    };
    if dims.is_empty() || dims.iter().any(|&p| p < 2) {
        return Err(format!("dimensions must be at least 2, got {s:?}"));
    }
    Ok(Dims(dims))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ThetaArg {
    Scale,
    Rate,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    p: usize,
    /// Background sources; defaults to p.
    #[arg(long)]
    r: Option<usize>,
    /// Salient sources; defaults to p - 1.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "general")]
    mode: ModeArg,
    /// How the exponential parameters are read.
    #[arg(long, value_enum, default_value = "scale")]
    theta: ThetaArg,
    /// Make the first salient source a two-component mixture with this shift.
    #[arg(long)]
    bimodal_shift: Option<f64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HtdArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} file {} does not exist", path.display())))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

fn cumulant(args: CumulantArgs) -> Result<()> {
    if args.fg.is_none() && args.bg.is_none() {
        return Err(usage("give --fg, --bg or both"));
    }
    ensure_dir(&args.out)?;
    for (tag, path) in [("fg", &args.fg), ("bg", &args.bg)] {
        let Some(path) = path else { continue };
        require_file(path, tag)?;
        let label = if tag == "fg" { args.label_col.as_ref() } else { None };
        let table = read_table(path, label)?;
        let c = Cumulants::estimate(&table.data)?;
        write_atomic(&args.out.join(format!("{tag}_cov.csv")), matrix_csv(&c.covariance, None).as_bytes())?;
        write_atomic(&args.out.join(format!("{tag}_k4.txt")), c.fourth.to_string().as_bytes())?;
        println!("{tag}: {} rows, {} variables", table.data.nrows(), table.data.ncols());
    }
    Ok(())
}

fn write_scree(out: &Path, tag: &str, report: &cica::ScreeReport) -> Result<()> {
    let mut text = String::from("index,magnitude\n");
    for (i, m) in report.magnitudes.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, io::fmt_f64(*m)));
    }
    write_atomic(&out.join(format!("scree_{tag}.csv")), text.as_bytes())?;
    if report.magnitudes.iter().all(|m| *m <= f64::MIN_POSITIVE) {
        log::warn!("{tag}: every eigenvalue is zero; the data has no fourth-order structure");
    }
    Ok(())
}

fn scree(args: ScreeArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    if let Some(path) = &args.tensor {
        require_file(path, "tensor")?;
        let t: SymTensor4 = fs::read_to_string(path)?.parse()?;
        let report = cica::scree(&t)?;
        write_scree(&args.out, "tensor", &report)?;
        println!("tensor: suggested rank {}", report.suggested_rank);
        return Ok(());
    }
    if args.fg.is_none() && args.bg.is_none() {
        return Err(usage("give --fg/--bg or --tensor"));
    }
    for (tag, path, what) in [("fg", &args.fg, "q"), ("bg", &args.bg, "r")] {
        let Some(path) = path else { continue };
        require_file(path, tag)?;
        let label = if tag == "fg" { args.label_col.as_ref() } else { None };
        let table = read_table(path, label)?;
        let c = Cumulants::estimate(&table.data)?;
        if c.covariance.trace() <= 0.0 {
            log::warn!("{tag}: zero variance in every column");
        }
        let report = cica::scree(&c.fourth)?;
        write_scree(&args.out, tag, &report)?;
        println!("{tag}: suggested {what} = {}", report.suggested_rank);
    }
    Ok(())
}

fn read_labeled(path: &Path, label: Option<&LabelColumn>) -> Result<(Table, String)> {
    let table = read_table(path, label)?;
    let name = table.label_name.clone().unwrap_or_else(|| "label".to_string());
    Ok((table, name))
}

fn projection_files(
    out: &Path,
    table: &Table,
    label_name: &str,
    model: &CicaModel,
    components: Option<(usize, usize)>,
    svg: bool,
) -> Result<()> {
    let (i, j) = components.unwrap_or((1, 2));
    let l = model.foreground.len();
    if i > l || j > l {
        return Err(usage(format!("component index out of range: the model has {l} patterns")));
    }
    let coords = cica::project(&table.data, model, i - 1, j - 1)?;
    let names = [format!("b{i}"), format!("b{j}")];
    let mut text = String::new();
    let mut header = names.to_vec();
    if table.labels.is_some() {
        header.push(label_name.to_string());
    }
    text.push_str(&header.join(","));
    text.push('\n');
    for (r, row) in coords.row_iter().enumerate() {
        text.push_str(&format!("{},{}", io::fmt_f64(row[0]), io::fmt_f64(row[1])));
        if let Some(ls) = &table.labels {
            text.push(',');
            text.push_str(&csv_field(&ls[r]));
        }
        text.push('\n');
    }
    write_atomic(&out.join("projection.csv"), text.as_bytes())?;
    if svg {
        let picture = svg::scatter(&coords, table.labels.as_deref(), &names[0], &names[1]);
        write_atomic(&out.join("projection.svg"), picture.as_bytes())?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fit(args: FitArgs) -> Result<()> {
    require_file(&args.fg, "foreground")?;
    require_file(&args.bg, "background")?;
    let mode = match args.mode {
        ModeArg::General => FitMode::General,
        ModeArg::Prop => FitMode::Proportional,
    };
    if args.gamma.is_some() && mode == FitMode::General {
        return Err(usage("--gamma only applies to --mode prop"));
    }
    let opts = FitOptions {
        mode,
        r: args.rank_r,
        l: args.rank_l,
        q: args.q,
        gamma: args.gamma,
        pca: match args.pca_k {
            PcaArg::None => PcaChoice::None,
            PcaArg::Auto => PcaChoice::Auto,
            PcaArg::Fixed(k) => PcaChoice::Fixed(k),
        },
        decomp: DecompConfig {
            restarts: args.restarts,
            seed: args.seed,
            ..DecompConfig::default()
        },
    };
    let (x, label_name) = read_labeled(&args.fg, args.label_col.as_ref())?;
    let y = read_table(&args.bg, None)?;
    let output = cica::fit_data(&x.data, &y.data, &opts)?;
    let model = &output.model;

    ensure_dir(&args.out)?;
    write_atomic(&args.out.join("model.json"), model.to_json()?.as_bytes())?;
    let header = numbered("b", model.foreground.len());
    write_atomic(
        &args.out.join("patterns.csv"),
        matrix_csv(&model.foreground_matrix(), Some(&header)).as_bytes(),
    )?;
    if model.pca.is_some() {
        write_atomic(
            &args.out.join("patterns_original.csv"),
            matrix_csv(&model.foreground_original(), Some(&header)).as_bytes(),
        )?;
    }
    if model.foreground.len() >= 2 {
        projection_files(&args.out, &x, &label_name, model, args.components, args.svg)?;
    } else if args.svg || args.components.is_some() {
        log::warn!("fewer than two foreground patterns; no projection written");
    }

    println!(
        "fitted {} model: r = {}, l = {}, residual norm {:.6e}",
        match mode {
            FitMode::General => "general",
            FitMode::Proportional => "proportional",
        },
        model.ranks.r.map_or("-".to_string(), |r| r.to_string()),
        model.ranks.l,
        model.residual_norm
    );
    if let Some(g) = model.gamma {
        match &model.gamma_diagnostics {
            Some(d) => println!("gamma = {g:.6} (spread {:.3e}, {} indices excluded)", d.spread, d.excluded.len()),
            None => println!("gamma = {g:.6} (fixed)"),
        }
    }
    Ok(())
}

fn project(args: ProjectArgs) -> Result<()> {
    require_file(&args.model, "model")?;
    require_file(&args.fg, "foreground")?;
    let model = CicaModel::from_json(&fs::read_to_string(&args.model)?)?;
    let (x, label_name) = read_labeled(&args.fg, args.label_col.as_ref())?;
    ensure_dir(&args.out)?;
    projection_files(&args.out, &x, &label_name, &model, args.components, args.svg)
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut cfg = BenchConfig {
        dims: args.dims.0,
        n: args.n,
        seeds: args.seeds,
        alphas: args.alphas,
        data_seed: args.data_seed,
        restarts: args.restarts,
        ..BenchConfig::default()
    };
    if args.ci {
        cfg.dims = vec![4, 6, 8];
        cfg.n = 20_000;
        cfg.seeds = 20;
    }
    if cfg.seeds == 0 || cfg.alphas == 0 || cfg.restarts == 0 || cfg.n < 2 {
        return Err(usage("seeds, alphas and restarts must be positive and n at least 2"));
    }
    ensure_dir(&args.out)?;
    let final_path = args.out.join("bench.csv");
    let partial = args.out.join("bench.csv.partial");
    let mut writer = csv::Writer::from_path(&partial).map_err(csv_error)?;
    let summaries = run_bench(&cfg, |rows| {
        for row in rows {
            writer.serialize(row).map_err(csv_error)?;
        }
        writer.flush()?;
        Ok(())
    })?;
    drop(writer);
    fs::rename(&partial, &final_path)?;

    let mut summary = csv::Writer::from_writer(Vec::new());
    for s in &summaries {
        summary.serialize(s).map_err(csv_error)?;
    }
    let bytes = summary.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&args.out.join("bench_summary.csv"), &bytes)?;

    let mut stdout = std::io::stdout().lock();
    for s in &summaries {
        let gamma = s.gamma.map_or(String::new(), |g| format!("  gamma {g:.4}"));
        writeln!(
            stdout,
            "p = {:2}  {:9}  best {:.4}  median {:.4}{gamma}",
            s.p,
            s.method.name(),
            s.best_cosine,
            s.median_cosine
        )?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mode = match args.mode {
        ModeArg::General => SynthMode::General,
        ModeArg::Prop => SynthMode::Proportional,
    };
    let convention = match args.theta {
        ThetaArg::Scale => ThetaConvention::Scale,
        ThetaArg::Rate => ThetaConvention::Rate,
    };
    let r = args.r.unwrap_or(args.p);
    let l = args.l.unwrap_or(args.p.saturating_sub(1));
    let mut spec = SyntheticSpec::new(args.p, r, l, args.n, args.seed, mode);
    spec.rates = SourceRates::standard(mode, r, l, convention);
    if let Some(shift) = args.bimodal_shift {
        spec.bimodal = Some(Bimodal { source: 0, shift });
    }
    let (x, y, truth) = generate(&spec)?;

    ensure_dir(&args.out)?;
    let mut header = numbered("x", args.p);
    let x_text = match &truth.labels {
        Some(labels) => {
            header.push("label".into());
            let mut text = header.join(",") + "\n";
            for (row, lab) in x.values().row_iter().zip(labels) {
                let cells: Vec<String> = row.iter().map(|v| io::fmt_f64(*v)).collect();
                text.push_str(&format!("{},{lab}\n", cells.join(",")));
            }
            text
        }
        None => matrix_csv(x.values(), Some(&header)),
    };
    write_atomic(&args.out.join("X.csv"), x_text.as_bytes())?;
    let header = numbered("x", args.p);
    write_atomic(&args.out.join("Y.csv"), matrix_csv(y.values(), Some(&header)).as_bytes())?;

    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    let doc = serde_json::json!({
        "spec": spec,
        "A": rows(&truth.a),
        "B": rows(&truth.b),
        "rates": truth.rates,
        "gamma": truth.gamma,
    });
    write_atomic(&args.out.join("truth.json"), serde_json::to_string_pretty(&doc)?.as_bytes())?;
    println!("wrote {} foreground and {} background rows in dimension {}", x.nrows(), y.nrows(), args.p);
    Ok(())
}

fn htd_cmd(args: HtdArgs) -> Result<()> {
    require_file(&args.tensor, "tensor")?;
    let t: SymTensor4 = fs::read_to_string(&args.tensor)?.parse()?;
    let (d, diag) = htd_with_diagnostics(&t, args.rank)?;
    if diag.truncated {
        log::warn!(
            "flattening has numerical rank {}, returning {} terms",
            diag.numerical_rank,
            d.len()
        );
    }
    let mut header = vec!["weight".to_string()];
    header.extend(numbered("v", t.dim()));
    let mut text = header.join(",") + "\n";
    for term in d.terms() {
        let mut cells = vec![io::fmt_f64(term.weight)];
        cells.extend(term.vector.iter().map(|v| io::fmt_f64(*v)));
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    ensure_dir(&args.out)?;
    write_atomic(&args.out.join("htd.csv"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("could not configure {n} threads: {e}")))
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn report(kind: &str, code: i32, message: &str) {
    let line = serde_json::json!({ "error": kind, "code": code, "message": message });
    eprintln!("{line}");
}

fn dispatch(command: Command) -> Result<()> {
    configure_threads()?;
    match command {
        Command::Cumulant(a) => cumulant(a),
        Command::Scree(a) => scree(a),
        Command::Fit(a) => fit(a),
        Command::Project(a) => project(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
        Command::Htd(a) => htd_cmd(a),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            report("usage", 2, &first);
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(e.kind());
            let kind = match e.kind() {
                ErrorKind::Usage => "usage",
                ErrorKind::Data => "data",
                ErrorKind::Numerical => "numerical",
            };
            report(kind, code, &e.to_string());
            code
        }
    }
}
