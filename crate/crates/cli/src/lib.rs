//! Command-line front end: sampling, squishing, rendering, interface
//! measures, kernel tables, spanning forests and verification suites.

pub mod render;
pub mod suites;

use aztec_core::heights::HeightField;
use aztec_core::io::{self, format_f64, stamped_json, write_file};
use aztec_core::kernels::{airy_fredholm, derived_constants, AiryQuery, KernelCache};
use aztec_core::lattice::{Covering, DiamondGraph};
use aztec_core::measures::{analyze_covering, interface_ensemble, resolve_interface, InterfaceInputs};
use aztec_core::sampler::{Sampler, SamplerConfig};
use aztec_core::trees::{self, build_box, tree_graphs, tree_to_dimers, wilson_sample, Variant};
use aztec_core::{Error, C64};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "aztec", version, about = "Two-periodic Aztec diamond toolkit", args_conflicts_with_subcommands = true)]
pub struct Cli {
    /// Re-run the configuration recorded in a manifest instead of a subcommand.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output location for a manifest re-run (defaults to the recorded one).
    #[arg(long, requires = "manifest")]
    pub out_override: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// The run configuration; serialized verbatim into every manifest.
#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Exact Boltzmann samples by domino shuffling, one JSON covering each.
    Sample {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        a: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Squish one covering: decomposition JSON and the four height fields as CSV.
    Squish {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// SVG of a squished configuration.
    Render {
        #[command(flatten)]
        src: Source,
        #[arg(long, value_enum, default_value_t = render::ColorBy::Class)]
        color: render::ColorBy,
        /// Draw mirror markers at meeting points.
        #[arg(long)]
        mirrors: bool,
        /// Pixels per lattice unit.
        #[arg(long, default_value_t = 4.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// κ_m, ν_m (and μ_m) statistics on the rough-smooth interface.
    Measure {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        a: f64,
        /// Line positions β (repeatable).
        #[arg(long = "beta", default_values_t = vec![0.0], allow_negative_numbers = true)]
        betas: Vec<f64>,
        /// Interval `l,r` in Airy units (repeatable).
        #[arg(long = "interval", value_parser = parse_interval, allow_hyphen_values = true)]
        intervals: Vec<(f64, f64)>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of averaging terms for ν_m and μ_m.
        #[arg(long)]
        big_m: Option<usize>,
        /// Also compute μ_m.
        #[arg(long)]
        mu: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tables of smooth-phase and Airy quantities.
    Kernels {
        #[arg(long)]
        a: f64,
        #[arg(long, value_enum, default_value_t = Table::Ekl)]
        table: Table,
        /// Largest |k|, |l| for the E table.
        #[arg(long, default_value_t = 8)]
        range: i64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wilson forests on the box L_R and their dimer coverings.
    Trees {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        a: f64,
        #[arg(long, value_enum, default_value_t = BoxVariant::W)]
        variant: BoxVariant,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also tabulate box K^{-1} against the smooth phase for these R.
        #[arg(long, value_delimiter = ',')]
        convergence: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verification suites; exit code 2 when a check fails.
    Verify {
        #[arg(long, value_enum, default_value_t = suites::Suite::All)]
        suite: suites::Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override every Monte-Carlo sample count.
        #[arg(long)]
        samples: Option<usize>,
        /// Directory written by `sample`, checked by the boltzmann suite.
        #[arg(long)]
        samples_dir: Option<PathBuf>,
        /// JSON report path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Where a single covering comes from: a sample index or a JSON file.
#[derive(clap::Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub a: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    /// Covering JSON written by `sample`; overrides seed and index.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Table {
    /// E_{k,l} for |k|, |l| <= range.
    Ekl,
    /// Constants of the rough-smooth boundary.
    Constants,
    /// Extended Airy count statistics on unit intervals.
    Fredholm,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxVariant {
    W,
    F,
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (l, r) = s.split_once(',').ok_or_else(|| format!("interval '{s}' is not of the form l,r"))?;
    let l: f64 = l.trim().parse().map_err(|e| format!("interval '{s}': {e}"))?;
    let r: f64 = r.trim().parse().map_err(|e| format!("interval '{s}': {e}"))?;
    Ok((l, r))
}

/// Manifest written next to every artifact set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    pub config: Command,
    pub files: Vec<String>,
}

impl Command {
    fn out_path(&self) -> Option<&Path> {
        match self {
            Command::Sample { out, .. }
            | Command::Squish { out, .. }
            | Command::Render { out, .. }
            | Command::Measure { out, .. }
            | Command::Trees { out, .. } => Some(out),
            Command::Kernels { out, .. } | Command::Verify { out, .. } => out.as_deref(),
        }
    }

    fn set_out(&mut self, p: PathBuf) {
        match self {
            Command::Sample { out, .. }
            | Command::Squish { out, .. }
            | Command::Render { out, .. }
            | Command::Measure { out, .. }
            | Command::Trees { out, .. } => *out = p,
            Command::Kernels { out, .. } | Command::Verify { out, .. } => *out = Some(p),
        }
    }

    /// SHA-256 of the configuration with output locations removed.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out");
        }
        let text = io::to_json(&v).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cmd = match (cli.command, cli.manifest) {
        (Some(c), _) => c,
        (None, Some(path)) => match load_manifest(&path) {
            Ok(mut m) => {
                if let Some(o) = cli.out_override {
                    m.config.set_out(o);
                }
                m.config
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INVALID;
            }
        },
        (None, None) => {
            eprintln!("error: a subcommand or --manifest is required (see --help)");
            return EXIT_INVALID;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    match run(&cmd) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::VerifyFailed) => EXIT_VERIFY_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn load_manifest(path: &Path) -> Result<Manifest, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Cap the global rayon pool at `AZTEC_THREADS` when set.
fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("AZTEC_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("AZTEC_THREADS = '{v}' is not a positive integer")))?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub enum Outcome {
    Done,
    VerifyFailed,
}

type R<T> = Result<T, Error>;

pub fn run(cmd: &Command) -> R<Outcome> {
    let hash = cmd.config_hash();
    let mut files = Vec::new();
    let outcome = match cmd {
        Command::Sample { m, a, seed, count, out } => {
            let s = Sampler::new(SamplerConfig::new(*m, *a, *seed))?;
            for i in 0..*count as u64 {
                let cov = s.sample_index(i);
                let name = format!("sample_{i:06}.json");
                let ex = io::export_covering(&s.graph.graph, &cov);
                write_file(&out.join(&name), &stamped_json(&hash, "covering", &ex)?)?;
                files.push(name);
            }
            write_manifest(cmd, &hash, out, files)?;
            Outcome::Done
        }
        Command::Squish { src, out } => {
            let (g, cov) = load_source(src)?;
            let (hs, sq, dec) = analyze_covering(&g, &cov)?;
            let ex = io::export_decomposition(&sq, &dec);
            write_file(&out.join("decomposition.json"), &stamped_json(&hash, "decomposition", &ex)?)?;
            files.push("decomposition.json".into());
            for (name, f) in [("h", &hs.h), ("ha", &hs.ha), ("hl", &hs.hl), ("hc", &hs.hc)] {
                let file = format!("height_{name}.csv");
                write_file(&out.join(&file), &height_csv(&hash, f))?;
                files.push(file);
            }
            write_manifest(cmd, &hash, out, files)?;
            Outcome::Done
        }
        Command::Render { src, color, mirrors, scale, out } => {
            let (g, cov) = load_source(src)?;
            let (hs, sq, dec) = analyze_covering(&g, &cov)?;
            let opts = render::RenderOptions { color: *color, mirrors: *mirrors, scale: *scale };
            let svg = render::render_svg(&sq, &dec, Some(&hs.hc), &opts, Some(&hash));
            write_file(out, &svg)?;
            write_manifest(cmd, &hash, out.parent().unwrap_or(Path::new(".")), vec![file_name(out)])?;
            Outcome::Done
        }
        Command::Measure { m, a, betas, intervals, samples, seed, big_m, mu, out } => {
            if intervals.is_empty() {
                return Err(Error::InvalidParameter("at least one --interval l,r is required".into()));
            }
            let mut inp = InterfaceInputs::new(*m, *a, betas.clone(), intervals.clone());
            inp.big_m = *big_m;
            inp.with_mu = *mu;
            let spec = resolve_interface(&inp)?;
            let st = interface_ensemble(&SamplerConfig::new(*m, *a, *seed), &spec, *samples)?;
            write_file(out, &measure_csv(&hash, &st))?;
            let json = out.with_extension("json");
            write_file(&json, &stamped_json(&hash, "interface-ensemble", &st)?)?;
            let dir = out.parent().unwrap_or(Path::new("."));
            write_manifest(cmd, &hash, dir, vec![file_name(out), file_name(&json)])?;
            Outcome::Done
        }
        Command::Kernels { a, table, range, out } => {
            let text = kernel_table(&hash, *a, *table, *range)?;
            match out {
                Some(p) => {
                    write_file(p, &text)?;
                    write_manifest(cmd, &hash, p.parent().unwrap_or(Path::new(".")), vec![file_name(p)])?;
                }
                None => print!("{text}"),
            }
            Outcome::Done
        }
        Command::Trees { r, a, variant, count, seed, convergence, out } => {
            let v = match variant {
                BoxVariant::W => Variant::W,
                BoxVariant::F => Variant::F,
            };
            let bx = build_box(*r, *a, v)?;
            let (ptg, _) = tree_graphs(&bx)?;
            for i in 0..*count as u64 {
                let (f, stats) = wilson_sample(&ptg, *a, *seed, i)?;
                let cov = tree_to_dimers(&bx, &f)?;
                let rec = serde_json::json!({
                    "index": i,
                    "walk_steps": stats.steps,
                    "forest": io::export_forest(&f, &ptg),
                    "covering": io::export_covering(&bx.graph, &cov),
                });
                let name = format!("forest_{i:06}.json");
                write_file(&out.join(&name), &stamped_json(&hash, "forest", &rec)?)?;
                files.push(name);
            }
            if !convergence.is_empty() {
                let pairs = [((1, 0), (0, 1)), ((1, 0), (2, -1)), ((-1, 2), (2, 1)), ((3, 2), (0, -1))];
                let rows = trees::box_kinv_convergence(convergence, *a, &pairs)?;
                let mut s = format!("# config_hash={hash}\nr,wx,wy,bx,by,finite_re,finite_im,smooth_re,smooth_im,discrepancy,residual\n");
                for row in rows {
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{}\n",
                        row.r,
                        row.white.0,
                        row.white.1,
                        row.black.0,
                        row.black.1,
                        format_f64(row.finite.re),
                        format_f64(row.finite.im),
                        format_f64(row.smooth.re),
                        format_f64(row.smooth.im),
                        format_f64(row.discrepancy),
                        format_f64(row.residual)
                    ));
                }
                write_file(&out.join("convergence.csv"), &s)?;
                files.push("convergence.csv".into());
            }
            write_manifest(cmd, &hash, out, files)?;
            Outcome::Done
        }
        Command::Verify { suite, seed, samples, samples_dir, out } => {
            let report = suites::run_suite(*suite, *seed, *samples, samples_dir.as_deref())?;
            let text = stamped_json(&hash, "verify-report", &report)?;
            match out {
                Some(p) => {
                    write_file(p, &text)?;
                    write_manifest(cmd, &hash, p.parent().unwrap_or(Path::new(".")), vec![file_name(p)])?;
                }
                None => print!("{text}"),
            }
            for c in &report.checks {
                let tag = if c.pass { "PASS" } else if c.known_defect.is_some() { "FAIL (known)" } else { "FAIL" };
                eprintln!("{tag:>12}  {}/{}", c.suite, c.name);
            }
            if report.pass {
                Outcome::Done
            } else {
                Outcome::VerifyFailed
            }
        }
    };
    Ok(outcome)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn write_manifest(cmd: &Command, hash: &str, dir: &Path, files: Vec<String>) -> R<()> {
    let man = Manifest { config_hash: hash.into(), version: env!("CARGO_PKG_VERSION").into(), config: cmd.clone(), files };
    let name = match cmd.out_path() {
        Some(p) if p.extension().is_some() => format!("{}.manifest.json", file_name(p)),
        _ => "manifest.json".into(),
    };
    write_file(&dir.join(name), &io::to_json(&man)?)
}

/// The diamond of `src` and its covering (sampled or read from JSON).
pub fn load_source(src: &Source) -> R<(DiamondGraph, Covering)> {
    match &src.input {
        Some(path) => {
            let g = aztec_core::lattice::build_diamond(src.m, src.a, 1.0)?;
            let text = std::fs::read_to_string(path)?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let data = v.get("data").cloned().unwrap_or(v);
            let ex: io::CoveringExport = serde_json::from_value(data)?;
            let cov = io::import_covering(&g.graph, &ex)?;
            Ok((g, cov))
        }
        None => {
            let s = Sampler::new(SamplerConfig::new(src.m, src.a, src.seed))?;
            let cov = s.sample_index(src.index);
            Ok((s.graph, cov))
        }
    }
}

fn height_csv(hash: &str, f: &HeightField) -> String {
    format!("# config_hash={hash}\n{}", f.to_csv())
}

fn measure_csv(hash: &str, st: &aztec_core::measures::EnsembleStats) -> String {
    let mut s = format!("# config_hash={hash}\np,q,statistic,value,stderr,oracle_value\n");
    let mut row = |p: usize, q: usize, name: &str, v: f64, se: f64, o: f64| {
        s.push_str(&format!("{p},{q},{name},{},{},{}\n", format_f64(v), format_f64(se), format_f64(o)));
    };
    for c in &st.cells {
        row(c.p, c.q, "kappa_mean", c.kappa.mean, c.kappa.stderr, c.oracle_mean);
        row(c.p, c.q, "kappa_variance", c.kappa.variance, f64::NAN, c.oracle_variance);
        row(c.p, c.q, "nu_mean", c.nu.mean, c.nu.stderr, c.oracle_mean);
        row(c.p, c.q, "kappa_minus_nu_mean", c.kappa_minus_nu.mean, c.kappa_minus_nu.stderr, 0.0);
        if let Some(mu) = &c.mu {
            row(c.p, c.q, "mu_mean", mu.mean, mu.stderr, c.oracle_mean);
        }
    }
    s
}

fn kernel_table(hash: &str, a: f64, table: Table, range: i64) -> R<String> {
    let mut s = format!("# config_hash={hash}\n");
    match table {
        Table::Ekl => {
            if !(0..=64).contains(&range) {
                return Err(Error::InvalidParameter(format!("range {range} must lie in 0..=64")));
            }
            let kc = KernelCache::new(a)?;
            s.push_str("a,k,l,E\n");
            for k in -range..=range {
                for l in -range..=range {
                    s.push_str(&format!("{},{k},{l},{}\n", format_f64(a), format_f64(kc.e_kl(k, l)?)));
                }
            }
        }
        Table::Constants => {
            let c = derived_constants(a)?;
            s.push_str("name,value\n");
            for (n, v) in [
                ("a", c.a),
                ("c", c.c),
                ("xi", c.xi),
                ("c0", c.c0),
                ("lambda1", c.lambda1),
                ("lambda2", c.lambda2),
                ("decay_rate", c.big_c),
            ] {
                s.push_str(&format!("{n},{}\n", format_f64(v)));
            }
        }
        Table::Fredholm => {
            derived_constants(a)?;
            s.push_str("left,right,mean,variance,det_w_minus_1,det_w_plus_1\n");
            for left in -4..4 {
                let iv = (left as f64, left as f64 + 1.0);
                let q = |w: f64| AiryQuery { betas: vec![0.0], intervals: vec![iv], weights: vec![vec![C64::new(w, 0.0)]] };
                let lo = airy_fredholm(&q(-1.0))?;
                let hi = airy_fredholm(&q(1.0))?;
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    format_f64(iv.0),
                    format_f64(iv.1),
                    format_f64(lo.mean[0][0]),
                    format_f64(lo.covariance[0][0]),
                    format_f64(lo.det.re),
                    format_f64(hi.det.re)
                ));
            }
        }
    }
    Ok(s)
}
