use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use geoseg::cli::{self, BenchProtocol, DistanceRequest, MetricSpec, RunManifest};
use geoseg::evolve::SegmentationConfig;
use geoseg::fixtures::FixtureKind;
use geoseg::geom::Vec2;
use geoseg::{io, Error, Result};

#[derive(Parser)]
#[command(name = "geoseg", version, about = "Region-based segmentation with Randers minimal paths")]
struct Args {
    /// Write a synthetic fixture (image, truth mask, manifest) and exit.
    #[arg(long, value_name = "disk|blocks|clutter")]
    make_fixture: Option<String>,
    /// Directory for --make-fixture.
    #[arg(long, default_value = "fixture")]
    fixture_dir: PathBuf,
    /// Seed for --make-fixture.
    #[arg(long, default_value_t = 0)]
    fixture_seed: u64,
    /// Print the default segmentation config as TOML and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKind {
    Isotropic,
    Riemannian,
    Randers,
}

#[derive(Subcommand)]
enum Command {
    /// Run a segmentation manifest.
    Segment {
        manifest: PathBuf,
        /// Override the manifest's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Add the squared-distance term with weight 1 / tube_width^2.
        #[arg(long)]
        enable_divergence_term: bool,
    },
    /// Distance map, minimal path and level-set picture.
    Distance {
        #[arg(long, value_enum, default_value = "isotropic")]
        metric: MetricKind,
        /// Image used for the edge-based tensors.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Grid width and height without an image.
        #[arg(long, num_args = 2, default_values_t = [201, 201])]
        size: Vec<usize>,
        /// Constant drift for --metric randers.
        #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [0.0, 0.0])]
        omega: Vec<f64>,
        /// Rotational field demo `Id - a1^2 w w^T`, `a2 w`.
        #[arg(long)]
        fig2: bool,
        #[arg(long, default_value_t = 0.0)]
        a1: f64,
        #[arg(long, default_value_t = 0.0)]
        a2: f64,
        #[arg(long, num_args = 2)]
        source: Option<Vec<f64>>,
        #[arg(long, num_args = 2)]
        target: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2.0)]
        beta_data: f64,
        #[arg(long, default_value_t = 1.0)]
        beta_aniso: f64,
        #[arg(long, default_value_t = 20)]
        levels: usize,
        #[arg(long, default_value = "distance_out")]
        out: PathBuf,
    },
    /// Jaccard index of two masks, six decimals.
    Eval { a: PathBuf, b: PathBuf },
    /// Repeated runs with random landmarks on a fixture; summary CSV.
    Bench {
        #[arg(long, default_value = "disk")]
        fixture: String,
        #[arg(long, default_value_t = 30)]
        runs: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Segmentation config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write per-run rows here.
        #[arg(long)]
        runs_csv: Option<PathBuf>,
    },
    /// HTTP session service.
    Serve {
        /// Defaults to $GEOSEG_BIND or 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
        /// Save sessions here after each change.
        #[arg(long)]
        persist: Option<PathBuf>,
    },
}

fn point(v: Option<Vec<f64>>) -> Option<Vec2> {
    v.map(|v| [v[0], v[1]])
}

fn run(args: Args) -> Result<i32> {
    if args.dump_config {
        print!("{}", cli::default_config_toml());
        return Ok(0);
    }
    if let Some(kind) = &args.make_fixture {
        let path = cli::write_fixture(kind.parse::<FixtureKind>()?, args.fixture_seed, &args.fixture_dir)?;
        println!("{}", path.display());
        return Ok(0);
    }
    let Some(command) = args.command else {
        return Err(Error::InvalidInput("no command given (segment, distance, eval, bench, serve)".into()));
    };
    match command {
        Command::Segment { manifest, out, seed, max_iters, enable_divergence_term } => {
            let mut m = RunManifest::load(&manifest)?;
            if let Some(o) = out {
                m.output_dir = o;
            }
            if let Some(s) = seed {
                m.seed = s;
            }
            if let Some(n) = max_iters {
                m.config.max_iters = n;
            }
            if enable_divergence_term {
                m.config.lambda = 1.0 / (m.config.tube_width * m.config.tube_width);
            }
            let r = cli::segment(&m)?;
            let verdict = if r.converged { "converged" } else { "stopped at max_iters" };
            match r.jaccard {
                Some(j) => eprintln!("{verdict} after {} iterations, jaccard {j:.6}", r.iterations),
                None => eprintln!("{verdict} after {} iterations", r.iterations),
            }
            Ok(r.exit_code())
        }
        Command::Distance { metric, image, size, omega, fig2, a1, a2, source, target, beta_data, beta_aniso, levels, out } => {
            let image = image.as_deref().map(io::load_image).transpose()?;
            let metric = match (fig2, metric) {
                (true, _) => MetricSpec::Rotational { a1, a2 },
                (false, MetricKind::Isotropic) => MetricSpec::Isotropic,
                (false, MetricKind::Riemannian) => MetricSpec::Riemannian,
                (false, MetricKind::Randers) => MetricSpec::Randers { omega: [omega[0], omega[1]] },
            };
            let req = DistanceRequest {
                image,
                size: (size[0], size[1]),
                metric,
                beta_data,
                beta_aniso,
                source: point(source),
                target: point(target),
                ..Default::default()
            };
            let r = cli::distance(&req)?;
            std::fs::create_dir_all(&out)?;
            io::save_scalar(&r.map.to_field(), &out.join("distance.rsf1"))?;
            if let Some(p) = &r.path {
                io::save_contour(p, &out.join("geodesic.json"))?;
            }
            let pic = cli::level_set_image(&r.map, req.image.as_ref(), r.path.as_ref(), levels);
            io::save_image_png(&pic, &out.join("levels.png"))?;
            if let Some(a) = r.alignment {
                println!("mean alignment {a:.4}");
            }
            Ok(0)
        }
        Command::Eval { a, b } => {
            println!("{:.6}", cli::eval(&a, &b)?);
            Ok(0)
        }
        Command::Bench { fixture, runs, m, seed, config, runs_csv } => {
            let config = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)?;
                    toml::from_str::<SegmentationConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => SegmentationConfig::default(),
            };
            let p = BenchProtocol { fixture: fixture.parse()?, runs, m, seed, config };
            let (rows, summary) = cli::bench(&p)?;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("run {} (seed {}): {}", r.run, r.seed, r.error.as_deref().unwrap_or(""));
            }
            if let Some(path) = runs_csv {
                std::fs::write(path, cli::bench_runs_csv(&rows))?;
            }
            print!("{}", cli::bench_csv(&fixture, &summary));
            Ok(0)
        }
        Command::Serve { bind, persist } => {
            let bind = bind.or_else(|| std::env::var("GEOSEG_BIND").ok()).unwrap_or_else(|| "127.0.0.1:8080".into());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(geoseg::server::serve(&bind, persist))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
