mod image;
mod output;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flashquad::cache::DEFAULT_CACHE_PAGES;
use flashquad::dataset::{self, SyntheticParams};
use flashquad::flash::{FlashDevice, FlashGeometry, DEFAULT_SECTOR_COUNT};
use flashquad::replay::{self, DEFAULT_RADIUS};
use flashquad::store::UpdatePackage;
use flashquad::{BuildParams, Database, DbOptions, Object, Op, PageCache, Point, Polygon, TreeHandle};

use image::Session;
use output::Format;

#[derive(Parser)]
#[command(name = "flashquad", version, about = "Versioned 9x9 quadtree on a simulated NOR flash image")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct FormatArgs {
    /// Device size in 64 KiB sectors.
    #[arg(long, default_value_t = DEFAULT_SECTOR_COUNT, value_parser = clap::value_parser!(u32).range(1..=16_384))]
    sectors: u32,
    /// Objects a leaf list may hold before its cell splits.
    #[arg(long, default_value_t = BuildParams::default().leaf_split_threshold, value_parser = clap::value_parser!(u16).range(1..))]
    split_threshold: u16,
    /// Deepest node level (0..=5).
    #[arg(long, default_value_t = BuildParams::default().max_depth, value_parser = clap::value_parser!(u8).range(0..=5))]
    max_depth: u8,
    /// Deepest node level that holds zone entries.
    #[arg(long, default_value_t = BuildParams::default().zone_max_depth, value_parser = clap::value_parser!(u8).range(0..=5))]
    zone_max_depth: u8,
    /// Committed versions kept before the oldest is dropped.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..))]
    max_versions: u8,
    /// Store identical leaf lists separately.
    #[arg(long)]
    no_dedup: bool,
    /// Replace an existing image.
    #[arg(long)]
    force: bool,
}

impl FormatArgs {
    fn options(&self) -> Result<DbOptions> {
        if self.zone_max_depth > self.max_depth {
            bail!("--zone-max-depth {} exceeds --max-depth {}", self.zone_max_depth, self.max_depth);
        }
        Ok(DbOptions {
            params: BuildParams {
                leaf_split_threshold: self.split_threshold,
                max_depth: self.max_depth,
                zone_max_depth: self.zone_max_depth,
            },
            max_versions: self.max_versions,
            dedup: !self.no_dedup,
            origin: (0, 0),
        })
    }

    fn check_target(&self, image: &Path) -> Result<()> {
        if image.exists() && !self.force {
            bail!("{} exists; pass --force to replace it", image.display());
        }
        Ok(())
    }

    fn device(&self) -> FlashDevice {
        FlashDevice::new(FlashGeometry::new(self.sectors))
    }
}

#[derive(Args, Clone, Copy)]
struct ReadArgs {
    /// Version to read; defaults to the uncommitted head, else the current version.
    #[arg(long)]
    version: Option<u32>,
    /// LRU cache size in pages for the query (0 disables it).
    #[arg(long, default_value_t = DEFAULT_CACHE_PAGES)]
    cache_pages: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Create a device image holding one empty committed version.
    Format {
        #[command(flatten)]
        opts: FormatArgs,
        image: PathBuf,
    },
    /// Format an image and insert a dataset file as one committed version.
    Build {
        #[command(flatten)]
        opts: FormatArgs,
        dataset: PathBuf,
        image: PathBuf,
    },
    /// Insert objects into the uncommitted head (created if needed).
    Insert {
        /// Gantry id; needs --at.
        #[arg(long, conflicts_with_all = ["zone", "file"], requires = "at")]
        gantry: Option<u32>,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        at: Option<Point>,
        /// Zone id; needs --polygon.
        #[arg(long, conflicts_with = "file", requires = "polygon")]
        zone: Option<u32>,
        /// Vertices as `x,y;x,y;...`.
        #[arg(long, value_parser = parse_polygon)]
        polygon: Option<Polygon>,
        /// Dataset file with G/Z records.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Commit right away.
        #[arg(long)]
        commit: bool,
        image: PathBuf,
    },
    /// Delete objects by id from the uncommitted head (created if needed).
    Rm {
        /// Ids to delete, repeated or comma-separated.
        #[arg(long = "id", required = true, value_delimiter = ',')]
        ids: Vec<u32>,
        #[arg(long)]
        commit: bool,
        image: PathBuf,
    },
    /// Zones containing a point.
    QueryZones {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        at: Point,
        #[command(flatten)]
        read: ReadArgs,
        image: PathBuf,
    },
    /// Gantries within a radius of a point.
    QueryGantries {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        at: Point,
        /// Radius in metres.
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: u32,
        #[command(flatten)]
        read: ReadArgs,
        image: PathBuf,
    },
    /// Structure statistics of a version.
    Stats {
        #[command(flatten)]
        read: ReadArgs,
        image: PathBuf,
    },
    /// List committed versions and the uncommitted head.
    Versions {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        image: PathBuf,
    },
    /// Commit the uncommitted head.
    Commit { image: PathBuf },
    /// Discard the uncommitted head.
    Rollback { image: PathBuf },
    /// Write the update package that turns version `base` into `next`.
    Diff {
        image: PathBuf,
        #[arg(long)]
        base: u32,
        #[arg(long)]
        next: u32,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Apply an update package to an image holding its base version.
    Apply { package: PathBuf, image: PathBuf },
    /// Erase subsectors no live version uses.
    Gc { image: PathBuf },
    /// Replay a drive trace and write the per-step CSV report.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: u32,
        #[arg(long)]
        version: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_CACHE_PAGES)]
        cache_pages: usize,
        /// Report path; stdout when omitted.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        image: PathBuf,
    },
    /// Check every live version; exits 1 on any problem.
    Verify { image: PathBuf },
    /// Write a seeded synthetic dataset.
    GenDataset {
        #[arg(long, default_value_t = SyntheticParams::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = SyntheticParams::default().gantries)]
        gantries: u32,
        #[arg(long, default_value_t = SyntheticParams::default().zones)]
        zones: u32,
        #[arg(long, default_value_t = SyntheticParams::default().towns, value_parser = clap::value_parser!(u32).range(1..))]
        towns: u32,
        #[arg(long, default_value_t = SyntheticParams::default().roads, value_parser = clap::value_parser!(u32).range(1..))]
        roads: u32,
        /// Also write a drive trace along the first road.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Length of that drive in metres.
        #[arg(long, default_value_t = 5_000.0)]
        trace_length: f64,
        /// Dataset path; stdout when omitted.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let x = x.trim().parse::<i32>().map_err(|e| format!("bad x {x:?}: {e}"))?;
    let y = y.trim().parse::<i32>().map_err(|e| format!("bad y {y:?}: {e}"))?;
    Ok(Point::new(x, y))
}

fn parse_polygon(s: &str) -> Result<Polygon, String> {
    let pts = s.split(';').filter(|v| !v.trim().is_empty()).map(parse_point).collect::<Result<Vec<_>, _>>()?;
    Polygon::new(pts).map_err(|e| e.to_string())
}

fn resolve(db: &Database, version: Option<u32>) -> Result<TreeHandle> {
    match version {
        Some(v) => match db.pending() {
            Some(p) if p.version == v => Ok(p),
            _ => Ok(db.version(v)?),
        },
        None => db.head().context("the image holds no version"),
    }
}

/// Applies `ops` on top of the head, creating an uncommitted version when
/// the head is committed.
fn mutate(path: &Path, ops: &[Op], commit: bool) -> Result<()> {
    let mut s = Session::open(path, true)?;
    let head = s.db.head().context("the image holds no version")?;
    let mut h = s.db.apply_ops(&head, ops)?;
    if commit {
        h = s.db.commit(&h)?;
    }
    s.finish()?;
    eprintln!("{} version {}", if h.committed { "committed" } else { "uncommitted" }, h.version);
    Ok(())
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Format { opts, image } => {
            opts.check_target(&image)?;
            let s = Session::create(&image, opts.device(), opts.options()?)?;
            s.finish()?;
        }
        Command::Build { opts, dataset, image } => {
            let options = opts.options()?;
            opts.check_target(&image)?;
            let objects = dataset::load_dataset(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            let mut s = Session::create(&image, opts.device(), options)?;
            let h = s.db.build(objects)?;
            let st = s.db.stats(&h)?;
            s.finish()?;
            output::stats(&mut stdout, Format::Text, h.version, &st)?;
        }
        Command::Insert { gantry, at, zone, polygon, file, commit, image } => {
            let objects = if let (Some(id), Some(at)) = (gantry, at) {
                vec![Object::Gantry { id, at }]
            } else if let (Some(id), Some(polygon)) = (zone, polygon) {
                vec![Object::Zone { id, polygon }]
            } else if let Some(f) = file {
                dataset::load_dataset(&f).with_context(|| format!("loading {}", f.display()))?
            } else {
                bail!("insert needs --gantry/--at, --zone/--polygon or --file");
            };
            let ops: Vec<Op> = objects.into_iter().map(Op::Insert).collect();
            mutate(&image, &ops, commit)?;
        }
        Command::Rm { ids, commit, image } => {
            let ops: Vec<Op> = ids.into_iter().map(Op::Delete).collect();
            mutate(&image, &ops, commit)?;
        }
        Command::QueryZones { at, read, image } => {
            let s = Session::open(&image, false)?;
            let h = resolve(&s.db, read.version)?;
            let mut cache = PageCache::new(read.cache_pages);
            let r = s.db.query_zones_at(&h, at, &mut cache)?;
            output::query(&mut stdout, read.format, h.version, &r)?;
        }
        Command::QueryGantries { at, radius, read, image } => {
            let s = Session::open(&image, false)?;
            let h = resolve(&s.db, read.version)?;
            let mut cache = PageCache::new(read.cache_pages);
            let r = s.db.query_gantries_within(&h, at, radius, &mut cache)?;
            output::query(&mut stdout, read.format, h.version, &r)?;
        }
        Command::Stats { read, image } => {
            let s = Session::open(&image, false)?;
            let h = resolve(&s.db, read.version)?;
            output::stats(&mut stdout, read.format, h.version, &s.db.stats(&h)?)?;
        }
        Command::Versions { format, image } => {
            let s = Session::open(&image, false)?;
            let mut list = s.db.versions();
            list.extend(s.db.pending());
            output::versions(&mut stdout, format, &list, s.db.current().map(|h| h.version))?;
        }
        Command::Commit { image } => {
            let mut s = Session::open(&image, true)?;
            let p = s.db.pending().context("nothing to commit")?;
            let h = s.db.commit(&p)?;
            s.finish()?;
            eprintln!("committed version {}", h.version);
        }
        Command::Rollback { image } => {
            let mut s = Session::open(&image, true)?;
            let p = s.db.pending().context("nothing to roll back")?;
            s.db.rollback(&p)?;
            s.finish()?;
            eprintln!("discarded version {}", p.version);
        }
        Command::Diff { image, base, next, output } => {
            let mut s = Session::open(&image, false)?;
            let b = s.db.version(base)?;
            let n = s.db.version(next)?;
            let pkg = s.db.diff(&b, &n)?;
            pkg.save(&output).with_context(|| format!("writing {}", output.display()))?;
            eprintln!("package {base} -> {next}: {} pages", pkg.pages.len());
        }
        Command::Apply { package, image } => {
            let pkg = UpdatePackage::load(&package).with_context(|| format!("reading {}", package.display()))?;
            let mut s = Session::open(&image, true)?;
            let h = s.db.apply_package(&pkg)?;
            s.finish()?;
            eprintln!("applied version {}", h.version);
        }
        Command::Gc { image } => {
            let mut s = Session::open(&image, true)?;
            let r = s.db.gc()?;
            s.finish()?;
            eprintln!("erased {} subsector(s), reclaimed {} page(s)", r.subsectors_erased, r.pages_reclaimed);
        }
        Command::Replay { trace, radius, version, cache_pages, output, image } => {
            let tr = dataset::load_trace(&trace).with_context(|| format!("loading {}", trace.display()))?;
            let s = Session::open(&image, false)?;
            let h = resolve(&s.db, version)?;
            let report = replay::replay(&s.db, &h, &tr, radius, cache_pages)?;
            match output {
                Some(p) => replay::emit_report(&report, &p).with_context(|| format!("writing {}", p.display()))?,
                None => replay::write_report(&report, &mut stdout)?,
            }
            eprintln!(
                "{} steps: {} pages read, {} cache hits, {} us simulated",
                report.steps.len(),
                report.total_pages_read,
                report.total_cache_hits,
                report.sim_clock_us
            );
        }
        Command::Verify { image } => {
            let mut s = Session::open(&image, false)?;
            let r = s.db.verify()?;
            for p in &r.problems {
                writeln!(stdout, "{p}")?;
            }
            writeln!(stdout, "{} version(s), {} page(s) checked, {} problem(s)", r.versions_checked, r.pages_checked, r.problems.len())?;
            if !r.ok() {
                bail!("verification failed");
            }
        }
        Command::GenDataset { seed, gantries, zones, towns, roads, trace, trace_length, output } => {
            let params = SyntheticParams { seed, gantries, zones, towns, roads, ..SyntheticParams::default() };
            let syn = dataset::generate(&params);
            write_out(output.as_deref(), &dataset::format_dataset(&syn.objects))?;
            if let Some(p) = trace {
                let drive = dataset::drive_along(&syn.roads[0], 14.0, 1.0, trace_length);
                fs::write(&p, dataset::format_trace(&drive)).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let closed = e
                .chain()
                .any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe));
            if closed {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
