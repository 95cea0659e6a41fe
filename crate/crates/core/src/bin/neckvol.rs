use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use neckvol::circumference::measure_circumference;
use neckvol::io::{self, FrameMeta};
use neckvol::phantom::{analytic_neck_volume, render_frames, FrameGeometry, PhantomSpec, View};
use neckvol::pipeline::{
    calibrate_gap_frames, measure_two_view, merge_views, preprocess_view, volume_report, ReportOptions,
};
use neckvol::registration::{ncc_match_with, MaskPolicy, NccOptions};
use neckvol::stats::{compare_sessions, run_experiment, ExperimentConfig, ExperimentResult};
use neckvol::volumetry::MeasurementReport;
use neckvol::{DepthFrame, Error, NeckTemplate, PipelineConfig, Rect};

const ERROR_SCHEMA_VERSION: u32 = 1;
const DEFAULT_RENDER_SCALE: f64 = 2.5;

#[derive(Parser, Debug)]
#[command(name = "neckvol", version, about = "Neck circumference and volume from depth frames")]
struct Cli {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings. `--config` is applied first, flags override it.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    mm_per_pixel: Option<f64>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    mad_k: Option<f64>,
    #[arg(long, global = true)]
    sigmas: Option<f64>,
    #[arg(long, global = true)]
    knn: Option<usize>,
    #[arg(long, global = true)]
    denoise_sigmas: Option<f64>,
    #[arg(long, global = true)]
    near_mm: Option<f64>,
    #[arg(long, global = true)]
    far_mm: Option<f64>,
    #[arg(long, global = true)]
    gap_mm: Option<f64>,
    #[arg(long, global = true)]
    dy_mm: Option<f64>,
    #[arg(long, visible_alias = "prominence-fraction", global = true)]
    prominence: Option<f64>,
    #[arg(long, global = true)]
    smoothing: Option<usize>,
    #[arg(long, global = true)]
    max_shift: Option<usize>,
    #[arg(long, global = true)]
    no_align: bool,
    /// Leave timestamps out of reports.
    #[arg(long, global = true)]
    deterministic: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if self.mm_per_pixel.is_some() {
            c.mm_per_pixel = self.mm_per_pixel;
        }
        set(&mut c.outlier.window, self.window);
        set(&mut c.outlier.mad_scale_k, self.mad_k);
        set(&mut c.outlier.threshold_sigmas, self.sigmas);
        set(&mut c.denoise.num_neighbors, self.knn);
        set(&mut c.denoise.threshold_sigmas, self.denoise_sigmas);
        set(&mut c.near_mm, self.near_mm);
        set(&mut c.far_mm, self.far_mm);
        set(&mut c.gap_mm, self.gap_mm);
        set(&mut c.dy_mm, self.dy_mm);
        set(&mut c.prominence_fraction, self.prominence);
        set(&mut c.circumference.smoothing_window, self.smoothing);
        set(&mut c.max_shift_px, self.max_shift);
        if self.no_align {
            c.align_back = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render phantom frames, or print its ground truth.
    Phantom {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "front")]
        view: ViewArg,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ground_truth: bool,
    },
    /// Average, outlier-fill and mask a set of captures into one frame.
    Filter {
        #[arg(long, num_args = 1.., required_unless_present = "input_dir")]
        input: Vec<PathBuf>,
        #[arg(long, conflicts_with = "input")]
        input_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find a reference neck patch in a new frame.
    Locate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        template_rect: Rect,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        include_zeros: bool,
        #[arg(long)]
        keep_map: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-view half circumference per row.
    Circ {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, requires = "template_rect")]
        reference: Option<PathBuf>,
        #[arg(long, requires = "reference")]
        template_rect: Option<Rect>,
        #[arg(long)]
        interpolate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        smoothed_csv: Option<PathBuf>,
    },
    /// Merge filtered front and back frames into one cloud.
    Merge {
        #[arg(long)]
        front: PathBuf,
        #[arg(long)]
        back: PathBuf,
        /// Derive the gap from these frames for a body this thick.
        #[arg(long)]
        calibrate_thickness_mm: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slice a merged cloud and report the neck volume.
    Volume {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        session_id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        profile_csv: Option<PathBuf>,
    },
    /// Repeated measurements with and without a bump.
    Experiment {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        bump_spec: Option<PathBuf>,
        /// Bump made up on the spot when no bump spec is given.
        #[arg(long, default_value_t = 60.0)]
        bump_ml: f64,
        #[arg(long, default_value_t = 35.0)]
        bump_radius_mm: f64,
        #[arg(short = 'n', long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_calibrate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Volume change between two reports.
    Compare {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        current: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Directories of front and back captures straight to a report.
    Pipeline {
        #[arg(long)]
        front_dir: PathBuf,
        #[arg(long)]
        back_dir: PathBuf,
        #[arg(long)]
        session_id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        profile_csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum ViewArg {
    Front,
    Back,
    Both,
}

impl ViewArg {
    fn views(self) -> &'static [View] {
        match self {
            ViewArg::Front => &[View::Front],
            ViewArg::Back => &[View::Back],
            ViewArg::Both => &[View::Front, View::Back],
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Lib(e) if e.is_io() => 3,
            Failure::Lib(_) => 4,
        }
    }

    fn report(&self) {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Lib(e) => (e.kind(), e.to_string()),
        };
        let body = json!({
            "schema_version": ERROR_SCHEMA_VERSION,
            "error": kind,
            "message": message,
            "exit_code": self.code(),
        });
        eprintln!("{body}");
    }
}

type CliResult<T> = Result<T, Failure>;

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match out {
        Some(p) => write_text(p, &format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

/// The `.pgm` files of a directory in name order.
fn frames_in(dir: &Path, cfg: &PipelineConfig) -> CliResult<Vec<DepthFrame>> {
    let io_err = |e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "pgm"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty("no .pgm files in the directory").into());
    }
    read_frames(&paths, cfg)
}

fn read_frames(paths: &[PathBuf], cfg: &PipelineConfig) -> CliResult<Vec<DepthFrame>> {
    Ok(paths
        .iter()
        .map(|p| io::read_frame(p, cfg.mm_per_pixel))
        .collect::<Result<Vec<_>, _>>()?)
}

fn report_options(cfg: &ConfigArgs, session_id: Option<String>) -> ReportOptions {
    ReportOptions {
        deterministic: cfg.deterministic,
        session_id,
    }
}

fn write_report(report: &MeasurementReport, out: Option<&Path>, profile_csv: Option<&Path>) -> CliResult<()> {
    if let Some(p) = profile_csv {
        write_text(p, &report.profile.to_csv())?;
    }
    emit(report, out)
}

fn load_spec(path: Option<&Path>) -> CliResult<PhantomSpec> {
    let spec = match path {
        Some(p) => read_json(p)?,
        None => PhantomSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.cfg.resolve()?;
    match cli.command {
        Command::Phantom {
            spec,
            view,
            frames,
            out,
            seed,
            ground_truth,
        } => {
            let mut spec = load_spec(spec.as_deref())?;
            set(&mut spec.seed, seed);
            if ground_truth {
                let bump_ml = spec
                    .bump
                    .map_or(0.0, |b| b.volume_mm3(spec.neck_radius_mm) / 1000.0);
                emit(
                    &json!({
                        "neck_volume_liters": analytic_neck_volume(&spec),
                        "bump_volume_ml": bump_ml,
                        "body_thickness_mm": spec.body_thickness_mm(),
                    }),
                    None,
                )?;
            }
            let Some(dir) = out else {
                return if ground_truth {
                    Ok(())
                } else {
                    Err(Failure::Usage("phantom needs --out or --ground-truth".into()))
                };
            };
            let geom = FrameGeometry::fit(&spec, cfg.mm_per_pixel.unwrap_or(DEFAULT_RENDER_SCALE))?;
            fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            for &v in view.views() {
                let meta = FrameMeta::new(geom.mm_per_pixel, spec.pose_distance_m, Some(v));
                for (i, f) in render_frames(&spec, v, &geom, frames)?.iter().enumerate() {
                    io::write_frame_with_meta(f, &dir.join(format!("{v}_{i:03}.pgm")), &meta)?;
                }
            }
            emit(
                &json!({ "spec": spec, "geometry": geom }),
                Some(&dir.join("phantom.json")),
            )
        }
        Command::Filter { input, input_dir, out } => {
            let frames = match input_dir {
                Some(d) => frames_in(&d, &cfg)?,
                None => read_frames(&input, &cfg)?,
            };
            let first_meta = match input.first() {
                Some(p) => io::pgm::read_meta(p)?,
                None => None,
            };
            let pre = preprocess_view(&frames, &cfg)?;
            let meta = FrameMeta::new(
                pre.frame.mm_per_pixel(),
                first_meta.as_ref().map_or(1.0, |m| m.distance_m),
                first_meta.and_then(|m| m.view),
            );
            io::write_frame_with_meta(&pre.frame, &out, &meta)?;
            emit(
                &json!({
                    "frames": frames.len(),
                    "replaced": pre.replaced,
                    "all_outlier_columns": pre.all_outlier_columns,
                }),
                None,
            )
        }
        Command::Locate {
            reference,
            template_rect,
            input,
            include_zeros,
            keep_map,
            out,
        } => {
            let reference = io::read_frame(&reference, cfg.mm_per_pixel)?;
            let image = io::read_frame(&input, cfg.mm_per_pixel)?;
            let template = NeckTemplate::from_reference(&reference, template_rect)?;
            let opts = NccOptions {
                mode: cfg.ncc_mode,
                mask: if include_zeros {
                    MaskPolicy::IncludeZeros
                } else {
                    MaskPolicy::ExcludeZeros
                },
                keep_map,
            };
            emit(&ncc_match_with(&image, &template, &opts)?, out.as_deref())
        }
        Command::Circ {
            input,
            reference,
            template_rect,
            interpolate,
            out,
            csv,
            smoothed_csv,
        } => {
            let mut frame = io::read_frame(&input, cfg.mm_per_pixel)?;
            let mut row_offset = 0;
            if let (Some(r), Some(rect)) = (reference, template_rect) {
                let reference = io::read_frame(&r, cfg.mm_per_pixel)?;
                let template = NeckTemplate::from_reference(&reference, rect)?;
                let m = ncc_match_with(&frame, &template, &NccOptions::default())?;
                frame = frame.crop(m.row, m.col, rect.height, rect.width)?;
                row_offset = m.row;
            }
            let mut ccfg = cfg.circumference;
            ccfg.interpolate |= interpolate;
            let mut profile = measure_circumference(&frame, &ccfg)?;
            profile.rows.iter_mut().for_each(|r| *r += row_offset);
            profile.neck_end_row = profile.neck_end_row.map(|r| r + row_offset);
            if let Some(p) = csv {
                write_text(&p, &profile.to_csv(false))?;
            }
            if let Some(p) = smoothed_csv {
                write_text(&p, &profile.to_csv(true))?;
            }
            emit(&profile, out.as_deref())
        }
        Command::Merge {
            front,
            back,
            calibrate_thickness_mm,
            out,
        } => {
            let front = io::read_frame(&front, cfg.mm_per_pixel)?;
            let back = io::read_frame(&back, cfg.mm_per_pixel)?;
            let mut cfg = cfg;
            if let Some(t) = calibrate_thickness_mm {
                cfg.gap_mm = calibrate_gap_frames(&front, &back, t, &cfg)?;
            }
            let merged = merge_views(&front, &back, &cfg)?;
            io::write_cloud(&merged.cloud, &out)?;
            emit(
                &json!({
                    "gap_mm": cfg.gap_mm,
                    "back_shift": merged.back_shift,
                    "front_points": merged.front_points,
                    "back_points": merged.back_points,
                    "points": merged.cloud.len(),
                }),
                None,
            )
        }
        Command::Volume {
            cloud,
            session_id,
            out,
            profile_csv,
        } => {
            let cloud = io::read_cloud(&cloud)?;
            let report = volume_report(&cloud, &cfg, &report_options(&cli.cfg, session_id))?;
            write_report(&report, out.as_deref(), profile_csv.as_deref())
        }
        Command::Experiment {
            spec,
            bump_spec,
            bump_ml,
            bump_radius_mm,
            runs,
            frames,
            seed,
            no_calibrate,
            out,
            csv,
        } => {
            let spec = load_spec(spec.as_deref())?;
            let bump = match bump_spec {
                Some(p) => load_spec(Some(&p))?,
                None => spec.with_bump_volume(bump_radius_mm, bump_ml)?,
            };
            let exp = ExperimentConfig {
                runs,
                frames_per_view: frames,
                mm_per_pixel: cfg.mm_per_pixel.unwrap_or(DEFAULT_RENDER_SCALE),
                master_seed: seed,
                calibrate_gap: !no_calibrate,
            };
            let result = run_experiment(&spec, &bump, &cfg, &exp)?;
            if let Some(p) = csv {
                write_text(&p, &runs_csv(&result))?;
            }
            emit(&result, out.as_deref())
        }
        Command::Compare { reference, current, out } => {
            let a: MeasurementReport = read_json(&reference)?;
            let b: MeasurementReport = read_json(&current)?;
            emit(&compare_sessions(&a, &b)?, out.as_deref())
        }
        Command::Pipeline {
            front_dir,
            back_dir,
            session_id,
            out,
            profile_csv,
        } => {
            let front = frames_in(&front_dir, &cfg)?;
            let back = frames_in(&back_dir, &cfg)?;
            let report = measure_two_view(&front, &back, &cfg, &report_options(&cli.cfg, session_id))?;
            write_report(&report, out.as_deref(), profile_csv.as_deref())
        }
    }
}

fn runs_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("run,condition,seed,volume_liters\n");
    let rows = [
        ("baseline", &r.baseline_seeds, &r.baseline_volumes),
        ("augmented", &r.augmented_seeds, &r.augmented_volumes),
    ];
    for (name, seeds, vols) in rows {
        for (i, (seed, v)) in seeds.iter().zip(vols.iter()).enumerate() {
            s.push_str(&format!("{i},{name},{seed},{v}\n"));
        }
    }
    s
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("NECKVOL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("NECKVOL_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::Usage(e.render().to_string().trim().to_string());
            f.report();
            return ExitCode::from(f.code());
        }
    };
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}
