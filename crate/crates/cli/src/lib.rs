//! Command implementations behind the `flowpose` binary.
//!
//! Every command returns `Err(Failure)` for bad usage or unreadable input;
//! the binary maps that to exit code 2. Rejected frame pairs and
//! mismatched predictions are data and still exit 0.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use flowpose::config::KeyValues;
use flowpose::eval::{aggregate_report, evaluate_frame, format_report, PartJointMapping};
use flowpose::flow::farneback_flow;
use flowpose::ingest::{
    flow_file_name, frame_file_name, label_file_name, list_frame_files, list_indexed_files, load_detections,
    load_keypoints, read_frame, read_label_map, write_atomic, write_detections, write_flow, write_frame,
    write_keypoints, write_label_map,
};
use flowpose::mine::{score_samples, select_hard, MiningPool};
use flowpose::supervise::{format_manifest, generate_sample, parse_manifest, ManifestEntry, SampleOutcome};
use flowpose::synth::{render_sequence, SynthConfig};
use flowpose::{Frame, LabelConfig};
use rayon::prelude::*;

/// Anything that ends a command early; reported on stderr with exit code 2.
#[derive(Debug)]
pub struct Failure(pub String);

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failure {}

impl From<flowpose::Error> for Failure {
    fn from(e: flowpose::Error) -> Self {
        Failure(e.to_string())
    }
}

type Result<T, E = Failure> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(
    name = "flowpose",
    version,
    about = "Motion-derived part labels for single-person video frames"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dense flow for every consecutive frame pair.
    Flow(FlowArgs),
    /// Part label maps and a manifest for every consecutive frame pair.
    Label(LabelArgs),
    /// Centroid distances between label maps and annotated joints.
    Eval(EvalArgs),
    /// Score predictions against generated labels and keep the hardest.
    Mine(MineArgs),
    /// Render a synthetic scene with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    /// Directory of frame_%06d.pgm files.
    pub frames: PathBuf,
    /// Output directory for flow_%06d.flo files.
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Directory of frame_%06d.pgm files.
    pub frames: PathBuf,
    /// Detection file, one `frame x0 y0 x1 y1 score` per line.
    pub detections: PathBuf,
    /// Output directory; receives labels/ and manifest.txt.
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of label_%06d.pgm files.
    pub labels: PathBuf,
    /// Keypoint file, one `frame joint x y` per line.
    pub keypoints: PathBuf,
    /// Report CSV to write.
    pub out: PathBuf,
    /// Part count of the label maps.
    #[arg(long, default_value_t = 5)]
    pub parts: u8,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Manifest written by `label`.
    pub manifest: PathBuf,
    /// Directory of predicted label maps named like the generated ones.
    pub predictions: PathBuf,
    /// Selection CSV to write.
    pub out: PathBuf,
    /// Number of samples to select.
    #[arg(short, long)]
    pub k: usize,
    /// Part count of both label sets.
    #[arg(long, default_value_t = 5)]
    pub parts: u8,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    pub out: PathBuf,
    /// Scene description as `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective scene config and exit.
    #[arg(long)]
    pub print_config: bool,
}

/// Pipeline knobs. Each flag overrides the config file, which overrides
/// the built-in default shown in brackets.
#[derive(Debug, Default, Args)]
pub struct PipelineFlags {
    /// `key = value` file with any of the keys printed by --print-config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    pub print_config: bool,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,

    /// Pyramid levels [default: 3].
    #[arg(long)]
    pub pyramid_levels: Option<usize>,
    /// Scale between pyramid levels [default: 0.5].
    #[arg(long)]
    pub pyramid_scale: Option<f64>,
    /// Side of the displacement averaging window [default: 15].
    #[arg(long)]
    pub window_size: Option<usize>,
    /// Refinement passes per level [default: 3].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Side of the polynomial expansion neighbourhood [default: 5].
    #[arg(long)]
    pub poly_n: Option<usize>,
    /// Gaussian applicability sigma [default: 1.1].
    #[arg(long)]
    pub poly_sigma: Option<f64>,

    /// Mean-shift spatial bandwidth in pixels [default: 8].
    #[arg(long)]
    pub spatial_bandwidth: Option<f64>,
    /// Mean-shift range bandwidth in flow units [default: 1.5].
    #[arg(long)]
    pub range_bandwidth: Option<f64>,
    /// Mean-shift iteration cap [default: 50].
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Mean-shift step norm that counts as converged [default: 0.001].
    #[arg(long)]
    pub convergence_tol: Option<f64>,
    /// Normalized distance below which modes merge [default: 0.5].
    #[arg(long)]
    pub merge_radius: Option<f64>,
    /// Smallest blob kept, in pixels [default: 25].
    #[arg(long)]
    pub min_blob_size: Option<usize>,

    /// Flow magnitude a pixel must exceed to be moving [default: 0.5].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Moving fraction must exceed this [default: 0.1].
    #[arg(long)]
    pub gate_low: Option<f64>,
    /// Moving fraction must stay below this [default: 0.7].
    #[arg(long)]
    pub gate_high: Option<f64>,
    /// Number of horizontal part bands [default: 5].
    #[arg(long, short = 'k')]
    pub parts: Option<u8>,
    /// Share of a blob that must lie in the person box [default: 0.5].
    #[arg(long)]
    pub min_overlap: Option<f64>,
}

macro_rules! layer {
    ($kv:expr, $flags:expr, $($key:ident => $slot:expr),* $(,)?) => {{
        if let Some(kv) = $kv.as_mut() {
            $( kv.take_into(stringify!($key), &mut $slot)?; )*
        }
        $( if let Some(v) = $flags.$key { $slot = v; } )*
    }};
}

impl PipelineFlags {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<LabelConfig> {
        let mut cfg = LabelConfig::default();
        let mut kv = self.config.as_deref().map(KeyValues::load).transpose()?;
        layer!(kv, self,
            pyramid_levels => cfg.flow.pyramid_levels,
            pyramid_scale => cfg.flow.pyramid_scale,
            window_size => cfg.flow.window_size,
            iterations => cfg.flow.iterations,
            poly_n => cfg.flow.poly_n,
            poly_sigma => cfg.flow.poly_sigma,
            spatial_bandwidth => cfg.mean_shift.spatial_bandwidth,
            range_bandwidth => cfg.mean_shift.range_bandwidth,
            max_iterations => cfg.mean_shift.max_iterations,
            convergence_tol => cfg.mean_shift.convergence_tol,
            merge_radius => cfg.mean_shift.merge_radius,
            min_blob_size => cfg.mean_shift.min_blob_size,
            eps => cfg.eps,
            gate_low => cfg.gate.low,
            gate_high => cfg.gate.high,
            parts => cfg.parts,
            min_overlap => cfg.min_overlap,
        );
        if let Some(kv) = kv {
            kv.finish()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The effective config as `key = value` lines, readable by `--config`.
pub fn config_text(cfg: &LabelConfig) -> String {
    let (f, m) = (&cfg.flow, &cfg.mean_shift);
    let mut s = String::new();
    let mut put = |k: &str, v: &dyn fmt::Display| writeln!(s, "{k} = {v}").unwrap();
    put("pyramid_levels", &f.pyramid_levels);
    put("pyramid_scale", &f.pyramid_scale);
    put("window_size", &f.window_size);
    put("iterations", &f.iterations);
    put("poly_n", &f.poly_n);
    put("poly_sigma", &f.poly_sigma);
    put("spatial_bandwidth", &m.spatial_bandwidth);
    put("range_bandwidth", &m.range_bandwidth);
    put("max_iterations", &m.max_iterations);
    put("convergence_tol", &m.convergence_tol);
    put("merge_radius", &m.merge_radius);
    put("min_blob_size", &m.min_blob_size);
    put("eps", &cfg.eps);
    put("gate_low", &cfg.gate.low);
    put("gate_high", &cfg.gate.high);
    put("parts", &cfg.parts);
    put("min_overlap", &cfg.min_overlap);
    s
}

/// Runs a parsed command line. Text meant for stdout is returned so tests
/// can inspect it; warnings go straight to stderr.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Flow(a) => cmd_flow(&a),
        Command::Label(a) => cmd_label(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Mine(a) => cmd_mine(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure(format!("cannot start {jobs} worker threads: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))
}

fn load_frames(dir: &Path) -> Result<Vec<(PathBuf, Frame)>> {
    if !dir.is_dir() {
        return Err(Failure(format!("{}: not a directory", dir.display())));
    }
    list_frame_files(dir)?
        .into_iter()
        .map(|(i, p)| Ok((p.clone(), read_frame(&p, i)?)))
        .collect()
}

fn check_pairs(frames: &[(PathBuf, Frame)], dir: &Path) -> Result<()> {
    if frames.len() < 2 {
        return Err(Failure(format!(
            "{}: need at least 2 frames, found {}",
            dir.display(),
            frames.len()
        )));
    }
    Ok(())
}

pub fn cmd_flow(a: &FlowArgs) -> Result<String> {
    let cfg = a.pipeline.resolve()?;
    if a.pipeline.print_config {
        return Ok(config_text(&cfg));
    }
    let frames = load_frames(&a.frames)?;
    check_pairs(&frames, &a.frames)?;
    create_dir(&a.out)?;
    pool(a.pipeline.jobs)?.install(|| {
        frames.par_windows(2).try_for_each(|w| -> flowpose::Result<()> {
            let (prev, next) = (&w[0].1, &w[1].1);
            let field = farneback_flow(prev, next, &cfg.flow)?;
            write_flow(&field, &a.out.join(flow_file_name(prev.index())))
        })
    })?;
    Ok(String::new())
}

pub fn cmd_label(a: &LabelArgs) -> Result<String> {
    let cfg = a.pipeline.resolve()?;
    if a.pipeline.print_config {
        return Ok(config_text(&cfg));
    }
    let frames = load_frames(&a.frames)?;
    check_pairs(&frames, &a.frames)?;
    let dets = load_detections(&a.detections)?;
    let labels_dir = a.out.join("labels");
    create_dir(&labels_dir)?;
    let outcomes: Vec<(PathBuf, SampleOutcome)> = pool(a.pipeline.jobs)?.install(|| {
        frames
            .par_windows(2)
            .map(|w| {
                let ((image, prev), (_, next)) = (&w[0], &w[1]);
                let out = generate_sample(prev, next, &dets, &cfg, image, &labels_dir)?;
                Ok((image.clone(), out))
            })
            .collect::<Result<_>>()
    })?;
    // label paths are recorded relative to the output directory so that a
    // tree can be moved or compared as a whole
    let entries: Vec<ManifestEntry> = outcomes
        .iter()
        .map(|(image, out)| {
            let mut e = ManifestEntry::from_outcome(out, image);
            e.label_path = e
                .label_path
                .map(|_| Path::new("labels").join(label_file_name(e.frame_index)));
            e
        })
        .collect();
    write_atomic(&a.out.join("manifest.txt"), format_manifest(&entries).as_bytes())?;
    Ok(String::new())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    if a.parts == 0 {
        return Err(Failure("--parts must be at least 1".into()));
    }
    if !a.labels.is_dir() {
        return Err(Failure(format!("{}: not a directory", a.labels.display())));
    }
    let keypoints: BTreeMap<u32, _> = load_keypoints(&a.keypoints)?
        .into_iter()
        .map(|k| (k.frame_index, k))
        .collect();
    let mapping = PartJointMapping::for_parts(a.parts);
    let mut records = Vec::new();
    for (index, path) in list_indexed_files(&a.labels, "label_", ".pgm")? {
        if let Some(kp) = keypoints.get(&index) {
            let map = read_label_map(&path, Some(a.parts))?;
            records.push(evaluate_frame(&map, kp, &mapping));
        }
    }
    if records.is_empty() {
        eprintln!(
            "warning: no frame of {} has keypoints in {}; every entry is missing",
            a.labels.display(),
            a.keypoints.display()
        );
    }
    let report = aggregate_report(&records, &mapping);
    write_atomic(&a.out, format_report(&report).as_bytes())?;
    Ok(String::new())
}

pub const MINE_HEADER: &str = "frame_index,error_score,selected";

pub fn cmd_mine(a: &MineArgs) -> Result<String> {
    if a.parts == 0 {
        return Err(Failure("--parts must be at least 1".into()));
    }
    if !a.predictions.is_dir() {
        return Err(Failure(format!("{}: not a directory", a.predictions.display())));
    }
    let text = fs::read_to_string(&a.manifest).map_err(|e| Failure(format!("{}: {e}", a.manifest.display())))?;
    let base = a.manifest.parent().unwrap_or(Path::new(""));
    let mut rows: Vec<(u32, Option<f64>, PathBuf)> = Vec::new();
    let mut scored = Vec::new();
    for entry in parse_manifest(&text, &a.manifest)? {
        let Some(mut rec) = entry.to_record() else { continue };
        let weak_path = base.join(&rec.label_path);
        let score = rec
            .label_path
            .file_name()
            .ok_or_else(|| flowpose::Error::Invalid(format!("{}: no file name", rec.label_path.display())))
            .and_then(|name| -> flowpose::Result<f64> {
                let weak = read_label_map(&weak_path, Some(a.parts))?;
                let predicted = read_label_map(&a.predictions.join(name), Some(a.parts))?;
                score_samples(&predicted, &weak)
            });
        match score {
            Ok(s) => {
                rec.error_score = Some(s);
                rows.push((rec.frame_index, Some(s), rec.label_path.clone()));
                scored.push(rec);
            }
            Err(e) => {
                eprintln!("warning: sample {} excluded: {e}", rec.frame_index);
                rows.push((rec.frame_index, None, rec.label_path.clone()));
            }
        }
    }
    let selected: std::collections::HashSet<PathBuf> = select_hard(&MiningPool::new(scored)?, a.k)
        .into_iter()
        .map(|r| r.label_path)
        .collect();
    let mut csv = format!("{MINE_HEADER}\n");
    for (frame, score, label) in rows {
        match score {
            Some(s) => writeln!(csv, "{frame},{s:.6},{}", selected.contains(&label)).unwrap(),
            None => writeln!(csv, "{frame},NA,error").unwrap(),
        }
    }
    write_atomic(&a.out, csv.as_bytes())?;
    Ok(String::new())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let cfg = match &a.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    cfg.validate()?;
    if a.print_config {
        return Ok(cfg.to_text());
    }
    let scene = render_sequence(&cfg)?;
    for sub in ["frames", "gt_flow", "masks"] {
        create_dir(&a.out.join(sub))?;
    }
    for f in &scene.frames {
        write_frame(f, &a.out.join("frames").join(frame_file_name(f.index())))?;
    }
    for (k, flow) in scene.flows.iter().enumerate() {
        write_flow(flow, &a.out.join("gt_flow").join(flow_file_name(k as u32)))?;
    }
    for m in &scene.part_masks {
        write_label_map(m, &a.out.join("masks").join(label_file_name(m.frame_index())))?;
    }
    write_detections(&scene.detections(), &a.out.join("detections.txt"))?;
    write_keypoints(&scene.keypoints, &a.out.join("keypoints.txt"))?;
    Ok(String::new())
}
