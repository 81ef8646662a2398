use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ha_repro::audio::AudioBuffer;
use ha_repro::binsim::{Renderer, Reproduction};
use ha_repro::geometry::{ListenerPose, Position2D, SpeakerArray};
use ha_repro::haalgo::{build_algorithm, process, AlgorithmKind};
use ha_repro::harness::{
    contour_extract, read_surfaces, report, resolve_hrir, run_sweep, Preset, RunOptions, SurfaceMetric, SweepConfig,
};
use ha_repro::hrir::{save_hrir_set, synth_sphere_hrir, ChannelRole, ChannelSelection, SphereOptions};
use ha_repro::panner::{PannerOptions, ReproductionMethod};
use ha_repro::stimulus::{synthetic_speech, TalkerParams};
use ha_repro::{Error, Result};

/// Exit code when some sweep cells failed or a report has nothing in it.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "ha-repro", version, about = "Loudspeaker reproduction vs. hearing-aid algorithm sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write surfaces, contours and a report.
    Sweep(SweepArgs),
    /// Print the threshold contour of one surface as CSV.
    Contour(ContourArgs),
    /// Rebuild the summary report from a results directory.
    Report(ReportArgs),
    /// Write a sphere-model HRIR set.
    SynthHrir(SynthArgs),
    /// Render one source through one condition to a WAVE file.
    Render(RenderArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML configuration; missing fields take the preset's values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting point when no config file is given.
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-cell progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ContourArgs {
    /// Results directory of a sweep.
    #[arg(long)]
    dir: PathBuf,
    /// beam, beam_literal or snr_error.
    #[arg(long)]
    metric: String,
    /// Algorithm for snr_error surfaces.
    #[arg(long, default_value = "")]
    algorithm: String,
    #[arg(long)]
    method: ReproductionMethod,
    #[arg(long, default_value_t = 0.0)]
    pose: f64,
    #[arg(long)]
    threshold: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0875)]
    head_radius: f64,
    #[arg(long, default_value_t = 5.0)]
    step: f64,
    #[arg(long, default_value_t = 3.0)]
    distance: f64,
}

#[derive(Args)]
struct RenderArgs {
    /// nsp, vbap, hoa or reference.
    #[arg(long, default_value = "reference")]
    method: String,
    #[arg(long, default_value_t = 8)]
    speakers: usize,
    /// Lateral listener offset in meters.
    #[arg(long, default_value_t = 0.0)]
    pose: f64,
    #[arg(long, default_value_t = 0.0)]
    azimuth: f64,
    #[arg(long, default_value_t = 3.0)]
    distance: f64,
    /// Mono source signal; synthetic speech when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    seconds: f64,
    /// HRIR set directory; sphere model when absent.
    #[arg(long)]
    hrir: Option<PathBuf>,
    /// Comma-separated channel roles, e.g. in_ear_l,in_ear_r.
    #[arg(long, default_value = "in_ear_l,in_ear_r")]
    channels: String,
    /// Process the rendering with an algorithm (its own channels are used).
    #[arg(long)]
    algorithm: Option<AlgorithmKind>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Contour(a) => contour(a),
        Command::Report(a) => report_cmd(a),
        Command::SynthHrir(a) => synth(a),
        Command::Render(a) => render(a),
    }
}

fn sweep(a: SweepArgs) -> Result<u8> {
    let mut cfg = match &a.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::preset(a.preset),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    let result = run_sweep(&cfg, RunOptions { progress: !a.quiet })?;
    result.write(&cfg.output_dir)?;
    let failed = result.failed_cells();
    eprintln!(
        "wrote {} surfaces to {} ({} of {} cells failed)",
        result.surfaces.len(),
        cfg.output_dir.display(),
        failed,
        result.cells.len()
    );
    Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
}

fn contour(a: ContourArgs) -> Result<u8> {
    let surfaces = read_surfaces(&a.dir.join("surfaces.csv"))?;
    let metric = match a.metric.as_str() {
        "beam" => SurfaceMetric::Beam,
        "beam_literal" => SurfaceMetric::BeamLiteral,
        "snr_error" => SurfaceMetric::SnrError(a.algorithm.parse()?),
        other => return Err(Error::InvalidParameter(format!("no contour for metric '{other}'"))),
    };
    let s = surfaces
        .iter()
        .find(|s| s.metric == metric && s.method == a.method && s.pose_m == a.pose)
        .ok_or_else(|| Error::InvalidParameter("no such surface in the results".into()))?;
    let c = contour_extract(s, a.threshold);
    if c.is_empty() {
        eprintln!("threshold {} is never crossed", a.threshold);
        return Ok(EXIT_PARTIAL);
    }
    println!("line,point,speakers,frequency_hz");
    for (l, line) in c.lines.iter().enumerate() {
        for (p, (n, f)) in line.iter().enumerate() {
            println!("{l},{p},{n},{f}");
        }
    }
    Ok(0)
}

fn manifest_hash(dir: &Path) -> Result<String> {
    let text = std::fs::read_to_string(dir.join("manifest.toml"))?;
    let v: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    Ok(v.get("config_sha256").and_then(|h| h.as_str()).unwrap_or("").to_string())
}

fn report_cmd(a: ReportArgs) -> Result<u8> {
    let cfg = SweepConfig::load(&a.dir.join("config.toml"))?;
    let surfaces = read_surfaces(&a.dir.join("surfaces.csv"))?;
    let r = report(&surfaces, &cfg.criteria, &manifest_hash(&a.dir)?, cfg.head_radius, cfg.speed_of_sound);
    print!("{}", r.to_markdown());
    Ok(if r.is_empty() { EXIT_PARTIAL } else { 0 })
}

fn synth(a: SynthArgs) -> Result<u8> {
    let mut opts = SphereOptions {
        azimuth_step: a.step,
        distance: a.distance,
        ..SphereOptions::default()
    };
    opts.layout.head_radius = a.head_radius;
    let set = synth_sphere_hrir(&opts)?;
    save_hrir_set(&set, &a.out)?;
    eprintln!("wrote {} directions to {}", set.directions().len(), a.out.display());
    Ok(0)
}

fn render(a: RenderArgs) -> Result<u8> {
    let cfg = SweepConfig {
        hrir_dir: a.hrir.clone(),
        ..SweepConfig::default()
    };
    // argument checks before the (slow) HRIR synthesis
    let sel = match a.algorithm {
        Some(k) => k.selection(),
        None => ChannelSelection::new(
            &a.channels
                .split(',')
                .map(|s| s.trim().parse::<ChannelRole>())
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let set = resolve_hrir(&cfg)?;
    let fs = set.sample_rate();
    let reproduction = match a.method.as_str() {
        "reference" => Reproduction::Reference,
        m => Reproduction::Method(m.parse()?),
    };
    let signal = match &a.input {
        Some(p) => {
            let b = AudioBuffer::read_wav(p)?;
            if b.sample_rate != fs {
                return Err(Error::RateMismatch { expected: fs, found: b.sample_rate });
            }
            b.channel(0).to_vec()
        }
        None => synthetic_speech((a.seconds * fs as f64) as usize, fs as f64, &TalkerParams::female(1)),
    };
    let array = SpeakerArray::new(a.speakers, cfg.array_radius, 0.0)?;
    let renderer = Renderer::new(&set, &array, ListenerPose::lateral(a.pose), reproduction, &sel, PannerOptions::default())?;
    let mut out = renderer.render(&signal, &Position2D::from_polar(a.azimuth, a.distance))?;
    if let Some(k) = a.algorithm {
        let alg = build_algorithm(k, &cfg.algorithm, &set, cfg.speed_of_sound)?;
        out = process(alg.as_ref(), &out, None)?;
    }
    out.write_wav(&a.out)?;
    eprintln!("wrote {} channels, {:.2} s to {}", out.channels(), out.duration(), a.out.display());
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ha_repro::harness::{surface_rows, ErrorSurface};
    use ha_repro::metrics::write_rows;

    fn run(args: &[&str]) -> Result<u8> {
        dispatch(Cli::try_parse_from(std::iter::once("ha-repro").chain(args.iter().copied())).unwrap())
    }

    /// A beam-literal HOA surface equal to f / (100 N).
    fn write_surface(dir: &Path) {
        let speakers = vec![4, 8, 16];
        let bands = vec![250.0, 500.0, 1000.0, 2000.0];
        let values = speakers
            .iter()
            .map(|&n| bands.iter().map(|&f| f / (n as f64 * 100.0)).collect())
            .collect();
        let s = ErrorSurface::new(SurfaceMetric::BeamLiteral, ReproductionMethod::Hoa, 0.0, speakers, bands, values).unwrap();
        write_rows(&dir.join("surfaces.csv"), &surface_rows(&[s])).unwrap();
    }

    #[test]
    fn contour_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        write_surface(dir.path());
        let d = dir.path().to_str().unwrap();
        let contour = |method: &str, t: &str| run(&["contour", "--dir", d, "--metric", "beam_literal", "--method", method, "--threshold", t]);
        assert_eq!(contour("hoa", "1.0").unwrap(), 0);
        assert_eq!(contour("hoa", "99").unwrap(), EXIT_PARTIAL);
        assert!(contour("nsp", "1.0").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "speakers = [4]\nspeaker_count = 4\n").unwrap();
        let e = run(&["sweep", "--config", cfg.to_str().unwrap()]).unwrap_err();
        assert!(e.to_string().contains("speaker_count"), "{e}");
    }

    #[test]
    fn render_rejects_unknown_channel_roles() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.wav");
        assert!(run(&["render", "--channels", "in_ear_l,nose", "--out", out.to_str().unwrap()]).is_err());
        assert!(!out.exists());
    }
}
