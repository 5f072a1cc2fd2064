use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crispedge::pipeline::{
    cmd_canny, cmd_crispness, cmd_eval, cmd_nms, cmd_noise_study, cmd_refine, cmd_upscale_fuse,
    load_corpus, write_synthetic_corpus, BackendConfig, DatasetManifest, Detector, ExternalDetector,
    RunConfig, SoftDetector, SyntheticSpec,
};
use crispedge::refine::Guidance;

/// Crispness-aware edge evaluation and Canny-guided label refinement.
///
/// Set CRISPEDGE_TMPDIR to choose where external programs exchange files.
#[derive(Parser)]
#[command(name = "crispedge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average each entry's labels and refine them.
    Refine {
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Refine every annotator's label separately.
        #[arg(long)]
        per_annotator: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Benchmark predictions against labels (ODS, OIS, AC).
    Eval {
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Thin predictions before matching.
        #[arg(long)]
        nms: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fuse detections at the original and an upscaled size.
    UpscaleFuse {
        image: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Detector command; receives `image.png out.pgm`. Defaults to the
        /// built-in gradient detector.
        #[arg(long)]
        detector: Option<String>,
        #[arg(long, default_value_t = 60.0)]
        detector_timeout: f64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Label-noise study on a manifest's images or a generated corpus.
    NoiseStudy {
        /// Manifest whose images form the corpus; omit for a synthetic one.
        manifest: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the over-detected Canny map of an image.
    Canny {
        image: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Thin an edge map.
    Nms {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print the crispness of an edge map.
    Crispness {
        input: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a synthetic corpus with a manifest.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
        /// Annotators per image.
        #[arg(long, default_value_t = 3)]
        labels: usize,
        /// Displacement strength of the annotator warps.
        #[arg(long, default_value_t = 4.0)]
        label_alpha: f64,
        #[arg(long, default_value_t = 24.0)]
        label_smooth_sigma: f64,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 96)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    corpus_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GuidanceArg {
    Canny,
    DilatedLabel,
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    i_max: Option<usize>,
    #[arg(long)]
    neigh_radius: Option<usize>,
    #[arg(long)]
    dilate_radius: Option<usize>,
    #[arg(long)]
    unconfident_value: Option<f64>,
    #[arg(long)]
    inpainted_value: Option<f64>,
    #[arg(long, value_enum)]
    guidance: Option<GuidanceArg>,
    /// Dilation radius for `--guidance dilated-label`.
    #[arg(long, default_value_t = 2)]
    guidance_radius: usize,
    /// Comma-separated blur sigmas of the over-detected Canny map.
    #[arg(long, value_delimiter = ',')]
    canny_sigmas: Option<Vec<f64>>,
    #[arg(long)]
    orient_sigma: Option<f64>,
    #[arg(long)]
    suppress_radius: Option<usize>,
    /// Matching tolerance as a fraction of the image diagonal.
    #[arg(long)]
    max_dist: Option<f64>,
    /// Matching tolerance in pixels; overrides --max-dist.
    #[arg(long)]
    radius_px: Option<f64>,
    #[arg(long)]
    thresholds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    annotators: Option<usize>,
    #[arg(long)]
    smooth_sigma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    mix_alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    mix_fractions: Option<Vec<f64>>,
    #[arg(long)]
    upscale_factor: Option<f64>,
    /// Inpainting command; receives `edge.pgm gray.pgm mask.pgm out.pgm`.
    #[arg(long)]
    inpainter: Option<String>,
    #[arg(long, default_value_t = 60.0)]
    inpaint_timeout: f64,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = &self.$field {
                    c.$($target)+ = v.clone();
                }
            };
        }
        set!(eta => refine.eta);
        set!(patch_size => refine.patch_size);
        set!(i_max => refine.i_max);
        set!(neigh_radius => refine.neigh_radius);
        set!(dilate_radius => refine.dilate_radius);
        set!(unconfident_value => refine.unconfident_value);
        set!(inpainted_value => refine.inpainted_value);
        set!(canny_sigmas => refine.canny.blur_sigmas);
        set!(orient_sigma => nms.orient_sigma);
        set!(suppress_radius => nms.suppress_radius);
        set!(max_dist => bench.max_dist);
        set!(thresholds => bench.thresholds);
        set!(seed => seed);
        set!(parallelism => parallelism);
        set!(annotators => annotators);
        set!(smooth_sigma => smooth_sigma);
        set!(alphas => alphas);
        set!(mix_alpha => mix_alpha);
        set!(mix_fractions => mix_fractions);
        set!(upscale_factor => upscale_factor);
        if let Some(r) = self.radius_px {
            c.bench.absolute_radius = Some(r);
        }
        match self.guidance {
            Some(GuidanceArg::Canny) => c.refine.guidance = Guidance::Canny,
            Some(GuidanceArg::DilatedLabel) => {
                c.refine.guidance = Guidance::DilatedLabel { radius: self.guidance_radius }
            }
            None => {}
        }
        if let Some(cmd) = &self.inpainter {
            c.backend = BackendConfig::External {
                command: cmd.clone(),
                timeout_secs: self.inpaint_timeout,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(path)?)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Refine { manifest, out, per_annotator, cfg } => {
            let s = cmd_refine(&load_manifest(&manifest)?, &cfg.resolve()?, &out, per_annotator)?;
            for e in s.entries.iter().filter(|e| e.error.is_some()) {
                eprintln!("{}: {}", e.id, e.error.as_deref().unwrap_or_default());
            }
            println!("refined {} of {} labels into {}", s.succeeded, s.succeeded + s.failed, out.display());
            Ok(s.exit_code() as u8)
        }
        Command::Eval { manifest, out, nms, cfg } => {
            let r = cmd_eval(&load_manifest(&manifest)?, &cfg.resolve()?, nms, &out)?.report;
            let ac = r.average_crispness.map_or("undefined".into(), |v| format!("{v:.4}"));
            println!("ODS {:.4}  OIS {:.4}  AC {ac}", r.ods_f, r.ois_f);
            Ok(0)
        }
        Command::UpscaleFuse { image, out, detector, detector_timeout, cfg } => {
            let c = cfg.resolve()?;
            let det: Box<dyn Detector> = match detector {
                Some(t) => Box::new(
                    ExternalDetector::from_template(&t, Duration::from_secs_f64(detector_timeout))
                        .context("empty detector command")?,
                ),
                None => Box::new(SoftDetector::default()),
            };
            cmd_upscale_fuse(&image, det.as_ref(), c.upscale_factor, &out)?;
            Ok(0)
        }
        Command::NoiseStudy { manifest, out, synth, cfg } => {
            let c = cfg.resolve()?;
            let corpus = match manifest {
                Some(m) => load_corpus(&load_manifest(&m)?)?,
                None => synth.spec().images(),
            };
            let r = cmd_noise_study(&corpus, &c, &out)?;
            print!("{}", crispedge::pipeline::noise_csv(&r));
            Ok(0)
        }
        Command::Canny { image, out, cfg } => {
            let n = cmd_canny(&image, &cfg.resolve()?, &out)?;
            println!("{n} edge pixels");
            Ok(0)
        }
        Command::Nms { input, out, cfg } => {
            cmd_nms(&input, &cfg.resolve()?, &out)?;
            Ok(0)
        }
        Command::Crispness { input, cfg } => {
            println!("{}", cmd_crispness(&input, &cfg.resolve()?)?);
            Ok(0)
        }
        Command::Synth { out, synth, labels, label_alpha, label_smooth_sigma } => {
            if labels == 0 {
                bail!("--labels must be >= 1");
            }
            let spec = SyntheticSpec {
                annotators: labels,
                alpha: label_alpha,
                smooth_sigma: label_smooth_sigma,
                ..synth.spec()
            };
            write_synthetic_corpus(&spec, &out)?;
            println!("{}", out.join("manifest.json").display());
            Ok(0)
        }
    }
}

impl SynthArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            count: self.count,
            width: self.size,
            height: self.size,
            seed: self.corpus_seed,
            ..SyntheticSpec::default()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            // Library errors already embed their cause; print only new context.
            let mut msg = String::new();
            for cause in e.chain() {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&c);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
