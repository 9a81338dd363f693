use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use splatwalk_core::capture::CapturePlan;
use splatwalk_core::equirect::{cubemap, read_frame_manifest, reproject, select_frames, EquirectFrame};
use splatwalk_core::init::init_gaussians;
use splatwalk_core::io::{export_compressed, export_ply, load_splats, size_estimate, CompressionLevel};
use splatwalk_core::metrics::evaluate;
use splatwalk_core::optim::{log_to_csv, train, train_cloud, TrainConfig, TrainView};
use splatwalk_core::raster::render;
use splatwalk_core::sfm::{parse_sfm_text, CAMERAS_FILE, IMAGES_FILE, POINTS_FILE};
use splatwalk_core::{GaussianCloud, Image, RenderCamera, RenderConfig, RenderMode, SfmScene};

use crate::project::{sha256_hex, Project, RunRecord};
use crate::{
    Cli, Command, EvalArgs, ExportArgs, ExtractArgs, ExtractMode, InfoArgs, InitArgs, PlanArgs,
    PlanFormat, RenderArgs, TrainArgs, UsageError, DEFAULT_SEED,
};

pub fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker threads")?;
    let ctx = Ctx { cli, argv };
    pool.install(|| match &cli.command {
        Command::Plan(a) => plan(a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Init(a) => init(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Render(a) => render_cmd(&ctx, a),
        Command::Export(a) => export(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Info(a) => info_cmd(&ctx, a),
    })
}

struct Ctx<'a> {
    cli: &'a Cli,
    argv: &'a [String],
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(DEFAULT_SEED)
}

fn parallel(cli: &Cli) -> bool {
    cli.threads != Some(1)
}

fn run_record(ctx: &Ctx, command: &str) -> RunRecord {
    RunRecord {
        command: command.into(),
        args: ctx.argv.iter().skip(1).cloned().collect(),
        seed: seed(ctx.cli),
        threads: ctx.cli.threads,
        ..Default::default()
    }
}

fn plan(a: &PlanArgs) -> Result<()> {
    let plan = CapturePlan {
        walking_speed: a.speed,
        camera_height: a.height,
        source_frame_rate: a.source_fps,
        equirect_width: a.width,
        target_overlap: a.overlap,
        footprint_length: a.footprint,
    };
    // Every plan input comes from a flag, so a domain error is a usage error.
    let r = plan.report().map_err(|e| UsageError(e.to_string()))?;
    match a.format {
        PlanFormat::Text => {
            println!(
                "walking {:.3} m/s, footprint {:.3} m, target overlap {:.0}%",
                a.speed,
                a.footprint,
                a.overlap * 100.0
            );
            println!("minimum extraction rate: {:.4} fps", r.min_extraction_rate);
            println!(
                "max spacing {:.3} m, max interval {:.3} s",
                r.max_spacing, r.max_interval
            );
            println!(
                "stride {} at {} fps source -> {:.4} fps effective, {:.1}% overlap",
                r.stride,
                a.source_fps,
                r.effective_rate,
                r.achieved_overlap * 100.0
            );
            println!(
                "fastest walk at this source rate: {:.3} m/s",
                r.max_walking_speed
            );
            println!(
                "ground sampling distance at {:.2} m: {:.4} mm/px",
                a.height,
                r.ground_sampling_distance * 1e3
            );
        }
        PlanFormat::Kv => {
            println!("min_extraction_rate_fps={}", r.min_extraction_rate);
            println!("max_spacing_m={}", r.max_spacing);
            println!("max_interval_s={}", r.max_interval);
            println!("stride={}", r.stride);
            println!("effective_rate_fps={}", r.effective_rate);
            println!("achieved_overlap={}", r.achieved_overlap);
            println!("max_walking_speed_mps={}", r.max_walking_speed);
            println!("gsd_m_per_px={}", r.ground_sampling_distance);
        }
    }
    Ok(())
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn extract(ctx: &Ctx, a: &ExtractArgs) -> Result<()> {
    let project = Project::open(&ctx.cli.project)?;
    if a.stride == 0 {
        return Err(UsageError("--stride must be at least 1".into()).into());
    }
    if a.size < 2 {
        return Err(UsageError("--size must be at least 2".into()).into());
    }
    let dir = project.input(&a.frames_dir);
    let manifest = project.input(&a.manifest.clone().unwrap_or_else(|| a.frames_dir.join("manifest.txt")));
    let entries = read_frame_manifest(&manifest)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    files.sort();
    let timestamps: Vec<f64> = entries.iter().map(|e| e.timestamp).collect();
    let mut outputs = Vec::new();
    for k in select_frames(&timestamps, a.stride) {
        let entry = entries[k];
        let path = files.get(entry.index).ok_or_else(|| {
            anyhow!(
                "manifest line {} names frame {} but {} holds {} images",
                k + 1,
                entry.index,
                dir.display(),
                files.len()
            )
        })?;
        let frame = EquirectFrame::new(Image::load(path)?, Some(entry.timestamp))
            .with_context(|| path.display().to_string())?;
        let views = match a.mode {
            ExtractMode::Cubemap => cubemap(&frame, a.size)?
                .into_iter()
                .zip(splatwalk_core::equirect::CubeFace::ALL)
                .map(|(v, f)| (format!("f{:05}_{}.png", entry.index, f.name()), v))
                .collect(),
            ExtractMode::Single => vec![(
                format!("f{:05}.png", entry.index),
                reproject(
                    &frame,
                    a.yaw.to_radians(),
                    a.pitch.to_radians(),
                    a.fov.to_radians(),
                    a.size,
                    a.size,
                )?,
            )],
        };
        for (name, view) in views {
            let out = project.output(&a.out_dir.join(name))?;
            view.pixels.save(&out)?;
            outputs.push(out);
        }
    }
    println!(
        "extracted {} views from {} of {} frames into {}",
        outputs.len(),
        select_frames(&timestamps, a.stride).len(),
        entries.len(),
        project.relative(&project.input(&a.out_dir))
    );
    project.record(run_record(ctx, "extract"), &outputs)
}

fn load_config(project: &Project, path: Option<&Path>) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    if let Some(p) = path {
        let p = project.input(p);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        config.apply_text(&text, &p.display().to_string())?;
    }
    Ok(config)
}

fn load_sfm(project: &Project, dir: &Path) -> Result<SfmScene> {
    let dir = project.input(dir);
    let missing: Vec<_> = [CAMERAS_FILE, IMAGES_FILE, POINTS_FILE]
        .into_iter()
        .filter(|f| !dir.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        bail!(
            "{} lacks {}. Run an SfM tool on the extracted views and export its \
             text model (cameras.txt, images.txt, points3D.txt) into this directory",
            dir.display(),
            missing.join(", ")
        );
    }
    let scene = parse_sfm_text(&dir)?;
    scene.validate()?;
    if scene.images.is_empty() {
        bail!("{}: images.txt registers no images", dir.display());
    }
    Ok(scene)
}

fn load_views(project: &Project, scene: &SfmScene, images_dir: &Path) -> Result<Vec<TrainView<f32>>> {
    let dir = project.input(images_dir);
    scene
        .images
        .iter()
        .map(|img| {
            let path = dir.join(&img.name);
            let image: Image<f32> = Image::load(&path)?;
            Ok(TrainView {
                camera: RenderCamera::from_sfm(scene, img, image.width, image.height),
                image,
                name: img.name.clone(),
            })
        })
        .collect()
}

/// Splits views into (kept, held out), holding out indices divisible by `n`.
fn split_holdout<T: Clone>(views: Vec<T>, n: usize) -> (Vec<T>, Vec<T>) {
    if n == 0 {
        return (views, Vec::new());
    }
    let (held, kept): (Vec<_>, Vec<_>) = views.into_iter().enumerate().partition(|(i, _)| i % n == 0);
    (
        kept.into_iter().map(|(_, v)| v).collect(),
        held.into_iter().map(|(_, v)| v).collect(),
    )
}

fn init(ctx: &Ctx, a: &InitArgs) -> Result<()> {
    let project = Project::open(&ctx.cli.project)?;
    let config = load_config(&project, a.config.as_deref())?;
    let scene = load_sfm(&project, &a.sfm_dir)?;
    if scene.points.is_empty() {
        bail!("points3D.txt holds no points; re-run SfM with more overlap between views");
    }
    let cloud: GaussianCloud<f32> = init_gaussians(&scene, &config.init)?;
    let out = project.output(&a.out)?;
    export_ply(&cloud, &out)?;
    println!(
        "{} cameras, {} images, {} points -> {} gaussians in {}",
        scene.cameras.len(),
        scene.images.len(),
        scene.points.len(),
        cloud.len(),
        project.relative(&out)
    );
    project.record(run_record(ctx, "init"), &[out])
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let project = Project::open(&ctx.cli.project)?;
    let mut config = load_config(&project, a.config.as_deref())?;
    if let Some(n) = a.iters {
        config.iterations = n;
    }
    if let Some(s) = ctx.cli.seed {
        config.seed = s;
    }
    config.parallel = parallel(ctx.cli);
    let config_text = config.to_text();

    let scene = load_sfm(&project, &a.sfm_dir)?;
    let views = load_views(&project, &scene, &a.images_dir)?;
    let (views, held) = split_holdout(views, a.holdout);
    info!(
        "training on {} views ({} held out) for {} iterations",
        views.len(),
        held.len(),
        config.iterations
    );
    let result = match &a.init {
        Some(p) => train_cloud(load_splats(&project.input(p))?, &views, &config)?,
        None => train::<f32>(&scene, &views, &config)?,
    };
    let out = project.output(&a.out)?;
    let log = project.output(&a.log)?;
    export_ply(&result.cloud, &out)?;
    fs::write(&log, log_to_csv(&result.log)).with_context(|| format!("writing {}", log.display()))?;
    if let Some(last) = result.log.last() {
        println!(
            "iteration {}: loss {:.5}, train psnr {:.2} dB, {} gaussians",
            last.iteration, last.loss, last.psnr, last.gaussian_count
        );
    }
    println!("wrote {} and {}", project.relative(&out), project.relative(&log));
    let mut run = run_record(ctx, "train");
    run.seed = config.seed;
    run.config_sha256 = Some(sha256_hex(config_text.as_bytes()));
    project.record(run, &[out, log])
}

/// `width height fx fy cx cy qw qx qy qz tx ty tz`, `#` comments allowed.
fn read_pose_file(path: &Path) -> Result<RenderCamera<f32>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let fields: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .collect();
    if fields.len() != 13 {
        bail!(
            "{}: expected 13 values (width height fx fy cx cy qw qx qy qz tx ty tz), found {}",
            path.display(),
            fields.len()
        );
    }
    let num = |i: usize| -> Result<f64> {
        fields[i]
            .parse()
            .with_context(|| format!("{}: bad number `{}`", path.display(), fields[i]))
    };
    let dim = |i: usize| -> Result<usize> {
        fields[i]
            .parse()
            .with_context(|| format!("{}: bad size `{}`", path.display(), fields[i]))
    };
    let q = [num(6)?, num(7)?, num(8)?, num(9)?];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) {
        bail!("{}: zero rotation quaternion", path.display());
    }
    let r = splatwalk_core::math::quat_to_mat(q.map(|v| v / n));
    let camera = RenderCamera {
        focal_x: num(2)?,
        focal_y: num(3)?,
        principal_x: num(4)?,
        principal_y: num(5)?,
        width: dim(0)?,
        height: dim(1)?,
        rotation: r,
        translation: [num(10)?, num(11)?, num(12)?],
        near_clip: RenderCamera::<f64>::DEFAULT_NEAR_CLIP,
    };
    camera.validate()?;
    Ok(camera.cast())
}

fn render_cmd(ctx: &Ctx, a: &RenderArgs) -> Result<()> {
    let project = Project::open(&ctx.cli.project)?;
    let cloud = load_splats(&project.input(&a.splat))?;
    let (camera, label) = match a.camera.parse::<usize>() {
        Ok(i) => {
            let scene = load_sfm(&project, &a.sfm_dir)?;
            let img = scene.images.get(i).ok_or_else(|| {
                UsageError(format!(
                    "camera index {i} out of range; the model has {} images",
                    scene.images.len()
                ))
            })?;
            let k = &scene.camera_of(img).intrinsics;
            let cam = RenderCamera::from_sfm(&scene, img, k.width as usize, k.height as usize);
            (cam, format!("view{i:03}"))
        }
        Err(_) => {
            let path = project.input(Path::new(&a.camera));
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "pose".into());
            (read_pose_file(&path)?, stem)
        }
    };
    let config = RenderConfig {
        background: a.background.map(|v| v as f32),
        mode: a.mode,
        sh_degree: cloud.sh_degree,
        parallel: parallel(ctx.cli),
        ..Default::default()
    };
    let out = render(&cloud, &camera, &config)?;
    let (mode, ext) = match a.mode {
        RenderMode::Color => ("color", "png"),
        RenderMode::Depth => ("depth", "pfm"),
        RenderMode::Accumulation => ("accum", "pfm"),
    };
    let target = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("renders/{label}_{mode}.{ext}")));
    let path = project.output(&target)?;
    let plane = out.plane(a.mode);
    let raw = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if raw {
        plane.save_pfm(&path)?;
    } else if a.mode == RenderMode::Depth {
        // 8-bit depth is normalized by the farthest visible depth.
        let (_, max) = plane.min_max();
        let mut scaled = plane.clone();
        if max > 0.0 {
            scaled.data.iter_mut().for_each(|v| *v /= max);
        }
        scaled.save(&path)?;
    } else {
        plane.save(&path)?;
    }
    let (lo, hi) = plane.min_max();
    println!(
        "{} {}x{} {mode} -> {} (range {lo:.4}..{hi:.4})",
        cloud.len(),
        camera.width,
        camera.height,
        project.relative(&path)
    );
    project.record(run_record(ctx, "render"), &[path])
}

fn export(ctx: &Ctx, a: &ExportArgs) -> Result<()> {
    let project = Project::open(&ctx.cli.project)?;
    let cloud = load_splats(&project.input(&a.splat))?;
    let bytes = export_compressed(&cloud, a.level)?;
    let target = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("checkpoints/splat.{}.spwk", a.level.name())));
    let path = project.output(&target)?;
    fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{} gaussians, {} level: {} bytes -> {}",
        cloud.len(),
        a.level.name(),
        bytes.len(),
        project.relative(&path)
    );
    project.record(run_record(ctx, "export"), &[path])
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    let project = Project::open(&ctx.cli.project)?;
    let cloud = load_splats(&project.input(&a.splat))?;
    let scene = load_sfm(&project, &a.sfm_dir)?;
    let views = load_views(&project, &scene, &a.images_dir)?;
    let views = match a.holdout {
        0 => views,
        n => split_holdout(views, n).1,
    };
    let config = RenderConfig {
        background: a.background.map(|v| v as f32),
        sh_degree: cloud.sh_degree,
        parallel: parallel(ctx.cli),
        ..Default::default()
    };
    let report = evaluate(&cloud, &views, &config)?;
    println!("{report}");
    let csv = project.output(&a.csv)?;
    fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    project.record(run_record(ctx, "eval"), &[csv])
}

fn info_cmd(ctx: &Ctx, a: &InfoArgs) -> Result<()> {
    let project = Project::open(&ctx.cli.project)?;
    let path = project.input(&a.splat);
    let cloud = load_splats(&path)?;
    let file_bytes = fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("file: {} ({file_bytes} bytes)", path.display());
    println!("count: {}", cloud.len());
    println!("sh_degree: {}", cloud.sh_degree.get());
    for level in CompressionLevel::ALL {
        let size = size_estimate(cloud.len() as u64, cloud.sh_degree, level);
        println!(
            "size_estimate {}: {size} bytes ({:.2} MiB, {} B/splat)",
            level.name(),
            size as f64 / (1024.0 * 1024.0),
            level.bytes_per_splat(cloud.sh_degree)
        );
    }
    Ok(())
}
