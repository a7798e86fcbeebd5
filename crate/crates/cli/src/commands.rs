use std::path::Path;

use inputmix::calibration::{
    calibrate as run_calibration, load_profile, memory_quality_tradeoff, samples_to_csv, save_profile, sweep_video,
    tradeoff_to_csv, CalibrationProfile, SweepConfig,
};
use inputmix::configurator::{Configurator, InputComposition, MemoryModel, NeighborMode, RatioPolicy};
use inputmix::dynamics::{score_raw, RawDynamics};
use inputmix::flow::PyramidConfig;
use inputmix::frame::Video;
use inputmix::inpaint::{AdapterKind, AdapterSpec, Inpainter};
use inputmix::media_io::{format_index, write_frame, write_mask, DEFAULT_FRAME_PATTERN, DEFAULT_MASK_PATTERN};
use inputmix::pipeline::{frame_quality, mean_quality, FlowCache, FrameQuality, Pipeline};
use inputmix::Error;
use serde::Serialize;

use crate::args::{
    Adapter, AdapterArgs, AnalyzeArgs, CalibrateArgs, Cli, ConfigureArgs, EvaluateArgs, InpaintArgs, LayoutArgs,
    MemoryArgs, PolicyArgs, SweepArgs,
};
use crate::outputs::{load_input, read_run, Corpus, OutputDir};
use crate::{CliError, CliResult};

const DEFAULT_TOTAL: usize = 8;

fn policy(args: &PolicyArgs) -> CliResult<RatioPolicy> {
    match (&args.profile, args.force_ratio) {
        (Some(path), None) => Ok(RatioPolicy::Profile(Box::new(load_profile(path)?))),
        (None, Some(r)) => Ok(RatioPolicy::Forced(r)),
        (None, None) => Ok(RatioPolicy::Baseline),
        (Some(_), Some(_)) => Err(CliError::Usage("--profile and --force-ratio are exclusive".into())),
    }
}

fn total(args: &MemoryArgs) -> CliResult<usize> {
    match (args.budget_mb, args.total) {
        (Some(budget), None) => Ok(MemoryModel::new(args.base_mb, args.per_frame_mb, budget).max_frames()?),
        (None, t) => Ok(t.unwrap_or(DEFAULT_TOTAL)),
        (Some(_), Some(_)) => Err(CliError::Usage("--budget-mb and --total are exclusive".into())),
    }
}

fn configurator(policy_args: &PolicyArgs, memory: &MemoryArgs, layout: &LayoutArgs) -> CliResult<Configurator> {
    let cfg = Configurator::with_total(policy(policy_args)?, total(memory)?, layout.stride).map_err(|e| match e {
        Error::InvalidConfig(msg) => CliError::Usage(msg),
        e => CliError::Lib(e),
    })?;
    let mode = if layout.symmetric {
        NeighborMode::Symmetric
    } else {
        NeighborMode::Causal
    };
    Ok(cfg.with_mode(mode))
}

fn inpainter(args: &AdapterArgs) -> CliResult<Box<dyn Inpainter>> {
    let kind = match args.adapter {
        Adapter::Baseline => AdapterKind::Baseline,
        Adapter::External => AdapterKind::External,
    };
    if kind == AdapterKind::External && args.adapter_cmd.is_none() {
        return Err(CliError::Usage("--adapter external needs --adapter-cmd".into()));
    }
    let spec = AdapterSpec {
        kind,
        external_command: args.adapter_cmd.clone(),
        timeout_secs: args.adapter_timeout,
    };
    Ok(spec.build()?)
}

/// Raw dynamics of `t`, if it has a predecessor and a nonempty mask.
fn raw_dynamics(observed: &Video, cache: &FlowCache, t: usize) -> inputmix::Result<Option<RawDynamics>> {
    let mask = observed.mask(t).ok_or(Error::MissingTarget(t))?;
    if t == observed.start_index() || mask.is_empty() {
        return Ok(None);
    }
    let flow = cache.get(t).expect("flow ensured before scoring");
    let previous = observed.mask(t - 1).expect("t > start");
    RawDynamics::from_completed(t, flow, mask, previous).map(Some)
}

fn frame_path(t: usize) -> String {
    format_index(DEFAULT_FRAME_PATTERN, t)
}

fn mask_path(t: usize) -> String {
    format_index(DEFAULT_MASK_PATTERN, t)
}

pub fn analyze(cli: &Cli, a: &AnalyzeArgs) -> CliResult<()> {
    let (video, desc) = load_input(&a.input, cli.seed)?;
    let profile: Option<CalibrationProfile> = a.profile.as_deref().map(load_profile).transpose()?;
    let observed = video.corrupted();
    let targets: Vec<usize> = (observed.start_index() + 1..=observed.end_index())
        .filter(|&t| !observed.mask(t).expect("in range").is_empty())
        .collect();
    let mut cache = FlowCache::new(PyramidConfig::default());
    cache.ensure(&observed, targets.iter().copied())?;

    let mut csv = String::from("target_index,x_flow,x_mask,x_comb\n");
    for &t in &targets {
        let raw = raw_dynamics(&observed, &cache, t)?.expect("nonempty mask with predecessor");
        match &profile {
            Some(p) => {
                let s = score_raw(&raw, p)?;
                csv.push_str(&format!("{t},{},{},{}\n", s.x_flow, s.x_mask, s.x_comb));
            }
            None => csv.push_str(&format!("{t},{},{},\n", raw.flow, raw.mask_change)),
        }
    }
    let mut out = OutputDir::create(&cli.out)?;
    let path = out.write("scores.csv", &csv)?;
    log::info!("{} targets scored into {}", targets.len(), path.display());
    out.finish("analyze", cli.seed, vec![desc], a.profile.as_deref())
}

pub fn calibrate(cli: &Cli, a: &CalibrateArgs) -> CliResult<()> {
    let (corpus, videos) = Corpus::load(&a.corpus)?;
    let inp = inpainter(&a.adapter)?;
    let config = SweepConfig {
        total: a.total,
        stride: a.stride,
        pyramid: PyramidConfig::default(),
    };
    let (profile, outcomes) = run_calibration(&videos, inp.as_ref(), &config, &corpus.id)?;

    let mut out = OutputDir::create(&cli.out)?;
    save_profile(&profile, &out.path("profile.json"))?;
    out.record("profile.json");
    let samples: Vec<_> = outcomes.iter().map(|o| o.sample.clone()).collect();
    out.write("samples.csv", samples_to_csv(&samples))?;
    let mut sweeps = String::from("video,r,psnr\n");
    for o in &outcomes {
        for (r, p) in &o.sweep.entries {
            sweeps.push_str(&format!("{},{},{}\n", o.video, r.value(), p));
        }
    }
    out.write("sweeps.csv", sweeps)?;
    println!(
        "m_flow {} m_mask {} slope {} intercept {}",
        profile.m_flow, profile.m_mask, profile.combined_fit.slope, profile.combined_fit.intercept
    );
    out.finish("calibrate", cli.seed, vec![a.corpus.display().to_string()], None)
}

#[derive(Serialize)]
struct Configured<'a> {
    #[serde(flatten)]
    composition: &'a InputComposition,
    x_comb: Option<f64>,
}

pub fn configure(cli: &Cli, a: &ConfigureArgs) -> CliResult<()> {
    let (video, desc) = load_input(&a.input, cli.seed)?;
    let cfg = configurator(&a.policy, &a.memory, &a.layout)?;
    let observed = video.corrupted();
    let t = a.target.unwrap_or(observed.end_index());
    if observed.frame(t).is_none() {
        return Err(CliError::Lib(Error::MissingTarget(t)));
    }
    let mut cache = FlowCache::new(PyramidConfig::default());
    let raw = if cfg.policy.needs_scores() {
        cache.ensure(&observed, [t])?;
        raw_dynamics(&observed, &cache, t)?
    } else {
        None
    };
    let (r, score) = cfg.ratio_for(raw.as_ref())?;
    let composition = cfg.compose(t, observed.start_index(), observed.end_index(), r)?;
    let text = serde_json::to_string_pretty(&Configured {
        composition: &composition,
        x_comb: score.map(|s| s.x_comb),
    })
    .expect("composition serializes");
    println!("{text}");
    let mut out = OutputDir::create(&cli.out)?;
    out.write("composition.json", text + "\n")?;
    out.finish("configure", cli.seed, vec![desc], a.policy.profile.as_deref())
}

pub fn inpaint(cli: &Cli, a: &InpaintArgs) -> CliResult<()> {
    let (video, desc) = load_input(&a.input, cli.seed)?;
    let cfg = configurator(&a.policy, &a.memory, &a.layout)?;
    let inp = inpainter(&a.adapter)?;
    let pipe = Pipeline {
        configurator: &cfg,
        inpainter: inp.as_ref(),
    };
    let observed = video.corrupted();
    let defaults = pipe.default_targets(&observed)?;
    let from = a.from.unwrap_or(*defaults.start());
    let to = a.to.unwrap_or(*defaults.end());
    if from > to {
        return Err(CliError::Usage(format!("empty target range {from}..={to}")));
    }
    let mut cache = FlowCache::new(PyramidConfig::default());
    let results = pipe.run(&observed, from..=to, &mut cache)?;

    let mut out = OutputDir::create(&cli.out)?;
    for res in &results {
        let t = res.frame.index();
        if res.no_source {
            log::warn!("target {t}: no source pixels, filled by diffusion only");
        }
        write_frame(&res.frame, &out.path(&frame_path(t)))?;
        out.record(&frame_path(t));
        write_mask(observed.mask(t).expect("in range"), &out.path(&mask_path(t)))?;
        out.record(&mask_path(t));
    }
    let compositions: Vec<&InputComposition> = results.iter().map(|r| &r.composition).collect();
    out.write(
        "compositions.json",
        serde_json::to_string_pretty(&compositions).expect("compositions serialize") + "\n",
    )?;
    log::info!("inpainted {} targets", results.len());
    out.finish("inpaint", cli.seed, vec![desc], a.policy.profile.as_deref())
}

fn quality_rows(truth: &Video, run: &Path) -> CliResult<Vec<FrameQuality>> {
    read_run(run)?
        .values()
        .map(|frame| {
            if truth.frame(frame.index()).is_none() {
                return Err(CliError::Lib(Error::DimensionMismatch(format!(
                    "run frame {} has no ground-truth counterpart",
                    frame.index()
                ))));
            }
            Ok(frame_quality(truth, frame)?)
        })
        .collect()
}

pub fn evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult<()> {
    let (truth, desc) = load_input(&a.input, cli.seed)?;
    let rows = quality_rows(&truth, &a.run)?;
    let (mp, ms) = mean_quality(&rows).expect("read_run is nonempty");
    let mut csv = String::from("index,psnr,ssim\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.index, r.psnr, r.ssim));
    }
    csv.push_str(&format!("mean,{mp},{ms}\n"));
    let mut out = OutputDir::create(&cli.out)?;
    out.write("metrics.csv", csv)?;
    println!("psnr {mp} ssim {ms}");

    let mut inputs = vec![desc, a.run.display().to_string()];
    if let Some(other) = &a.against {
        let base = quality_rows(&truth, other)?;
        let same = base.len() == rows.len() && base.iter().zip(&rows).all(|(x, y)| x.index == y.index);
        if !same {
            return Err(CliError::Lib(Error::DimensionMismatch(format!(
                "runs cover different frames ({} vs {})",
                rows.len(),
                base.len()
            ))));
        }
        let mut csv = String::from("index,delta_psnr,delta_ssim\n");
        for (r, b) in rows.iter().zip(&base) {
            csv.push_str(&format!("{},{},{}\n", r.index, r.psnr - b.psnr, r.ssim - b.ssim));
        }
        let (bp, bs) = mean_quality(&base).expect("nonempty");
        csv.push_str(&format!("mean,{},{}\n", mp - bp, ms - bs));
        out.write("delta.csv", csv)?;
        println!("delta_psnr {} delta_ssim {}", mp - bp, ms - bs);
        inputs.push(other.display().to_string());
    }
    out.finish("evaluate", cli.seed, inputs, None)
}

pub fn sweep(cli: &Cli, a: &SweepArgs) -> CliResult<()> {
    let inp = inpainter(&a.adapter)?;
    let mut out = OutputDir::create(&cli.out)?;
    if a.tradeoff {
        let (videos, inputs) = match &a.corpus {
            Some(path) => (Corpus::load(path)?.1, vec![path.display().to_string()]),
            None => {
                let (v, desc) = load_input(&a.input, cli.seed)?;
                (vec![v], vec![desc])
            }
        };
        if a.min_total < 2 || a.min_total > a.max_total {
            return Err(CliError::Usage(format!(
                "bad total range {}..={}",
                a.min_total, a.max_total
            )));
        }
        let policy = policy(&a.policy)?;
        let memory = MemoryModel::new(a.base_mb, a.per_frame_mb, 0);
        let rows = memory_quality_tradeoff(
            &videos,
            &policy,
            &memory,
            a.min_total..=a.max_total,
            a.stride,
            inp.as_ref(),
            &PyramidConfig::default(),
        )?;
        out.write("tradeoff.csv", tradeoff_to_csv(&rows))?;
        for r in &rows {
            println!("total {} memory_mb {} psnr {} ssim {}", r.total, r.memory_mb, r.psnr, r.ssim);
        }
        return out.finish("sweep", cli.seed, inputs, a.policy.profile.as_deref());
    }

    let (video, desc) = load_input(&a.input, cli.seed)?;
    let config = SweepConfig {
        total: a.total,
        stride: a.stride,
        pyramid: PyramidConfig::default(),
    };
    let outcome = sweep_video(&video, inp.as_ref(), &config)?;
    out.write("sweep.csv", outcome.sweep.to_csv())?;
    out.write("change_rate.txt", format!("{}\n", outcome.change_rate))?;
    out.write(
        "sample.csv",
        inputmix::calibration::samples_to_csv(std::slice::from_ref(&outcome.sample)),
    )?;
    println!("change_rate {}", outcome.change_rate);
    out.finish("sweep", cli.seed, vec![desc], None)
}
