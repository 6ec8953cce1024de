use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use nfig_core::bands::BandSchedule;
use nfig_core::generator::{sample, train, Example, GenConfig, ModelConfig, ModelParams, Optimizer};
use nfig_core::io::{
    load_checkpoint, load_codebook, load_image, load_tokens, save_checkpoint, save_codebook, save_image, save_tokens,
    write_atomic, CodebookMeta,
};
use nfig_core::metrics::{band_energy_of_map, band_energy_report, compare, default_fks_edges};
use nfig_core::pipeline::{training_vectors, TokenSequence, Tokenizer};
use nfig_core::quantizer::{train_codebook, KMeansConfig};
use nfig_core::spectral::{dft2, fit_one_over_f, power_spectrum, radial_profile};
use nfig_core::{Error, Image, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Outputs created so far; removed again if the command fails.
#[derive(Default)]
pub struct Outputs {
    created: Vec<PathBuf>,
}

impl Outputs {
    fn track(&mut self, path: &Path) {
        if !path.exists() {
            self.created.push(path.to_path_buf());
        }
    }

    fn dir(&mut self, path: &Path) -> Result<()> {
        self.track(path);
        fs::create_dir_all(path)?;
        Ok(())
    }

    pub fn remove_all(&self) {
        for p in self.created.iter().rev() {
            let _ = if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) };
        }
    }
}

fn hex(fp: u64) -> String {
    format!("{fp:016x}")
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

/// Expands directories into their files with one of `exts`, sorted by path.
fn expand(inputs: &[PathBuf], exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for entry in fs::read_dir(p)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e)) {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InsufficientData("no input files".into()));
    }
    Ok(out)
}

const IMAGE_EXTS: &[&str] = &["pgm", "ppm", "pnm", "nftn"];

fn codebook_path(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.paths.codebook.clone())
        .ok_or_else(|| Error::Parameter("a codebook path is required (--codebook or paths.codebook)".into()))
}

fn write_steps(dir: &Path, tk: &Tokenizer, tokens: &TokenSequence, outputs: &mut Outputs) -> Result<Vec<Value>> {
    outputs.dir(dir)?;
    let latents = tk.latent_steps(tokens)?;
    let images = tk.detokenize_steps(tokens)?;
    let mut steps = Vec::with_capacity(images.len());
    for (i, (img, latent)) in images.iter().zip(&latents).enumerate() {
        let path = dir.join(format!("step_{:02}.{}", i + 1, if img.channels() == 1 { "pgm" } else { "ppm" }));
        outputs.track(&path);
        save_image(&path, img)?;
        steps.push(json!({
            "bands": i + 1,
            "path": show(&path),
            "band_energy": band_energy_of_map(latent, tk.schedule()).unwrap_or_default(),
        }));
    }
    Ok(steps)
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub class: Option<u32>,
}

pub fn tokenize(args: &TokenizeArgs, cfg: &RunConfig, outputs: &mut Outputs) -> Result<Value> {
    let img = load_image(&args.input)?;
    let (cb, _) = load_codebook(&codebook_path(&args.codebook, cfg)?)?;
    let tk = Tokenizer::with_interp(cfg.schedule.clone(), cb, cfg.patch, cfg.interp)?;
    let t = tk.tokenize(&img, args.class)?;
    let recon = tk.detokenize(&t.tokens)?;
    let loss = tk.quantization_loss(&t)?;
    outputs.track(&args.out);
    save_tokens(&args.out, &t.tokens)?;
    Ok(json!({
        "input": show(&args.input),
        "output": show(&args.out),
        "tokens": t.tokens.len(),
        "band_tokens": cfg.schedule.token_counts(),
        "class": args.class,
        "codebook_fingerprint": hex(t.tokens.codebook_fingerprint),
        "mae": recon.mean_abs_error(&img)?,
        "mse": recon.mean_squared_error(&img)?,
        "feature_loss": loss.feature_loss,
    }))
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Original image to report MAE/MSE against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Directory for per-band partial reconstructions.
    #[arg(long)]
    pub emit_steps: Option<PathBuf>,
}

pub fn reconstruct(args: &ReconstructArgs, cfg: &RunConfig, outputs: &mut Outputs) -> Result<Value> {
    let tokens = load_tokens(&args.tokens)?;
    let (cb, _) = load_codebook(&codebook_path(&args.codebook, cfg)?)?;
    let reference = args.reference.as_deref().map(load_image).transpose()?;
    let tk = Tokenizer::with_interp(tokens.schedule.clone(), cb, cfg.patch, cfg.interp)?;
    let img = tk.detokenize(&tokens)?;
    let mut report = json!({
        "tokens": show(&args.tokens),
        "output": show(&args.out),
        "height": img.height(),
        "width": img.width(),
        "channels": img.channels(),
    });
    if let Some(r) = &reference {
        report["mae"] = json!(img.mean_abs_error(r)?);
        report["mse"] = json!(img.mean_squared_error(r)?);
    }
    if let Some(dir) = &args.emit_steps {
        report["steps"] = Value::Array(write_steps(dir, &tk, &tokens, outputs)?);
    }
    outputs.track(&args.out);
    save_image(&args.out, &img)?;
    Ok(report)
}

#[derive(Debug, Args)]
pub struct TrainCodebookArgs {
    /// Image files or directories of images.
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

pub fn train_codebook_cmd(args: &TrainCodebookArgs, cfg: &RunConfig, outputs: &mut Outputs) -> Result<Value> {
    let files = expand(&args.inputs, IMAGE_EXTS)?;
    let mut samples = Vec::new();
    let mut dim = None;
    for f in &files {
        let img = load_image(f)?;
        let d = cfg.patch * cfg.patch * img.channels();
        if *dim.get_or_insert(d) != d {
            return Err(Error::Dimension(format!("{} has a different channel count", f.display())));
        }
        samples.extend(training_vectors(&img, &cfg.schedule, cfg.patch, cfg.interp)?);
    }
    let dim = dim.expect("at least one file");
    let kc = KMeansConfig {
        k: args.k.unwrap_or(cfg.k),
        iterations: args.iterations.unwrap_or(cfg.kmeans.iterations),
        batch_size: args.batch_size.unwrap_or(cfg.kmeans.batch_size),
        seed: cfg.seed,
    };
    let res = train_codebook(&samples, dim, &kc)?;
    let meta = CodebookMeta {
        k: kc.k,
        c: dim,
        seed: kc.seed,
        iterations: kc.iterations,
        training_error: res.final_error(),
    };
    outputs.track(&args.out);
    outputs.track(&nfig_core::io::sidecar_path(&args.out));
    save_codebook(&args.out, &res.codebook, &meta)?;
    // The fingerprint covers the stored (f32) values.
    let (stored, _) = load_codebook(&args.out)?;
    Ok(json!({
        "output": show(&args.out),
        "images": files.len(),
        "samples": samples.len() / dim,
        "k": kc.k,
        "c": dim,
        "iterations": kc.iterations,
        "seed": kc.seed,
        "training_error": res.final_error(),
        "pass_errors": res.pass_errors,
        "fingerprint": hex(stored.fingerprint()),
    }))
}

#[derive(Debug, Args)]
pub struct TrainModelArgs {
    /// Token files or directories of `.ntk` files.
    #[arg(long, required = true, num_args = 1..)]
    pub tokens: Vec<PathBuf>,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of classes; defaults to the largest label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = ["momentum", "adam"])]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub cond_dropout: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
}

pub fn train_model(args: &TrainModelArgs, cfg: &RunConfig, outputs: &mut Outputs) -> Result<Value> {
    let files = expand(&args.tokens, &["ntk"])?;
    let (cb, _) = load_codebook(&codebook_path(&args.codebook, cfg)?)?;
    let seqs = files.iter().map(|f| load_tokens(f)).collect::<Result<Vec<_>>>()?;
    let schedule: BandSchedule = seqs[0].schedule.clone();
    let mut max_label = 0;
    for (s, f) in seqs.iter().zip(&files) {
        if s.schedule != schedule {
            return Err(Error::Dimension(format!("{} uses a different schedule", f.display())));
        }
        if s.codebook_fingerprint != cb.fingerprint() {
            return Err(Error::StaleCodebook {
                expected: s.codebook_fingerprint,
                actual: cb.fingerprint(),
            });
        }
        let label = s
            .class_label
            .ok_or_else(|| Error::Parameter(format!("{} has no class label", f.display())))?;
        max_label = max_label.max(label as usize);
    }
    let model = ModelConfig {
        dim: args.d.unwrap_or(cfg.model.d),
        layers: args.layers.unwrap_or(cfg.model.layers),
        heads: args.heads.unwrap_or(cfg.model.heads),
        codebook_size: cb.len(),
        code_dim: cb.dim(),
        num_classes: args.classes.unwrap_or(max_label + 1),
        schedule,
        interp: cfg.interp,
    };
    let mut params = ModelParams::init(model, cfg.seed)?;
    let data = seqs
        .iter()
        .map(|s| Example::from_tokens(s, &cb, &params))
        .collect::<Result<Vec<_>>>()?;
    let mut tc = cfg.train;
    tc.seed = cfg.seed;
    if let Some(v) = args.steps {
        tc.steps = v;
    }
    if let Some(v) = args.lr {
        tc.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = &args.optimizer {
        tc.optimizer = if v == "adam" { Optimizer::Adam } else { Optimizer::Momentum };
    }
    if let Some(v) = args.momentum {
        tc.momentum = v;
    }
    if let Some(v) = args.cond_dropout {
        tc.cond_dropout = v;
    }
    eprintln!(
        "training {} parameters on {} sequences for {} steps",
        params.len(),
        data.len(),
        tc.steps
    );
    let report = train(&mut params, &data, &tc)?;
    outputs.dir(&args.out)?;
    save_checkpoint(&args.out, &params, cfg.seed, cb.fingerprint())?;
    Ok(json!({
        "output": show(&args.out),
        "sequences": data.len(),
        "parameters": params.len(),
        "classes": params.config().num_classes,
        "train": tc,
        "epoch_losses": report.epoch_losses,
        "final_step_loss": report.step_losses.last(),
    }))
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub class: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tokens_out: Option<PathBuf>,
    /// Directory for per-band partial reconstructions.
    #[arg(long)]
    pub emit_steps: Option<PathBuf>,
    #[arg(long)]
    pub cfg_scale: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

pub fn sample_cmd(args: &SampleArgs, cfg: &RunConfig, outputs: &mut Outputs) -> Result<Value> {
    let model_dir = args
        .model
        .clone()
        .or_else(|| cfg.paths.model.clone())
        .ok_or_else(|| Error::Parameter("a model path is required (--model or paths.model)".into()))?;
    let (params, manifest) = load_checkpoint(&model_dir)?;
    let (cb, _) = load_codebook(&codebook_path(&args.codebook, cfg)?)?;
    if manifest.codebook_fingerprint != cb.fingerprint() {
        return Err(Error::StaleCodebook {
            expected: manifest.codebook_fingerprint,
            actual: cb.fingerprint(),
        });
    }
    let k = cb.len();
    let gen = GenConfig {
        cfg_scale: args.cfg_scale.unwrap_or(cfg.cfg_scale),
        // The configured default is capped at K; an explicit flag is not.
        top_k: args.top_k.unwrap_or(cfg.top_k.min(k)),
        temperature: args.temperature.unwrap_or(cfg.temperature),
        seed: cfg.seed,
    };
    let out = sample(&params, &cb, args.class, &gen)?;
    let tk = Tokenizer::with_interp(manifest.schedule.clone(), cb, cfg.patch, manifest.interp)?;
    let img = tk.detokenize(&out.tokens)?;
    let mut report = json!({
        "class": args.class,
        "seed": gen.seed,
        "cfg_scale": gen.cfg_scale,
        "top_k": gen.top_k,
        "temperature": gen.temperature,
        "output": show(&args.out),
        "tokens": out.tokens.bands,
        "band_log_probs": out.band_log_probs,
        "joint_log_prob": out.joint_log_prob(),
    });
    if let Some(dir) = &args.emit_steps {
        report["steps"] = Value::Array(write_steps(dir, &tk, &out.tokens, outputs)?);
    }
    if let Some(p) = &args.tokens_out {
        outputs.track(p);
        save_tokens(p, &out.tokens)?;
    }
    outputs.track(&args.out);
    save_image(&args.out, &img)?;
    Ok(report)
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Where to write the radial profile CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn spectrum(args: &SpectrumArgs, cfg: &RunConfig, outputs: &mut Outputs) -> Result<Value> {
    let img = load_image(&args.input)?;
    let bins = args.bins.unwrap_or(cfg.psd_bins);
    let profile = radial_profile(&power_spectrum(&dft2(img.pixels())?), bins)?;
    let alpha = fit_one_over_f(&profile)?;
    if let Some(p) = &args.csv {
        outputs.track(p);
        write_atomic(p, profile.to_csv().as_bytes())?;
    }
    Ok(json!({
        "input": show(&args.input),
        "height": img.height(),
        "width": img.width(),
        "bins": bins,
        "sigma_max": profile.sigma_max,
        "alpha": alpha,
        "csv": args.csv.as_deref().map(show),
    }))
}

#[derive(Debug, Args)]
pub struct FksArgs {
    /// Reference image, or a directory of them.
    #[arg(long)]
    pub a: PathBuf,
    /// Compared image, or a directory whose files pair with `--a` by name.
    #[arg(long)]
    pub b: PathBuf,
    /// Per-pair CSV (batch mode).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
}

const FKS_FIELDS: [&str; 5] = ["psd", "low", "mid", "high", "weighted"];

pub fn fks_cmd(args: &FksArgs, cfg: &RunConfig, outputs: &mut Outputs) -> Result<Value> {
    let bins = args.bins.unwrap_or(cfg.psd_bins);
    let run = |a: &Path, b: &Path| -> Result<(Image, nfig_core::metrics::MetricsReport)> {
        let ia = load_image(a)?;
        let ib = load_image(b)?;
        let r = compare(&ia, &ib, &cfg.schedule, default_fks_edges(ia.height(), ia.width()), bins)?;
        Ok((ia, r))
    };
    if !args.a.is_dir() {
        let (_, r) = run(&args.a, &args.b)?;
        return Ok(json!({
            "a": show(&args.a),
            "b": show(&args.b),
            "psd": r.psd,
            "fks": r.fks,
            "band_energy": r.band_energy,
        }));
    }
    let files = expand(std::slice::from_ref(&args.a), IMAGE_EXTS)?;
    let mut rows = Vec::with_capacity(files.len());
    let mut csv = String::from("a,b,psd,low,mid,high,weighted\n");
    for fa in &files {
        let fb = args.b.join(fa.file_name().expect("expanded files have names"));
        if !fb.exists() {
            return Err(Error::Format(format!("{} has no counterpart in {}", fa.display(), args.b.display())));
        }
        let (_, r) = run(fa, &fb)?;
        let vals = [r.psd, r.fks.low, r.fks.mid, r.fks.high, r.fks.weighted];
        csv.push_str(&format!(
            "{},{},{}\n",
            fa.display(),
            fb.display(),
            vals.map(|v| format!("{v:.8e}")).join(",")
        ));
        rows.push(vals);
    }
    let n = rows.len() as f64;
    let mut mean = serde_json::Map::new();
    let mut std = serde_json::Map::new();
    for (i, name) in FKS_FIELDS.iter().enumerate() {
        let m = rows.iter().map(|r| r[i]).sum::<f64>() / n;
        let v = rows.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / n;
        mean.insert(name.to_string(), json!(m));
        std.insert(name.to_string(), json!(v.sqrt()));
    }
    if let Some(p) = &args.csv {
        outputs.track(p);
        write_atomic(p, csv.as_bytes())?;
    }
    Ok(json!({
        "pairs": rows.len(),
        "mean": mean,
        "std": std,
        "csv": args.csv.as_deref().map(show),
    }))
}

#[derive(Debug, Args)]
pub struct BandEnergyArgs {
    /// Image files or directories of images.
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
}

pub fn band_energy(args: &BandEnergyArgs, cfg: &RunConfig) -> Result<Value> {
    let files = expand(&args.inputs, IMAGE_EXTS)?;
    let mut results = Vec::with_capacity(files.len());
    for f in &files {
        let img = load_image(f)?;
        results.push(json!({
            "input": show(f),
            "band_energy": band_energy_report(&img, &cfg.schedule)?,
        }));
    }
    Ok(json!({
        "sigma": cfg.schedule.sigma(),
        "results": results,
    }))
}
