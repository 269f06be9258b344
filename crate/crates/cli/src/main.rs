//! `dstg`: receiver-deniable image steganography toolkit.
//!
//! Two message channels ride one stego image. The network path (`train`,
//! `embed`, `extract`, `evaluate`) learns the embedding; the classic path
//! (`classic-embed`, `classic-extract`, `forge-key`) is exact LSB + one-time
//! pad with key forgery. `scenario` plays through a coercion episode,
//! `gradcheck` verifies the autodiff engine, `gen-corpus` writes procedural
//! covers so nothing needs downloading.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use dstg_core::autodiff::gradcheck::run_suite;
use dstg_core::bitmsg::BitMessage;
use dstg_core::classic::{self, DeniableKeyPair, Slot};
use dstg_core::config;
use dstg_core::corpus::generate_corpus;
use dstg_core::imaging::{
    from_tensor, list_dataset, load_image, load_image_native, save_image, to_tensor,
};
use dstg_core::model_io::{load_model, save_model};
use dstg_core::networks::{decode, encode, harden};
use dstg_core::scenario::{run_classic_scenario, run_dnn_scenario};
use dstg_core::training::{evaluate, train, TrainConfig};

#[derive(Parser)]
#[command(name = "dstg", version, about = "Receiver-deniable image steganography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the encoder/decoders/adversary on a directory of images.
    Train(TrainArgs),
    /// Embed one hex message per decoder into a cover image.
    Embed(EmbedArgs),
    /// Extract a decoder's message from a stego image (hex on stdout).
    Extract(ExtractArgs),
    /// Evaluate a model on a dataset (JSON report on stdout).
    Evaluate(EvaluateArgs),
    /// Finite-difference-check every autodiff primitive (JSON on stdout).
    Gradcheck(GradcheckArgs),
    /// Exact LSB + one-time-pad embedding of a real and a fake message.
    ClassicEmbed(ClassicEmbedArgs),
    /// Exact extraction from a classic stego (hex on stdout).
    ClassicExtract(ClassicExtractArgs),
    /// Forge a pad under which a slot range decodes to a chosen message.
    ForgeKey(ForgeKeyArgs),
    /// Play through the coercion walkthrough (transcript on stdout).
    Scenario(ScenarioArgs),
    /// Generate a procedural PNG corpus for training and demos.
    GenCorpus(GenCorpusArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training image directory
    #[arg(long)]
    data: PathBuf,
    /// Validation image directory
    #[arg(long)]
    val: PathBuf,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Number of decoders (and messages)
    #[arg(long, default_value_t = 2)]
    decoders: usize,
    /// Message length in bits
    #[arg(long, default_value_t = 30)]
    bits: usize,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 12)]
    batch: usize,
    /// Image loss weight
    #[arg(long = "lambda-i", default_value_t = 0.7)]
    lambda_i: f64,
    /// Per-message loss weight
    #[arg(long = "lambda-m", default_value_t = 1.0)]
    lambda_m: f64,
    /// Balance loss weight
    #[arg(long = "lambda-b", default_value_t = 1.0)]
    lambda_b: f64,
    /// Adversarial loss weight
    #[arg(long = "lambda-a", default_value_t = 0.001)]
    lambda_a: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cover: PathBuf,
    /// Comma-separated hex messages, one per decoder, in decoder order
    #[arg(long)]
    msg: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    stego: PathBuf,
    /// `real` (decoder 0), `fake` (decoder 1), or a numeric index
    #[arg(long)]
    decoder: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Override both tolerance tiers (default: 1e-4 conv/norm, 1e-6 rest)
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct ClassicEmbedArgs {
    #[arg(long)]
    cover: PathBuf,
    /// Real message, hex
    #[arg(long)]
    real: String,
    /// Fake message, hex (same bit length as the real one)
    #[arg(long)]
    fake: String,
    #[arg(long = "seed-real")]
    seed_real: u64,
    #[arg(long = "seed-fake")]
    seed_fake: u64,
    /// One-time pad for the real message, hex
    #[arg(long = "pad-real")]
    pad_real: String,
    /// One-time pad for the fake message, hex
    #[arg(long = "pad-fake")]
    pad_fake: String,
    #[arg(long)]
    out: PathBuf,
    /// Message length in bits (hex length must match)
    #[arg(long, default_value_t = 30)]
    bits: usize,
}

#[derive(Args)]
struct ClassicExtractArgs {
    #[arg(long)]
    stego: PathBuf,
    /// Which slot range: `real` or `fake`
    #[arg(long)]
    which: String,
    #[arg(long = "seed-real")]
    seed_real: u64,
    #[arg(long = "seed-fake")]
    seed_fake: u64,
    /// One-time pad, hex
    #[arg(long)]
    pad: String,
    #[arg(long)]
    bits: usize,
}

#[derive(Args)]
struct ForgeKeyArgs {
    #[arg(long)]
    stego: PathBuf,
    /// Which slot range to reinterpret: `real` or `fake`
    #[arg(long)]
    which: String,
    #[arg(long = "seed-real")]
    seed_real: u64,
    #[arg(long = "seed-fake")]
    seed_fake: u64,
    /// The message the forged pad should reveal, hex
    #[arg(long)]
    fake: String,
    #[arg(long)]
    bits: usize,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Trained model for the network walkthrough (classic-only without it)
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Message bits for the classic walkthrough
    #[arg(long, default_value_t = 30)]
    bits: usize,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_slot(which: &str) -> Result<Slot> {
    match which {
        "real" => Ok(Slot::Real),
        "fake" => Ok(Slot::Fake),
        other => bail!("--which must be `real` or `fake`, got {other:?}"),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        decoders: args.decoders,
        bits: args.bits,
        image_size: 32,
        epochs: args.epochs,
        batch: args.batch,
        weights: dstg_core::losses::LossWeights {
            image: args.lambda_i,
            message: 1.0,
            adversarial: args.lambda_a,
            per_message: args.lambda_m,
            balance: args.lambda_b,
        },
        adam: Default::default(),
        seed: args.seed,
        checkpoint_interval: 10,
        data_dir: args.data.display().to_string(),
        val_dir: args.val.display().to_string(),
    };
    let data = list_dataset(&args.data, (cfg.image_size, cfg.image_size))
        .with_context(|| format!("listing training data in {}", args.data.display()))?;
    let val = list_dataset(&args.val, (cfg.image_size, cfg.image_size))
        .with_context(|| format!("listing validation data in {}", args.val.display()))?;
    eprintln!(
        "training on {} images ({} validation), {} decoders x {} bits, {} epochs",
        data.len(),
        val.len(),
        cfg.decoders,
        cfg.bits,
        cfg.epochs
    );

    let start = std::time::Instant::now();
    let mut history_lines = Vec::with_capacity(cfg.epochs);
    let out = train(&cfg, &data, Some(&args.out), |rec| {
        eprintln!(
            "epoch {:4}/{}: total {:.5}, image {:.5}, messages {:?}, adv {:.4} [{:.0}s]",
            rec.epoch,
            cfg.epochs,
            rec.losses.total,
            rec.losses.image,
            rec.losses
                .per_message
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            rec.adv_loss,
            start.elapsed().as_secs_f64()
        );
        history_lines.push(serde_json::to_string(rec).expect("history record serializes"));
    })
    .context("training failed")?;

    save_model(&args.out, &out.model, &cfg.weights).context("saving model")?;
    let history_path = with_suffix(&args.out, ".history.jsonl");
    std::fs::write(&history_path, history_lines.join("\n") + "\n")
        .with_context(|| format!("writing {}", history_path.display()))?;
    let cfg_path = with_suffix(&args.out, ".train.cfg");
    std::fs::write(&cfg_path, config::render(&cfg))
        .with_context(|| format!("writing {}", cfg_path.display()))?;

    let report = evaluate(&out.model, &val, cfg.seed).context("validation")?;
    eprintln!(
        "validation: psnr {:.2} dB, ssim {:.4}, bit errors {:?}",
        report.psnr, report.ssim, report.bit_error
    );
    eprintln!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let (params, _) = load_model(&args.model).context("loading model")?;
    let size = params.cfg.image_size;
    let cover = load_image(&args.cover, (size, size))
        .with_context(|| format!("loading cover {}", args.cover.display()))?;
    let msgs: Vec<BitMessage> = args
        .msg
        .split(',')
        .map(|h| BitMessage::parse_hex(h.trim(), params.cfg.bits))
        .collect::<Result<_, _>>()
        .context("parsing --msg")?;
    if msgs.len() != params.cfg.decoders {
        bail!(
            "model carries {} decoders, got {} messages",
            params.cfg.decoders,
            msgs.len()
        );
    }
    let stego = encode(&params, &to_tensor(&cover), &msgs).context("encoding")?;
    let stego_buf = from_tensor(&stego).context("quantizing stego")?;
    save_image(&args.out, &stego_buf).context("writing stego")?;
    eprintln!("stego written to {}", args.out.display());
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let (params, _) = load_model(&args.model).context("loading model")?;
    let which = match args.decoder.as_str() {
        "real" => 0,
        "fake" => 1,
        numeric => numeric
            .parse::<usize>()
            .map_err(|_| anyhow!("--decoder must be real, fake, or an index"))?,
    };
    let stego = load_image_native(&args.stego)
        .with_context(|| format!("loading stego {}", args.stego.display()))?;
    let soft = decode(&params, which, &to_tensor(&stego)).context("decoding")?;
    println!("{}", harden(&soft).to_hex());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (params, _) = load_model(&args.model).context("loading model")?;
    let size = params.cfg.image_size;
    let data = list_dataset(&args.data, (size, size))
        .with_context(|| format!("listing {}", args.data.display()))?;
    let report = evaluate(&params, &data, args.seed).context("evaluating")?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let report = run_suite(args.tolerance);
    println!("{}", serde_json::to_string(&report)?);
    if !report.suite_pass {
        bail!("gradient check failed");
    }
    Ok(())
}

fn cmd_classic_embed(args: ClassicEmbedArgs) -> Result<()> {
    let cover = load_image_native(&args.cover)
        .with_context(|| format!("loading cover {}", args.cover.display()))?;
    let m_real = BitMessage::parse_hex(&args.real, args.bits).context("parsing --real")?;
    let m_fake = BitMessage::parse_hex(&args.fake, args.bits).context("parsing --fake")?;
    let keys = DeniableKeyPair {
        seed_real: args.seed_real,
        pad_real: BitMessage::parse_hex(&args.pad_real, args.bits).context("parsing --pad-real")?,
        seed_fake: args.seed_fake,
        pad_fake: BitMessage::parse_hex(&args.pad_fake, args.bits).context("parsing --pad-fake")?,
    };
    let stego = classic::classic_embed(&cover, &m_real, &m_fake, &keys).context("embedding")?;
    save_image(&args.out, &stego).context("writing stego")?;
    eprintln!("stego written to {}", args.out.display());
    Ok(())
}

fn cmd_classic_extract(args: ClassicExtractArgs) -> Result<()> {
    let stego = load_image_native(&args.stego)
        .with_context(|| format!("loading stego {}", args.stego.display()))?;
    let pad = BitMessage::parse_hex(&args.pad, args.bits).context("parsing --pad")?;
    let slot = parse_slot(&args.which)?;
    let msg = classic::classic_extract(&stego, args.seed_real, args.seed_fake, &pad, slot)
        .context("extracting")?;
    println!("{}", msg.to_hex());
    Ok(())
}

fn cmd_forge_key(args: ForgeKeyArgs) -> Result<()> {
    let stego = load_image_native(&args.stego)
        .with_context(|| format!("loading stego {}", args.stego.display()))?;
    let fake = BitMessage::parse_hex(&args.fake, args.bits).context("parsing --fake")?;
    let slot = parse_slot(&args.which)?;
    let x = classic::read_ciphertext(&stego, args.seed_real, args.seed_fake, slot, args.bits)
        .context("reading carrier bits")?;
    let pad = classic::forge_key(&x, &fake).context("forging pad")?;
    println!("{}", pad.to_hex());
    Ok(())
}

fn cmd_scenario(args: ScenarioArgs) -> Result<()> {
    let classic = run_classic_scenario(args.seed, args.bits);
    print!("{}", classic.transcript);
    let mut passed = classic.passed;
    if let Some(model_path) = &args.model {
        let (params, _) = load_model(model_path).context("loading model")?;
        let dnn = run_dnn_scenario(&params, args.seed);
        println!();
        print!("{}", dnn.transcript);
        passed &= dnn.passed;
    }
    if !passed {
        bail!("scenario failed");
    }
    Ok(())
}

fn cmd_gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let paths = generate_corpus(&args.out, args.count, args.size, args.seed)
        .with_context(|| format!("writing corpus to {}", args.out.display()))?;
    eprintln!(
        "{} images of {}x{} written to {}",
        paths.len(),
        args.size,
        args.size,
        args.out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => cmd_train(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ClassicEmbed(a) => cmd_classic_embed(a),
        Command::ClassicExtract(a) => cmd_classic_extract(a),
        Command::ForgeKey(a) => cmd_forge_key(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::GenCorpus(a) => cmd_gen_corpus(a),
    }
}
