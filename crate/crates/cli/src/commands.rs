use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use sectorbeam::designer::{design_bank_with_diagnostics, write_bank_csv, BinDiagnostics};
use sectorbeam::metrics::CountConfusion;
use sectorbeam::pipeline::{apply_bank, export_pattern, read_wav, write_wav_f32};
use sectorbeam::scene::{per_sector_sir, render_scene, speech_shaped_noise};
use sectorbeam::{AngularSector, BeamformerBank, SceneSource, SceneSpec, StftConfig};

use crate::config::{SceneConfig, SignalKind, ToolConfig};
use crate::{ApplyArgs, DesignArgs, EvalCountsArgs, Failure, PatternArgs, SimulateArgs};

type CmdResult = Result<(), Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

/// `<path>.meta.toml`
fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

fn write_sidecar(path: &Path, meta: &impl Serialize) -> CmdResult {
    let text = toml::to_string(meta).map_err(|e| Failure::input(format!("metadata: {e}")))?;
    let side = sidecar_path(path);
    std::fs::write(&side, text).map_err(|e| io_failure(&side, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Serialize)]
struct SectorMeta {
    channel: usize,
    label: String,
    azimuth_start_deg: f64,
    azimuth_end_deg: f64,
    elevation_min_deg: f64,
    elevation_max_deg: f64,
}

fn sector_meta(sectors: &[AngularSector]) -> Vec<SectorMeta> {
    sectors
        .iter()
        .enumerate()
        .map(|(channel, s)| SectorMeta {
            channel,
            label: s.label().to_string(),
            azimuth_start_deg: s.azimuth_start_deg(),
            azimuth_end_deg: s.azimuth_end_deg(),
            elevation_min_deg: s.elevation_min_deg(),
            elevation_max_deg: s.elevation_max_deg(),
        })
        .collect()
}

#[derive(Serialize)]
struct BankMeta<'a> {
    bank_sha256: String,
    num_mics: usize,
    num_sectors: usize,
    n_bins: usize,
    max_condition: f64,
    sector: Vec<SectorMeta>,
    config: &'a ToolConfig,
}

fn condition_summary(diag: &[BinDiagnostics]) -> String {
    let mut conds: Vec<f64> = diag.iter().map(|d| d.condition).collect();
    conds.sort_by(f64::total_cmp);
    let worst = diag
        .iter()
        .max_by(|a, b| a.condition.total_cmp(&b.condition))
        .expect("at least one bin");
    format!(
        "condition number over {} bins: min {:.3e}, median {:.3e}, max {:.3e} (bin {}, {:.1} Hz)",
        conds.len(),
        conds[0],
        conds[conds.len() / 2],
        worst.condition,
        worst.bin,
        worst.freq_hz
    )
}

pub fn design(args: &DesignArgs) -> CmdResult {
    let cfg = ToolConfig::load(&args.config)?;
    let geometry = cfg.geometry.geometry();
    let sectors = cfg.sectors.sectors();
    eprintln!(
        "designing {} sectors for {} ({} mics), {} bins",
        sectors.len(),
        geometry.name(),
        geometry.num_mics(),
        cfg.design.config().n_bins()
    );
    let (bank, diag) =
        design_bank_with_diagnostics(geometry, sectors, cfg.design.config(), cfg.design.wave_context())?;
    eprintln!("{}", condition_summary(&diag));

    let bytes = bank.to_bytes();
    std::fs::write(&args.out, &bytes).map_err(|e| io_failure(&args.out, e))?;
    if let Some(csv) = &args.csv {
        write_bank_csv(&bank, csv)?;
    }
    write_sidecar(
        &args.out,
        &BankMeta {
            bank_sha256: sha256_hex(&bytes),
            num_mics: bank.num_mics(),
            num_sectors: bank.num_sectors(),
            n_bins: bank.n_bins(),
            max_condition: diag.iter().map(|d| d.condition).fold(0.0, f64::max),
            sector: sector_meta(bank.sectors()),
            config: &cfg,
        },
    )?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn load_bank(path: &Path) -> Result<(BeamformerBank, String), Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_failure(path, e))?;
    let bank = BeamformerBank::from_bytes(&bytes).map_err(|e| io_failure(path, e))?;
    Ok((bank, sha256_hex(&bytes)))
}

fn stft_for(bank: &BeamformerBank, hop: Option<usize>) -> Result<StftConfig, Failure> {
    let c = bank.config();
    StftConfig::new(c.n_fft, hop.unwrap_or(c.n_fft / 2), c.sample_rate_hz).map_err(Failure::from)
}

#[derive(Serialize)]
struct ApplyMeta {
    input: String,
    bank: String,
    bank_sha256: String,
    sample_rate_hz: f64,
    n_fft: usize,
    hop: usize,
    samples: usize,
    sector: Vec<SectorMeta>,
}

pub fn apply(args: &ApplyArgs) -> CmdResult {
    let (bank, digest) = load_bank(&args.bank)?;
    let stft = stft_for(&bank, args.hop)?;
    let audio = read_wav(&args.input)?;
    let out = apply_bank(&audio, &bank, &stft)?;
    write_wav_f32(&args.out, &out)?;
    write_sidecar(
        &args.out,
        &ApplyMeta {
            input: args.input.display().to_string(),
            bank: args.bank.display().to_string(),
            bank_sha256: digest,
            sample_rate_hz: out.sample_rate_hz(),
            n_fft: stft.n_fft,
            hop: stft.hop,
            samples: out.len(),
            sector: sector_meta(bank.sectors()),
        },
    )?;
    eprintln!(
        "{} channels -> {} sector channels, {} samples",
        audio.channels(),
        out.channels(),
        out.len()
    );
    Ok(())
}

pub fn pattern(args: &PatternArgs) -> CmdResult {
    let (bank, _) = load_bank(&args.bank)?;
    if args.sector == 0 || args.sector > bank.num_sectors() {
        return Err(Failure::input(format!(
            "--sector {} out of range: bank has sectors 1..={}",
            args.sector,
            bank.num_sectors()
        )));
    }
    if args.elevations.is_empty() {
        return Err(Failure::input("--elevations is empty"));
    }
    let map = export_pattern(&bank, args.sector - 1, &args.elevations, args.azimuth_step)?;
    map.write_csv(&args.out)?;
    eprintln!(
        "wrote {} rows to {}",
        map.magnitudes_db.len(),
        args.out.display()
    );
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let scene_cfg = SceneConfig::load(&args.config)?;
    let (bank, _) = load_bank(&args.bank)?;
    let stft = stft_for(&bank, scene_cfg.hop)?;
    let fs = bank.config().sample_rate_hz;
    let len = (scene_cfg.duration_s * fs).round() as usize;

    let mut sources = Vec::with_capacity(scene_cfg.source.len());
    for (i, s) in scene_cfg.source.iter().enumerate() {
        let signal = match (&s.wav, &s.signal) {
            (Some(path), _) => {
                let audio = read_wav(path)?;
                if audio.channels() != 1 || audio.sample_rate_hz() != fs {
                    return Err(Failure::input(format!(
                        "source {i}: {} must be mono at {fs} Hz (found {} channels at {} Hz)",
                        path.display(),
                        audio.channels(),
                        audio.sample_rate_hz()
                    )));
                }
                audio.samples().row(0).to_vec()
            }
            (None, Some(SignalKind::SpeechShaped)) => {
                speech_shaped_noise(len, fs, s.seed.unwrap_or(i as u64))
            }
            (None, None) => unreachable!("checked when parsing"),
        };
        sources.push(SceneSource {
            direction: sectorbeam::Direction::new(s.azimuth_deg.into(), s.elevation_deg.into())?,
            signal,
            gain: s.gain,
        });
    }
    let spec = SceneSpec {
        sources,
        noise_level: scene_cfg.noise_level,
        geometry: bank.geometry().clone(),
        ctx: *bank.wave_context(),
        seed: args.seed.unwrap_or(scene_cfg.seed),
    };

    let (target_sector, rows) = per_sector_sir(&spec, &bank, scene_cfg.target, &stft)?;
    let mics = render_scene(&spec, &stft)?;
    let beams = apply_bank(&mics, &bank, &stft)?;
    write_wav_f32(with_suffix(&args.out, ".mics.wav"), &mics)?;
    write_wav_f32(with_suffix(&args.out, ".beams.wav"), &beams)?;

    let mut w = csv::Writer::from_path(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let write_err = |e: csv::Error| io_failure(&args.out, e);
    w.write_record([
        "sector",
        "label",
        "contains_target",
        "output_sir_db",
        "reference_sir_db",
        "sir_gain_db",
    ])
    .map_err(write_err)?;
    for r in &rows {
        w.write_record([
            (r.sector + 1).to_string(),
            r.label.clone(),
            (r.sector == target_sector).to_string(),
            format!("{:.6}", r.output_sir_db),
            format!("{:.6}", r.reference_sir_db),
            format!("{:.6}", r.gain_db),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(|e| io_failure(&args.out, e))?;
    eprintln!(
        "target in sector {} ({}): SIR gain {:.2} dB",
        target_sector + 1,
        rows[target_sector].label,
        rows[target_sector].gain_db
    );
    Ok(())
}

fn parse_pairs(path: &Path) -> Result<Vec<(usize, usize)>, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut pairs = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_failure(path, e))?;
        let line = record.position().map_or(n as u64 + 1, |p| p.line());
        if n == 0 && record.get(0) == Some("true_count") {
            continue;
        }
        if record.len() != 2 {
            return Err(Failure::input(format!(
                "{}:{line}: expected 2 fields (true_count,estimated_count), found {}",
                path.display(),
                record.len()
            )));
        }
        let field = |i: usize| {
            record[i].parse::<usize>().map_err(|_| {
                Failure::input(format!(
                    "{}:{line}: `{}` is not a non-negative integer",
                    path.display(),
                    &record[i]
                ))
            })
        };
        pairs.push((field(0)?, field(1)?));
    }
    if pairs.is_empty() {
        return Err(Failure::input(format!("{}: no count pairs", path.display())));
    }
    Ok(pairs)
}

pub fn eval_counts(args: &EvalCountsArgs) -> CmdResult {
    let pairs = parse_pairs(&args.input)?;
    let conf = CountConfusion::from_pairs(&pairs)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let write_err = |e: csv::Error| io_failure(&args.out, e);
    w.write_record(["true_count", "estimated_count", "score"]).map_err(write_err)?;
    for (k, i, score) in conf.score_table() {
        w.write_record([k.to_string(), i.to_string(), score.to_string()])
            .map_err(write_err)?;
    }
    w.flush().map_err(|e| io_failure(&args.out, e))?;
    eprintln!("{} pairs, true counts up to {}", pairs.len(), conf.max_true_count());
    Ok(())
}
