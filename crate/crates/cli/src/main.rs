//! `skywatch`: run scenarios, score detectors, decode ADS-B, dump MFCCs,
//! replay fusion logs and render run reports.

mod report;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use skywatch_core::adsb::{parse_frame_line, AdsbQueues};
use skywatch_core::audio::{read_wav, Mfcc};
use skywatch_core::evaluation::{
    evaluate, pr_curves_svg, read_detections_csv, read_ground_truth_csv, write_pr_csv, write_sweep_csv, EvalReport,
    GroundTruthFrame, GtObject, ScoredBox,
};
use skywatch_core::fusion::fusion_replay;
use skywatch_core::geometry::{DriBin, GeoPosition, SystemPose};
use skywatch_core::{SensorId, TargetClass};
use skywatch_sim::adsb_emit::{frames_to_text, scenario_frames};
use skywatch_sim::runtime::{fusion_inputs, read_events, DisplayEntry, Event, RunConfig};
use skywatch_sim::world::World;
use skywatch_sim::{SimError, SimResult};

const DEFAULT_OUT: &str = "skywatch-out";
const LOG_ENV: &str = "SKYWATCH_LOG";

#[derive(Debug, Parser)]
#[command(name = "skywatch", version, about = "Multi-sensor drone detection: simulation, fusion and evaluation")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every stochastic stream; overrides config and scenario.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Pace the virtual clock against the wall clock.
    #[arg(long, global = true)]
    realtime: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write events.jsonl, metrics.csv and summary.json.
    Simulate {
        /// Scenario JSON; the bundled demo when neither this nor the config names one.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Score detections against ground truth.
    Evaluate {
        /// Ground-truth CSV (frame,class,x,y,w,h,bin).
        #[arg(long, requires = "pred", conflicts_with = "events")]
        gt: Option<PathBuf>,
        /// Detection CSV (frame,class,confidence,x,y,w,h).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Event log from `simulate`; scores one camera against its truth boxes.
        #[arg(long, requires = "sensor")]
        events: Option<PathBuf>,
        #[arg(long)]
        sensor: Option<SensorId>,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, default_value_t = 0.5)]
        conf: f64,
    },
    /// Decode `t_us,HEX` (or bare HEX) frame lines into aircraft track snapshots.
    DecodeAdsb {
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        lon: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alt: f64,
        /// Heading of the system's zero azimuth, degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        orientation: f64,
    },
    /// Write the MFCC matrix of a WAV file as CSV.
    MfccDump { input: PathBuf },
    /// Re-run decision-level fusion over a recorded event log.
    FuseReplay {
        events: PathBuf,
        /// Tick period, ms; defaults to the queue poll period.
        #[arg(long)]
        tick_ms: Option<u64>,
    },
    /// Summarise a run directory as report.md and timeline.svg.
    Report { run: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skywatch: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> SimResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            if !p.is_file() {
                return Err(SimError::Schema(format!("config file {} not found", p.display())));
            }
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.realtime |= cli.realtime;

    match &cli.command {
        Command::Simulate { scenario } => {
            if scenario.is_some() {
                cfg.scenario = scenario.clone();
            }
            simulate(&cfg)
        }
        Command::Evaluate {
            gt,
            pred,
            events,
            sensor,
            iou,
            conf,
        } => {
            let (dets, gts) = match (gt, pred, events, sensor) {
                (Some(gt), Some(pred), None, _) => (
                    read_detections_csv(open(pred)?)?,
                    read_ground_truth_csv(open(gt)?)?,
                ),
                (None, _, Some(ev), Some(s)) => camera_dataset(&read_events(&read_text(ev)?)?, *s)?,
                _ => return Err(SimError::Schema("evaluate needs --gt and --pred, or --events and --sensor".into())),
            };
            run_evaluate(&dets, &gts, *iou, *conf, &out_dir(&cfg))
        }
        Command::DecodeAdsb {
            input,
            lat,
            lon,
            alt,
            orientation,
        } => {
            let pose = SystemPose::new(GeoPosition::new(*lat, *lon, *alt)?, *orientation)?;
            decode_adsb(input, &pose, &cfg, cfg.out.as_deref())
        }
        Command::MfccDump { input } => mfcc_dump(input, &cfg, cfg.out.as_deref()),
        Command::FuseReplay { events, tick_ms } => fuse_replay(events, *tick_ms, &cfg, cfg.out.as_deref()),
        Command::Report { run } => {
            let out = cfg.out.clone().unwrap_or_else(|| run.clone());
            report::write_report(run, &out)
        }
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn open(p: &Path) -> SimResult<File> {
    File::open(p).map_err(|e| SimError::Schema(format!("{}: {e}", p.display())))
}

fn read_text(p: &Path) -> SimResult<String> {
    std::fs::read_to_string(p).map_err(|e| SimError::Schema(format!("{}: {e}", p.display())))
}

/// Stdout, or `name` inside `dir`.
fn sink(dir: Option<&Path>, name: &str) -> SimResult<Box<dyn Write>> {
    Ok(match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Box::new(BufWriter::new(File::create(d.join(name))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn json_err(e: serde_json::Error) -> SimError {
    SimError::Schema(e.to_string())
}

fn simulate(cfg: &RunConfig) -> SimResult<()> {
    if let Some(p) = &cfg.scenario {
        if !p.is_file() {
            return Err(SimError::Schema(format!("scenario file {} not found", p.display())));
        }
    }
    let scenario = cfg.load_scenario()?;
    let out = out_dir(cfg);
    log::info!("running scenario '{}' for {} s", scenario.name, scenario.duration);
    let run = skywatch_sim::run(&scenario, cfg)?;
    run.write_to(&out)?;
    let world = World::new(&scenario, scenario.seed)?;
    std::fs::write(out.join("adsb_frames.txt"), frames_to_text(&scenario_frames(&world)))?;
    std::fs::write(out.join("scenario.json"), scenario.to_json())?;
    let s = &run.summary;
    println!(
        "{} ticks, {} servo commands, {} system detection events, {} false detection events -> {}",
        s.ticks,
        s.servo_commands,
        s.system_detection_events,
        s.false_detection_events,
        out.display()
    );
    Ok(())
}

/// Detections and truth boxes of one camera from an event log, one frame per report.
fn camera_dataset(events: &[Event], sensor: SensorId) -> SimResult<(Vec<ScoredBox>, Vec<GroundTruthFrame>)> {
    if !sensor.is_vision() {
        return Err(SimError::Schema(format!("{sensor} reports carry no boxes")));
    }
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for e in events {
        let Event::Sensor {
            t,
            sensor: s,
            detection,
            truth: Some(truth),
            ..
        } = e
        else {
            continue;
        };
        if *s != sensor {
            continue;
        }
        gts.push(GroundTruthFrame {
            frame: *t,
            objects: truth
                .iter()
                .map(|b| GtObject {
                    class: b.class,
                    bbox: b.bbox,
                    bin: Some(b.bin),
                })
                .collect(),
        });
        if let Some(d) = detection {
            if let (Some(bbox), true) = (d.bbox, TargetClass::FUSED.contains(&d.class)) {
                dets.push(ScoredBox {
                    frame: *t,
                    class: d.class,
                    confidence: d.confidence,
                    bbox,
                });
            }
        }
    }
    Ok((dets, gts))
}

fn run_evaluate(dets: &[ScoredBox], gts: &[GroundTruthFrame], iou: f64, conf: f64, out: &Path) -> SimResult<()> {
    let report = evaluate(dets, gts, iou, conf)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("eval.json"),
        serde_json::to_string_pretty(&report).map_err(json_err)? + "\n",
    )?;
    write_sweep_csv(File::create(out.join("sweep.csv"))?, &report.sweep)?;
    write_pr_csv(File::create(out.join("pr.csv"))?, &report.curves)?;
    std::fs::write(out.join("pr.svg"), pr_curves_svg(&report.curves))?;
    print!("{}", eval_text(&report));
    Ok(())
}

fn eval_text(r: &EvalReport) -> String {
    let mut s = format!(
        "IoU {:.2}, confidence {:.2}\n\nclass        TP    FP    FN  precision  recall      F1      AP\n",
        r.iou_threshold, r.confidence_threshold
    );
    for c in &r.classes {
        s.push_str(&format!(
            "{:<10} {:>5} {:>5} {:>5}  {:>9.4} {:>7.4} {:>7.4} {:>7.4}\n",
            c.class.as_str(),
            c.counts.tp,
            c.counts.fp,
            c.counts.fn_,
            c.precision,
            c.recall,
            c.f1,
            c.ap
        ));
    }
    if let Some(m) = r.map {
        s.push_str(&format!("mAP {m:.4}\n"));
    }
    if r.bins.is_empty() {
        return s;
    }
    for bin in DriBin::ALL {
        s.push_str(&format!("\n[{bin:?}]\nclass        TP    FP    FN  precision  recall      F1\n"));
        for b in r.bins.iter().filter(|b| b.bin == bin) {
            s.push_str(&format!(
                "{:<10} {:>5} {:>5} {:>5}  {:>9.4} {:>7.4} {:>7.4}\n",
                b.class.as_str(),
                b.counts.tp,
                b.counts.fp,
                b.counts.fn_,
                b.precision,
                b.recall,
                b.f1
            ));
        }
    }
    s
}

#[derive(Serialize)]
struct Snapshot<'a> {
    t: u64,
    #[serde(flatten)]
    entry: &'a DisplayEntry,
}

fn decode_adsb(input: &Path, pose: &SystemPose, cfg: &RunConfig, out: Option<&Path>) -> SimResult<()> {
    let reader = BufReader::new(open(input)?);
    let mut queues = AdsbQueues::new(cfg.adsb);
    let mut w = sink(out, "adsb_tracks.jsonl")?;
    let (mut lines, mut failed) = (0u64, 0u64);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        lines += 1;
        let frame = match parse_frame_line(line, 0) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("line {}: {e}", i + 1);
                failed += 1;
                continue;
            }
        };
        queues.expire(frame.t);
        let Some(icao) = queues.ingest_frame(&frame, pose) else {
            log::debug!("line {}: frame rejected", i + 1);
            failed += 1;
            continue;
        };
        let Some(entry) = queues.current().get(&icao) else { continue };
        let shown = DisplayEntry {
            displayable: entry.is_displayable(cfg.display_range_m),
            entry: entry.clone(),
        };
        let snap = Snapshot {
            t: frame.t,
            entry: &shown,
        };
        writeln!(w, "{}", serde_json::to_string(&snap).map_err(json_err)?)?;
    }
    w.flush()?;
    eprintln!(
        "{lines} frames, {} decoded, {failed} skipped, {} aircraft",
        lines - failed,
        queues.current().len()
    );
    if lines > 0 && failed == lines {
        return Err(SimError::Schema("no frame could be decoded".into()));
    }
    Ok(())
}

fn mfcc_dump(input: &Path, cfg: &RunConfig, out: Option<&Path>) -> SimResult<()> {
    let (samples, rate) = read_wav(open(input)?)?;
    let mut mcfg = cfg.mfcc;
    mcfg.sample_rate = rate;
    let frames = Mfcc::new(mcfg)?.extract(&samples)?;
    let mut w = sink(out, "mfcc.csv")?;
    frames.write_csv(&mut w)?;
    w.flush()?;
    eprintln!("{} frames x {} coefficients", frames.n_frames, frames.num_coeffs);
    Ok(())
}

fn fuse_replay(events: &Path, tick_ms: Option<u64>, cfg: &RunConfig, out: Option<&Path>) -> SimResult<()> {
    let events = read_events(&read_text(events)?)?;
    let tick = tick_ms.unwrap_or_else(|| cfg.rates.poll_period_ms());
    let end = events
        .iter()
        .filter_map(|e| match e {
            Event::System { t, .. } => Some(t + tick),
            _ => None,
        })
        .max();
    let timeline = fusion_replay(&fusion_inputs(&events), &cfg.fusion.to_config()?, tick, end)?;
    let mut w = sink(out, "timeline.jsonl")?;
    for entry in &timeline {
        writeln!(w, "{}", serde_json::to_string(entry).map_err(json_err)?)?;
    }
    w.flush()?;
    let detecting = timeline.iter().filter(|e| e.class.is_some()).count();
    eprintln!("{} ticks, {detecting} with a system detection", timeline.len());
    Ok(())
}
