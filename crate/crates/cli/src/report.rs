//! Run report: a markdown summary and a per-sensor class timeline.

use std::fmt::Write as _;
use std::path::Path;

use skywatch_core::{Millis, SensorId, TargetClass};
use skywatch_sim::runtime::{read_events, Event, Summary};
use skywatch_sim::{SimError, SimResult};

const ROWS: [&str; 5] = ["IRcam", "Vcam", "Audio", "ADSB", "System"];
const LABEL_W: f64 = 70.0;
const PLOT_W: f64 = 900.0;
const ROW_H: f64 = 22.0;

fn color(c: TargetClass) -> &'static str {
    match c {
        TargetClass::Airplane => "#1f77b4",
        TargetClass::Bird => "#2ca02c",
        TargetClass::Drone => "#d62728",
        TargetClass::Helicopter => "#9467bd",
        TargetClass::Background | TargetClass::NoData => "#cccccc",
    }
}

/// A run of equal output on one timeline row, `[start, end)` in ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub row: usize,
    pub start: Millis,
    pub end: Millis,
    pub class: TargetClass,
}

/// Per-tick outputs of every row, merged into segments. A sensor's class
/// holds from its report until its next report.
pub fn timeline_segments(events: &[Event]) -> (Vec<Segment>, Millis) {
    let ticks: Vec<(Millis, Option<TargetClass>)> = events
        .iter()
        .filter_map(|e| match e {
            Event::System { t, class, .. } => Some((*t, *class)),
            _ => None,
        })
        .collect();
    let tick = match ticks.as_slice() {
        [a, b, ..] => b.0 - a.0,
        _ => 100,
    };
    let end = ticks.last().map_or(0, |(t, _)| t + tick);
    let mut segs = Vec::new();
    let mut push = |row: usize, start: Millis, end: Millis, class: Option<TargetClass>| {
        let Some(class) = class.filter(|c| TargetClass::FUSED.contains(c)) else {
            return;
        };
        if let Some(last) = segs.last_mut() {
            let last: &mut Segment = last;
            if last.row == row && last.class == class && last.end >= start {
                last.end = last.end.max(end);
                return;
            }
        }
        segs.push(Segment { row, start, end, class });
    };
    for (row, name) in ROWS.iter().enumerate().take(4) {
        let sensor: SensorId = name.parse().expect("row names are sensors");
        let reports: Vec<(Millis, Option<TargetClass>)> = events
            .iter()
            .filter_map(|e| match e {
                Event::Sensor {
                    t,
                    sensor: s,
                    detection,
                    ..
                } if *s == sensor => Some((*t, detection.as_ref().map(|d| d.class))),
                _ => None,
            })
            .collect();
        for (i, (t, c)) in reports.iter().enumerate() {
            let next = reports.get(i + 1).map_or(end, |r| r.0);
            push(row, *t, next.max(*t), *c);
        }
    }
    for (t, c) in &ticks {
        push(4, *t, t + tick, *c);
    }
    (segs, end)
}

pub fn timeline_svg(events: &[Event]) -> String {
    let (segs, end) = timeline_segments(events);
    let end = end.max(1) as f64;
    let h = ROW_H * (ROWS.len() as f64 + 2.5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="12">"#,
        LABEL_W + PLOT_W + 10.0
    );
    for (i, name) in ROWS.iter().enumerate() {
        let y = ROW_H * i as f64;
        let _ = writeln!(s, r#"<text x="4" y="{}">{name}</text>"#, y + ROW_H * 0.7);
        let _ = writeln!(
            s,
            r##"<rect x="{LABEL_W}" y="{}" width="{PLOT_W}" height="{}" fill="#f4f4f4"/>"##,
            y + 2.0,
            ROW_H - 4.0
        );
    }
    for g in &segs {
        let x = LABEL_W + PLOT_W * g.start as f64 / end;
        let w = (PLOT_W * (g.end - g.start) as f64 / end).max(0.5);
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{}" width="{w:.2}" height="{}" fill="{}"/>"#,
            ROW_H * g.row as f64 + 2.0,
            ROW_H - 4.0,
            color(g.class)
        );
    }
    let axis_y = ROW_H * ROWS.len() as f64 + 12.0;
    let secs = (end / 1000.0).ceil() as u64;
    let step = (secs / 10).max(1);
    for k in (0..=secs).step_by(step as usize) {
        let x = LABEL_W + PLOT_W * (k as f64 * 1000.0) / end;
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{axis_y}" text-anchor="middle">{k}s</text>"#);
    }
    let mut x = LABEL_W;
    for c in TargetClass::FUSED {
        let y = axis_y + 10.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{}"/>"#, color(c));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{c}</text>"#, x + 14.0, y + 9.0);
        x += 100.0;
    }
    s.push_str("</svg>\n");
    s
}

pub fn markdown(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Run report: {}\n", summary.scenario);
    let _ = writeln!(
        s,
        "Seed {}, {:.1} s, {} fusion ticks, {} servo commands.\n",
        summary.seed, summary.duration_s, summary.ticks, summary.servo_commands
    );
    let _ = writeln!(s, "![timeline](timeline.svg)\n");
    let _ = writeln!(s, "## System output\n");
    let _ = writeln!(s, "| class | ticks |\n|---|---|");
    for (c, n) in &summary.system_detection_ticks {
        let _ = writeln!(s, "| {c} | {n} |");
    }
    let _ = writeln!(
        s,
        "\nDetection events: {}. False detections: {} ticks in {} events. Misclassified ticks: {}.\n",
        summary.system_detection_events,
        summary.false_detection_ticks,
        summary.false_detection_events,
        summary.misclassified_ticks
    );
    let _ = writeln!(s, "## Sensors\n");
    let _ = writeln!(s, "| sensor | reports | detections | stale reuses | queue drops |\n|---|---|---|---|---|");
    for (id, st) in &summary.sensors {
        let _ = writeln!(
            s,
            "| {id} | {} | {} | {} | {} |",
            st.reports, st.detections, st.stale_reuses, st.queue_drops
        );
    }
    let _ = writeln!(s, "\n## Pointing source\n");
    let _ = writeln!(s, "| source | ticks |\n|---|---|");
    for (src, n) in &summary.control_source_ticks {
        let _ = writeln!(s, "| {src} | {n} |");
    }
    let o = &summary.drone_opportunities;
    let _ = writeln!(s, "\n## Drone detection opportunities\n");
    let _ = writeln!(s, "{} opportunities.\n", o.opportunities);
    if o.opportunities > 0 {
        let _ = writeln!(s, "| source | detected | fraction |\n|---|---|---|");
        for (src, frac) in &o.fractions {
            let _ = writeln!(
                s,
                "| {src} | {} | {frac:.2} |",
                o.successes.get(src).copied().unwrap_or(0)
            );
        }
    }
    let _ = writeln!(
        s,
        "\nADS-B aircraft seen: {}. Fish-eye ticks with a track: {}.",
        summary.adsb_aircraft_seen, summary.fcam_ticks_with_track
    );
    s
}

pub fn write_report(run: &Path, out: &Path) -> SimResult<()> {
    let read = |name: &str| {
        std::fs::read_to_string(run.join(name)).map_err(|e| SimError::Schema(format!("{}: {e}", run.join(name).display())))
    };
    let summary: Summary = serde_json::from_str(&read("summary.json")?).map_err(|e| SimError::Schema(e.to_string()))?;
    let events = read_events(&read("events.jsonl")?)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.md"), markdown(&summary))?;
    std::fs::write(out.join("timeline.svg"), timeline_svg(&events))?;
    println!("{}", out.join("report.md").display());
    Ok(())
}
