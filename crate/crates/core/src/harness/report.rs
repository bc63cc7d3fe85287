//! Report generation: per-condition nearest-neighbor indices with
//! significance tests against the random baseline, trajectory traces,
//! imprinting preference summaries, and a small SVG chart. Regeneration
//! from the same inputs is byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{independent_t_test, nearest_neighbor_index, one_sample_t_test};

use super::config::ExperimentConfig;
use super::logio::read_positions;
use super::HarnessError;

pub const NNI_SUMMARY_HEADER: &str =
    "condition,n_episodes,mean_nni,sd_nni,baseline_mean,baseline_sd,t,df,p,cohens_d";
pub const NNI_EPISODE_HEADER: &str = "condition,episode,nni";
pub const TRAJECTORY_HEADER: &str = "tick,agent_id,x,y";
pub const PREFERENCE_SUMMARY_HEADER: &str = "condition,contrast,n_trials,mean_preference,sd,t,df,p";

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Per-episode NNI values of one recorded positions file.
pub fn nni_per_episode(path: &Path, area: f64) -> Result<Vec<f64>, HarnessError> {
    let recorded = read_positions(path)?;
    let mut out = Vec::with_capacity(recorded.episodes.len());
    for episode in 0..recorded.episodes.len() {
        let log = recorded.to_episode_log(episode, area);
        out.push(nearest_neighbor_index(&log)?.nni);
    }
    Ok(out)
}

struct ConditionResult {
    label: String,
    nnis: Vec<f64>,
}

/// Build the report files for a finished run.
///
/// `baseline_dir` points at a [`super::run::run_random_baseline`] output;
/// when present every condition gains a trained-versus-random t test.
pub fn emit_report(run_dir: &Path, baseline_dir: Option<&Path>) -> Result<Vec<PathBuf>, HarnessError> {
    let config = ExperimentConfig::load(&run_dir.join("config.toml"))?;
    let area = config.world.floor_area();
    let report_dir = run_dir.join("report");
    std::fs::create_dir_all(&report_dir)?;
    let mut written = Vec::new();

    // condition logs, sorted for stable output
    let mut condition_files: Vec<PathBuf> = Vec::new();
    let logs_dir = run_dir.join("logs");
    if logs_dir.is_dir() {
        for entry in std::fs::read_dir(&logs_dir)? {
            let path = entry?.path();
            let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
            if name.starts_with("test_") && name.ends_with(".csv") {
                condition_files.push(path);
            }
        }
    }
    condition_files.sort();

    let baseline_nnis: Option<Vec<f64>> = match baseline_dir {
        Some(dir) => {
            let path = dir.join("logs/baseline_positions.csv");
            if path.is_file() {
                Some(nni_per_episode(&path, area)?)
            } else {
                return Err(HarnessError::MissingInput(format!("{} not found", path.display())));
            }
        }
        None => None,
    };

    let mut conditions = Vec::new();
    for path in &condition_files {
        let name = path.file_name().unwrap().to_string_lossy();
        let label = name.trim_start_matches("test_").trim_end_matches(".csv").to_string();
        conditions.push(ConditionResult { label, nnis: nni_per_episode(path, area)? });
    }
    if let Some(base) = &baseline_nnis {
        conditions.push(ConditionResult { label: "random_baseline".into(), nnis: base.clone() });
    }

    // per-episode table
    {
        let path = report_dir.join("nni_per_episode.csv");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "{NNI_EPISODE_HEADER}")?;
        for c in &conditions {
            for (i, nni) in c.nnis.iter().enumerate() {
                writeln!(out, "{},{},{:.6}", c.label, i, nni)?;
            }
        }
        out.flush()?;
        written.push(path);
    }

    // summary with trained-vs-random comparisons
    {
        let path = report_dir.join("nni_summary.csv");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "{NNI_SUMMARY_HEADER}")?;
        for c in &conditions {
            let m = if c.nnis.is_empty() { f64::NAN } else { mean(&c.nnis) };
            let sd = sample_sd(&c.nnis);
            let compare = match (&baseline_nnis, c.label.as_str()) {
                (Some(base), label) if label != "random_baseline" && c.nnis.len() >= 2 && base.len() >= 2 => {
                    let t = independent_t_test(&c.nnis, base)?;
                    Some((mean(base), sample_sd(base), t))
                }
                _ => None,
            };
            match compare {
                Some((bm, bsd, t)) => writeln!(
                    out,
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{},{:.6e},{:.4}",
                    c.label,
                    c.nnis.len(),
                    m,
                    sd,
                    bm,
                    bsd,
                    t.t,
                    t.df,
                    t.p,
                    t.cohens_d
                )?,
                None => writeln!(out, "{},{},{:.6},{:.6},,,,,,", c.label, c.nnis.len(), m, sd)?,
            }
        }
        out.flush()?;
        written.push(path);
    }

    // trajectory traces of the first condition's first episode
    {
        let path = report_dir.join("trajectories.csv");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        if let Some(first) = condition_files.first() {
            let recorded = read_positions(first)?;
            if let Some(ticks) = recorded.episodes.first() {
                for (tick, agents) in ticks.iter().enumerate() {
                    for (agent, &(x, y, _)) in agents.iter().enumerate() {
                        writeln!(out, "{tick},{agent},{x:.5},{y:.5}")?;
                    }
                }
            }
        }
        out.flush()?;
        written.push(path);
    }

    // imprinting preference summary
    let preferences_path = run_dir.join("logs/preferences.csv");
    if preferences_path.is_file() {
        let path = report_dir.join("preference_summary.csv");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "{PREFERENCE_SUMMARY_HEADER}")?;
        for ((condition, contrast), values) in read_preferences(&preferences_path)? {
            let m = mean(&values);
            let sd = sample_sd(&values);
            if values.len() >= 2 && sd > 0.0 {
                let t = one_sample_t_test(&values, 0.5)?;
                writeln!(
                    out,
                    "{},{},{},{:.6},{:.6},{:.4},{},{:.6e}",
                    condition,
                    contrast,
                    values.len(),
                    m,
                    sd,
                    t.t,
                    t.df,
                    t.p
                )?;
            } else {
                writeln!(out, "{},{},{},{:.6},{:.6},,,", condition, contrast, values.len(), m, sd)?;
            }
        }
        out.flush()?;
        written.push(path);
    }

    // bar chart
    {
        let path = report_dir.join("nni_summary.svg");
        let svg = nni_bar_chart(&conditions);
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

/// Read logs/preferences.csv into (condition, contrast) -> values,
/// keeping first-seen order.
#[allow(clippy::type_complexity)]
pub fn read_preferences(path: &Path) -> Result<Vec<((String, String), Vec<f64>)>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "condition,contrast,trial,imprint_side,preference" {
        return Err(HarnessError::BadLogFormat {
            path: path.display().to_string(),
            detail: format!("unexpected header {header:?}"),
        });
    }
    let mut groups: Vec<((String, String), Vec<f64>)> = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(HarnessError::BadLogFormat {
                path: path.display().to_string(),
                detail: format!("bad row {line:?}"),
            });
        }
        let key = (fields[0].to_string(), fields[1].to_string());
        let value: f64 = fields[4].parse().map_err(|_| HarnessError::BadLogFormat {
            path: path.display().to_string(),
            detail: format!("bad preference {:?}", fields[4]),
        })?;
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, values)) => values.push(value),
            None => groups.push((key, vec![value])),
        }
    }
    Ok(groups)
}

fn nni_bar_chart(conditions: &[ConditionResult]) -> String {
    let width = 720.0;
    let height = 360.0;
    let margin = 60.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let max_nni = conditions
        .iter()
        .filter(|c| !c.nnis.is_empty())
        .map(|c| mean(&c.nnis))
        .fold(1.2f64, f64::max)
        * 1.1;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<style>text{font-family:sans-serif;font-size:11px}</style>\n");
    svg.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - margin,
        width - margin,
        height - margin
    ));
    svg.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - margin
    ));
    // reference line at NNI = 1 (random expectation)
    let y_one = height - margin - plot_h * (1.0 / max_nni);
    svg.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{y_one:.1}\" x2=\"{}\" y2=\"{y_one:.1}\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n",
        width - margin
    ));
    svg.push_str(&format!("<text x=\"{}\" y=\"{:.1}\" fill=\"red\">NNI = 1</text>\n", width - margin + 4.0, y_one + 4.0));

    let n = conditions.len().max(1);
    let slot = plot_w / n as f64;
    for (i, c) in conditions.iter().enumerate() {
        if c.nnis.is_empty() {
            continue;
        }
        let m = mean(&c.nnis);
        let bar_h = plot_h * (m / max_nni);
        let x = margin + i as f64 * slot + slot * 0.15;
        let y = height - margin - bar_h;
        let fill = if c.label == "random_baseline" { "#e07b39" } else { "#4878a8" };
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{bar_h:.1}\" fill=\"{fill}\"/>\n",
            slot * 0.7
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            x + slot * 0.35,
            height - margin + 14.0,
            c.label
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{m:.2}</text>\n",
            x + slot * 0.35,
            y - 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"{:.1}\" transform=\"rotate(-90 {margin} {:.1}) \" text-anchor=\"middle\">mean NNI</text>\n",
        margin - 40.0 + plot_h / 2.0,
        margin - 40.0 + plot_h / 2.0,
    ));
    svg.push_str("</svg>\n");
    svg
}
