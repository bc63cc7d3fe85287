//! CSV readers and writers for training and episode logs, plus file
//! hashing for reproducibility checks. The formats are plain numeric
//! CSV with fixed headers and stable float formatting, so identical
//! runs produce byte-identical files.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::env::action::{Rotation, Translation};
use crate::ppo::{EpisodeSummary, StepLogRow};

use super::HarnessError;

pub const STEP_LOG_HEADER: &str = "episode,step,agent_id,r_m,r_c,action_translation,action_rotation";
pub const EPISODE_LOG_HEADER: &str = "episode,mean_r_m,mean_r_c,nni,updates";
pub const POSITIONS_HEADER: &str = "episode,tick,agent_id,x,y,heading";

fn translation_name(t: Translation) -> &'static str {
    match t {
        Translation::Forward => "forward",
        Translation::Backward => "backward",
        Translation::Still => "still",
    }
}

fn rotation_name(r: Rotation) -> &'static str {
    match r {
        Rotation::Clockwise => "cw",
        Rotation::Counterclockwise => "ccw",
        Rotation::Still => "still",
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn write_step_log(path: &Path, rows: &[StepLogRow]) -> Result<(), HarnessError> {
    let mut out = create(path)?;
    writeln!(out, "{STEP_LOG_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.8},{:.8},{},{}",
            r.episode,
            r.step,
            r.agent_id,
            r.r_m,
            r.r_c,
            translation_name(r.action.translation),
            rotation_name(r.action.rotation)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_episode_log(path: &Path, rows: &[EpisodeSummary]) -> Result<(), HarnessError> {
    let mut out = create(path)?;
    writeln!(out, "{EPISODE_LOG_HEADER}")?;
    for r in rows {
        let nni = r.nni.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{},{:.8},{:.8},{},{}", r.episode, r.mean_r_m, r.mean_r_c, nni, r.updates_triggered)?;
    }
    out.flush()?;
    Ok(())
}

/// Poses of every agent at every tick of a set of episodes:
/// `episodes[episode][tick][agent] = (x, y, heading)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordedEpisodes {
    pub episodes: Vec<Vec<Vec<(f64, f64, f64)>>>,
}

impl RecordedEpisodes {
    /// Drop headings and package one episode for the spatial statistics.
    pub fn to_episode_log(&self, episode: usize, area: f64) -> crate::analysis::EpisodeLog {
        crate::analysis::EpisodeLog {
            area,
            positions: self.episodes[episode]
                .iter()
                .map(|tick| tick.iter().map(|&(x, y, _)| (x, y)).collect())
                .collect(),
        }
    }

    /// Trajectory of one agent in one episode.
    pub fn trajectory(&self, episode: usize, agent: usize) -> Vec<(f64, f64)> {
        self.episodes[episode]
            .iter()
            .map(|tick| (tick[agent].0, tick[agent].1))
            .collect()
    }
}

pub fn write_positions(path: &Path, recorded: &RecordedEpisodes) -> Result<(), HarnessError> {
    let mut out = create(path)?;
    writeln!(out, "{POSITIONS_HEADER}")?;
    for (episode, ticks) in recorded.episodes.iter().enumerate() {
        for (tick, agents) in ticks.iter().enumerate() {
            for (agent_id, &(x, y, heading)) in agents.iter().enumerate() {
                writeln!(out, "{episode},{tick},{agent_id},{x:.5},{y:.5},{heading:.5}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_positions(path: &Path) -> Result<RecordedEpisodes, HarnessError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != POSITIONS_HEADER {
        return Err(HarnessError::BadLogFormat {
            path: path.display().to_string(),
            detail: format!("unexpected header {header:?}"),
        });
    }
    let mut episodes: Vec<Vec<Vec<(f64, f64, f64)>>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(HarnessError::BadLogFormat {
                path: path.display().to_string(),
                detail: format!("line {}: {} fields", lineno + 2, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, HarnessError> {
            s.parse().map_err(|_| HarnessError::BadLogFormat {
                path: path.display().to_string(),
                detail: format!("line {}: bad number {s:?}", lineno + 2),
            })
        };
        let episode: usize = parse(fields[0])? as usize;
        let tick: usize = parse(fields[1])? as usize;
        let agent: usize = parse(fields[2])? as usize;
        let x = parse(fields[3])?;
        let y = parse(fields[4])?;
        let heading = parse(fields[5])?;
        if episodes.len() <= episode {
            episodes.resize(episode + 1, Vec::new());
        }
        let ticks = &mut episodes[episode];
        if ticks.len() <= tick {
            ticks.resize(tick + 1, Vec::new());
        }
        let agents = &mut ticks[tick];
        if agents.len() <= agent {
            agents.resize(agent + 1, (f64::NAN, f64::NAN, f64::NAN));
        }
        agents[agent] = (x, y, heading);
    }
    Ok(RecordedEpisodes { episodes })
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    Ok(super::config::hex_digest(Sha256::digest(&bytes).as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::action::AgentAction;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("curioflock-logio-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn positions_roundtrip() {
        let recorded = RecordedEpisodes {
            episodes: vec![
                vec![
                    vec![(1.0, 2.0, 0.5), (3.0, -4.0, 1.0)],
                    vec![(1.5, 2.0, 0.5), (3.0, -4.5, 1.25)],
                ],
                vec![vec![(0.0, 0.0, 0.0), (-1.0, -1.0, 3.0)]],
            ],
        };
        let path = tmp("roundtrip.csv");
        write_positions(&path, &recorded).unwrap();
        let back = read_positions(&path).unwrap();
        assert_eq!(recorded, back);
    }

    #[test]
    fn step_log_is_deterministic_and_headed() {
        let rows = vec![StepLogRow {
            episode: 0,
            step: 3,
            agent_id: 1,
            r_m: -0.001,
            r_c: 0.0123,
            action: AgentAction::new(Translation::Forward, Rotation::Still),
        }];
        let a = tmp("steps-a.csv");
        let b = tmp("steps-b.csv");
        write_step_log(&a, &rows).unwrap();
        write_step_log(&b, &rows).unwrap();
        assert_eq!(sha256_file(&a).unwrap(), sha256_file(&b).unwrap());
        let text = std::fs::read_to_string(&a).unwrap();
        assert!(text.starts_with(STEP_LOG_HEADER));
        assert!(text.contains("forward,still"));
    }

    #[test]
    fn bad_header_is_rejected() {
        let path = tmp("bad.csv");
        std::fs::write(&path, "nope\n1,2,3,4,5,6\n").unwrap();
        assert!(matches!(read_positions(&path), Err(HarnessError::BadLogFormat { .. })));
    }
}
