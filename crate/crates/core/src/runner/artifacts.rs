//! Output files of a run. Every file starts with a line naming the run seed.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::round::Event;
use crate::agent::AgentState;
use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::llm::CallLog;
use crate::metrics::{MetricsSnapshot, TopicMetrics};
use crate::network::SocialGraph;
use crate::topics::TopicStats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub events: PathBuf,
    pub beliefs: PathBuf,
    pub metrics: PathBuf,
    pub fatigue: PathBuf,
    pub prompts: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub graph: PathBuf,
    pub memory: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: impl Into<PathBuf>, with_prompts: bool) -> Self {
        let dir = dir.into();
        RunArtifacts {
            config: dir.join("config.toml"),
            events: dir.join("events.jsonl"),
            beliefs: dir.join("beliefs.csv"),
            metrics: dir.join("metrics.csv"),
            fatigue: dir.join("fatigue.csv"),
            prompts: with_prompts.then(|| dir.join("prompts.jsonl")),
            checkpoint: dir.join("checkpoint.json"),
            graph: dir.join("graph.edges"),
            memory: dir.join("memory.jsonl"),
            dir,
        }
    }
}

/// Byte lengths of the append-only tables at the end of a committed round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offsets {
    pub events: u64,
    pub beliefs: u64,
    pub metrics: u64,
    pub fatigue: u64,
}

pub(crate) struct ArtifactWriter {
    paths: RunArtifacts,
    events: BufWriter<File>,
    beliefs: csv::Writer<File>,
    metrics: csv::Writer<File>,
    fatigue: csv::Writer<File>,
    prompts: Option<BufWriter<File>>,
}

fn seed_line(seed: u64) -> String {
    format!("# seed={seed}\n")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(file: File) -> csv::Writer<File> {
    csv::WriterBuilder::new().has_headers(false).from_writer(file)
}

impl ArtifactWriter {
    /// Creates fresh files, writing seed lines, column headers, the config echo and the graph.
    pub(crate) fn create(
        paths: RunArtifacts,
        config: &SimulationConfig,
        graph: &SocialGraph,
    ) -> Result<Self> {
        fs::create_dir_all(&paths.dir)?;
        let seed = config.seed;
        fs::write(&paths.config, format!("{}{}", seed_line(seed), config.to_toml_string()))?;
        fs::write(&paths.graph, graph.to_edge_list(&format!("seed={seed}")))?;

        let mut events = BufWriter::new(File::create(&paths.events)?);
        writeln!(events, "{}", json!({"seed": seed, "file": "events"}))?;

        let topic_cols: Vec<String> = (0..config.n_topics()).map(|t| format!("t{t}")).collect();
        let open = |path: &Path, header: &[String]| -> Result<csv::Writer<File>> {
            let mut f = File::create(path)?;
            f.write_all(seed_line(seed).as_bytes())?;
            let mut w = csv_writer(f);
            w.write_record(header)?;
            Ok(w)
        };
        let mut header = vec!["round".to_string(), "agent".to_string()];
        header.extend(topic_cols);
        let beliefs = open(&paths.beliefs, &header)?;
        let metrics = open(
            &paths.metrics,
            &[
                "round", "topic", "nci", "eci", "polarization", "global_disagreement", "mean_nci",
                "heat", "mean_fatigue",
            ]
            .map(String::from),
        )?;
        let fatigue = open(
            &paths.fatigue,
            &["round", "agent", "topic", "tsr", "fatigue"].map(String::from),
        )?;
        let prompts = match &paths.prompts {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                writeln!(w, "{}", json!({"seed": seed, "file": "prompts"}))?;
                Some(w)
            }
            None => None,
        };
        Ok(ArtifactWriter {
            paths,
            events,
            beliefs,
            metrics,
            fatigue,
            prompts,
        })
    }

    /// Reopens existing files for appending after cutting the tables back to `offsets`.
    pub(crate) fn reopen(paths: RunArtifacts, offsets: &Offsets) -> Result<Self> {
        let cut = |path: &Path, len: u64| -> Result<File> {
            let f = OpenOptions::new().read(true).write(true).open(path).map_err(|e| {
                Error::Checkpoint(format!("cannot reopen {}: {e}", path.display()))
            })?;
            let actual = f.metadata()?.len();
            if actual < len {
                return Err(Error::Checkpoint(format!(
                    "{} is shorter ({actual} bytes) than the checkpoint expects ({len})",
                    path.display()
                )));
            }
            f.set_len(len)?;
            drop(f);
            Ok(OpenOptions::new().append(true).open(path)?)
        };
        let events = BufWriter::new(cut(&paths.events, offsets.events)?);
        let beliefs = csv_writer(cut(&paths.beliefs, offsets.beliefs)?);
        let metrics = csv_writer(cut(&paths.metrics, offsets.metrics)?);
        let fatigue = csv_writer(cut(&paths.fatigue, offsets.fatigue)?);
        let prompts = match &paths.prompts {
            Some(p) => Some(BufWriter::new(
                OpenOptions::new().create(true).append(true).open(p)?,
            )),
            None => None,
        };
        Ok(ArtifactWriter {
            paths,
            events,
            beliefs,
            metrics,
            fatigue,
            prompts,
        })
    }

    pub(crate) fn paths(&self) -> &RunArtifacts {
        &self.paths
    }

    pub(crate) fn write_events(&mut self, events: &[Event]) -> Result<()> {
        for e in events {
            serde_json::to_writer(&mut self.events, e)?;
            self.events.write_all(b"\n")?;
        }
        Ok(())
    }

    pub(crate) fn write_prompts(&mut self, calls: &[CallLog]) -> Result<()> {
        if let Some(w) = &mut self.prompts {
            for c in calls {
                serde_json::to_writer(&mut *w, c)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub(crate) fn write_round(
        &mut self,
        agents: &[AgentState],
        snapshot: &MetricsSnapshot,
        stats: &TopicStats,
    ) -> Result<()> {
        let round = snapshot.round.to_string();
        for a in agents {
            let mut row = vec![round.clone(), a.id().to_string()];
            row.extend(a.beliefs.values().iter().map(f64::to_string));
            self.beliefs.write_record(&row)?;
        }
        let k = snapshot.per_topic.len();
        let metric_row = |label: String, m: &TopicMetrics, heat: f64, fatigue: f64| {
            vec![
                round.clone(),
                label,
                fmt_opt(m.nci),
                fmt_opt(m.eci),
                m.polarization.to_string(),
                m.global_disagreement.to_string(),
                fmt_opt(m.mean_nci),
                heat.to_string(),
                fatigue.to_string(),
            ]
        };
        for (t, m) in snapshot.per_topic.iter().enumerate() {
            self.metrics
                .write_record(metric_row(t.to_string(), m, stats.heat[t], stats.mean_fatigue(t)))?;
        }
        let mean_heat = stats.heat.iter().sum::<f64>() / k.max(1) as f64;
        let mean_fatigue = (0..k).map(|t| stats.mean_fatigue(t)).sum::<f64>() / k.max(1) as f64;
        self.metrics
            .write_record(metric_row("mean".into(), &snapshot.mean, mean_heat, mean_fatigue))?;
        for (agent, (tsr, fat)) in stats.tsr.iter().zip(&stats.fatigue).enumerate() {
            for t in 0..k {
                self.fatigue.write_record([
                    round.clone(),
                    agent.to_string(),
                    t.to_string(),
                    tsr[t].to_string(),
                    fat[t].to_string(),
                ])?;
            }
        }
        Ok(())
    }

    /// Flushes everything and reports the table lengths.
    pub(crate) fn commit(&mut self) -> Result<Offsets> {
        self.events.flush()?;
        self.beliefs.flush()?;
        self.metrics.flush()?;
        self.fatigue.flush()?;
        if let Some(w) = &mut self.prompts {
            w.flush()?;
        }
        Ok(Offsets {
            events: self.events.get_ref().metadata()?.len(),
            beliefs: self.beliefs.get_ref().metadata()?.len(),
            metrics: self.metrics.get_ref().metadata()?.len(),
            fatigue: self.fatigue.get_ref().metadata()?.len(),
        })
    }

    pub(crate) fn write_memory(&self, seed: u64, agents: &[AgentState]) -> Result<()> {
        let mut w = BufWriter::new(File::create(&self.paths.memory)?);
        writeln!(w, "{}", json!({"seed": seed, "file": "memory"}))?;
        for a in agents {
            serde_json::to_writer(
                &mut w,
                &json!({
                    "agent": a.id(),
                    "short_term": a.memory.short_term(),
                    "long_term": a.memory.long_term(),
                }),
            )?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Belief table read back from a beliefs CSV: `(round, beliefs[agent][topic])` per round.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTable {
    pub seed: Option<u64>,
    pub rounds: Vec<(u32, Vec<Vec<f64>>)>,
}

/// Reads a beliefs CSV written by a run.
pub fn read_beliefs_csv(path: &Path) -> Result<BeliefTable> {
    let file = File::open(path)?;
    let mut first = String::new();
    BufReader::new(&file).read_line(&mut first)?;
    let seed = first
        .trim()
        .strip_prefix("# seed=")
        .and_then(|s| s.parse().ok());
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut rounds: Vec<(u32, Vec<Vec<f64>>)> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Metrics(format!("{} row {}: {what}", path.display(), line + 1));
        if rec.len() < 3 {
            return Err(bad("expected round, agent and at least one topic column"));
        }
        let round: u32 = rec[0].parse().map_err(|_| bad("bad round"))?;
        let agent: usize = rec[1].parse().map_err(|_| bad("bad agent id"))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad belief value")))
            .collect::<Result<Vec<f64>>>()?;
        if rounds.last().map_or(true, |(r, _)| *r != round) {
            rounds.push((round, Vec::new()));
        }
        let table = &mut rounds.last_mut().expect("pushed above").1;
        if agent != table.len() {
            return Err(bad("agents must appear in ascending order from 0"));
        }
        table.push(values);
    }
    Ok(BeliefTable { seed, rounds })
}

/// Recomputes per-round metrics from a belief table.
pub fn recompute_metrics(table: &BeliefTable, graph: &SocialGraph, epsilon: f64) -> Result<Vec<MetricsSnapshot>> {
    table
        .rounds
        .iter()
        .map(|(round, rows)| {
            if rows.len() != graph.len() {
                return Err(Error::Metrics(format!(
                    "round {round} has {} agents but the graph has {} nodes",
                    rows.len(),
                    graph.len()
                )));
            }
            Ok(MetricsSnapshot::from_table(*round, rows, graph, epsilon))
        })
        .collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
