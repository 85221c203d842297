//! CSV rows written by the harness and their readers.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::Result;

/// One `(iteration, episode)` row of `run.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub iteration: usize,
    pub episode: usize,
    /// Transitions in the dataset after this iteration's rollouts.
    pub dataset_size: usize,
    /// Final-epoch training loss per member, `;`-separated; empty when no
    /// model was fitted.
    pub member_losses: String,
    pub episode_return: f64,
    pub success: bool,
    pub violations: usize,
    pub steps: usize,
    /// Cumulative coverage after this episode.
    pub coverage: f64,
    pub task_cost: f64,
    pub aleatoric_cost: f64,
    pub epistemic_cost: f64,
    pub safety_cost: f64,
    pub total_cost: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl RunRow {
    pub fn losses(&self) -> Vec<f64> {
        if self.member_losses.is_empty() {
            return Vec::new();
        }
        self.member_losses.split(';').map(|s| s.parse().unwrap_or(f64::NAN)).collect()
    }
}

pub fn join_losses(losses: &[f64]) -> String {
    losses.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";")
}

/// One row of `eval.csv`: an episode, or the final `summary` row holding
/// means with binomial or sample standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Episode index, or `summary`.
    pub episode: String,
    pub episode_return: f64,
    pub return_se: Option<f64>,
    pub success: f64,
    pub success_se: Option<f64>,
    pub violations: f64,
    pub violations_se: Option<f64>,
    pub fell: f64,
    pub fell_se: Option<f64>,
    pub steps: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Header-only CSV, for runs that produce no rows.
pub fn write_header<T: Serialize + Default>(path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.serialize(T::default())?;
        w.flush()?;
    }
    let header = buf.split(|&b| b == b'\n').next().unwrap_or_default();
    let mut f = File::create(path)?;
    f.write_all(header)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn read_run_csv(path: &Path) -> Result<Vec<RunRow>> {
    read_rows(path)
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    read_rows(path)
}

impl Default for RunRow {
    fn default() -> Self {
        Self {
            iteration: 0,
            episode: 0,
            dataset_size: 0,
            member_losses: String::new(),
            episode_return: 0.0,
            success: false,
            violations: 0,
            steps: 0,
            coverage: 0.0,
            task_cost: 0.0,
            aleatoric_cost: 0.0,
            epistemic_cost: 0.0,
            safety_cost: 0.0,
            total_cost: 0.0,
            seed: 0,
            config_hash: String::new(),
        }
    }
}

/// Mean and standard error of the mean (sample std / sqrt n).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Success proportion and its binomial standard error `sqrt(p (1 - p) / n)`.
pub fn proportion_se(successes: usize, n: usize) -> (f64, f64) {
    let p = successes as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_rows_round_trip_losslessly() {
        let rows = vec![
            RunRow {
                iteration: 1,
                episode: 2,
                dataset_size: 400,
                member_losses: join_losses(&[0.1, -1.234_567_890_123_456_7, 1e-300]),
                episode_return: std::f64::consts::PI,
                success: true,
                coverage: 0.0124,
                total_cost: -3.0 / 7.0,
                seed: u64::MAX,
                config_hash: "0123456789abcdef".into(),
                ..Default::default()
            },
            RunRow::default(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let mut w = csv::Writer::from_path(&path).unwrap();
        for r in &rows {
            w.serialize(r).unwrap();
        }
        w.flush().unwrap();
        drop(w);
        let back = read_run_csv(&path).unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[0].losses(), vec![0.1, -1.234_567_890_123_456_7, 1e-300]);
        assert!(back[1].losses().is_empty());
    }

    #[test]
    fn header_only_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_header::<RunRow>(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iteration,episode,dataset_size"));
        assert_eq!(text.lines().count(), 1);
        assert!(read_run_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn standard_errors() {
        let (p, se) = proportion_se(29, 50);
        assert!((p - 0.58).abs() < 1e-15);
        assert!((se - (0.58f64 * 0.42 / 50.0).sqrt()).abs() < 1e-15);
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
