//! Per-step training log.

use std::io::{self, Write};

pub const METRICS_HEADER: &str = "step,episode,reward,tree_size,h_s,best_split_value,split";

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub episode: u64,
    pub reward: f64,
    pub tree_size: usize,
    /// Current split threshold; learners without one leave it empty.
    pub h_s: Option<f64>,
    pub best_split_value: Option<f64>,
    pub split: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<StepRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsLog {
    pub fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_count(&self) -> usize {
        self.records.iter().filter(|r| r.split).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.step,
                r.episode,
                r.reward,
                r.tree_size,
                opt(r.h_s),
                opt(r.best_split_value),
                u8::from(r.split)
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}
