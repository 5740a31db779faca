use std::io::Write;

use serde::Serialize;

use super::{ItemSchema, LongitudinalPanel};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemFrequencies {
    pub item: String,
    pub labels: Vec<String>,
    /// `[time][category]`
    pub counts: Vec<Vec<usize>>,
    /// Non-missing responses per time.
    pub observed: Vec<usize>,
}

impl ItemFrequencies {
    pub fn percent(&self, t: usize, category: usize) -> f64 {
        match self.observed[t] {
            0 => 0.0,
            n => 100.0 * self.counts[t][category] as f64 / n as f64,
        }
    }
}

/// Observed category counts per item and time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    pub items: Vec<ItemFrequencies>,
}

pub fn category_frequencies(panel: &LongitudinalPanel) -> FrequencyTable {
    let n_times = panel.n_times();
    let mut items: Vec<ItemFrequencies> = panel
        .item_names()
        .iter()
        .zip(panel.n_categories())
        .map(|(name, &c)| ItemFrequencies {
            item: name.clone(),
            labels: (0..c).map(|y| y.to_string()).collect(),
            counts: vec![vec![0; c]; n_times],
            observed: vec![0; n_times],
        })
        .collect();
    for s in panel.subjects() {
        for t in 0..n_times {
            for (j, resp) in s.responses_at(t).iter().enumerate() {
                if let Some(y) = resp {
                    items[j].counts[t][*y as usize] += 1;
                    items[j].observed[t] += 1;
                }
            }
        }
    }
    FrequencyTable { items }
}

impl FrequencyTable {
    /// Replaces numeric labels with the schema's category labels.
    pub fn with_labels(mut self, schema: &ItemSchema) -> Self {
        for (freq, def) in self.items.iter_mut().zip(&schema.items) {
            if def.labels.len() == freq.labels.len() {
                freq.labels = def.labels.clone();
            }
        }
        self
    }

    /// `item,time,category,label,count,percent`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["item", "time", "category", "label", "count", "percent"])?;
        for item in &self.items {
            for (t, counts) in item.counts.iter().enumerate() {
                for (y, count) in counts.iter().enumerate() {
                    wtr.write_record([
                        item.item.clone(),
                        (t + 1).to_string(),
                        y.to_string(),
                        item.labels[y].clone(),
                        count.to_string(),
                        format!("{:.6}", item.percent(t, y)),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}
