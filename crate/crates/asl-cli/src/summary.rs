//! The architecture table and its golden values.
//!
//! The 30-class build has a fixed layer table (shapes and parameter
//! counts); `golden_check` holds that table as constants and fails on any
//! drift, with zero tolerance.

use asl_core::error::{Error, Result};
use asl_core::model::{Model, ModelConfig, ParamCounts, SummaryRow};
use asl_core::rng::Rng;

/// class count whose layer table is pinned
pub const GOLDEN_CLASSES: usize = 30;

pub const GOLDEN_PARAMS: [usize; 13] = [
    0, 896, 128, 18496, 73856, 0, 0, 512, 295168, 0, 0, 1638464, 1950,
];

pub const GOLDEN_SHAPES: [&[usize]; 13] = [
    &[50, 50, 3],
    &[48, 48, 32],
    &[48, 48, 32],
    &[46, 46, 64],
    &[44, 44, 128],
    &[22, 22, 128],
    &[22, 22, 128],
    &[22, 22, 128],
    &[20, 20, 256],
    &[10, 10, 256],
    &[25600],
    &[64],
    &[30],
];

pub const GOLDEN_TOTALS: ParamCounts = ParamCounts {
    total: 2_029_470,
    trainable: 2_029_150,
    non_trainable: 320,
};

pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub counts: ParamCounts,
}

pub fn summary_table(num_classes: usize) -> Result<SummaryTable> {
    let model = Model::<f32>::build(ModelConfig::with_classes(num_classes), &Rng::new(0))?;
    Ok(SummaryTable {
        rows: model.summary(),
        counts: model.param_counts(),
    })
}

fn shape_text(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("({})", dims.join(","))
}

pub fn render(t: &SummaryTable) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:<16} {:>10}\n",
        "layer", "output shape", "params"
    ));
    out.push_str(&format!("{}\n", "-".repeat(50)));
    for row in &t.rows {
        out.push_str(&format!(
            "{:<22} {:<16} {:>10}\n",
            row.name,
            shape_text(&row.shape),
            row.params
        ));
    }
    out.push_str(&format!("{}\n", "-".repeat(50)));
    out.push_str(&format!("{:<39} {:>10}\n", "total params", t.counts.total));
    out.push_str(&format!(
        "{:<39} {:>10}\n",
        "trainable params", t.counts.trainable
    ));
    out.push_str(&format!(
        "{:<39} {:>10}\n",
        "non-trainable params", t.counts.non_trainable
    ));
    out
}

/// Compare a 30-class table against the golden rows; any drift in a
/// shape, a count, or a total is a check failure.
pub fn golden_check(t: &SummaryTable) -> Result<()> {
    if t.rows.len() != GOLDEN_PARAMS.len() {
        return Err(Error::Check(format!(
            "layer table has {} rows, expected {}",
            t.rows.len(),
            GOLDEN_PARAMS.len()
        )));
    }
    for (i, row) in t.rows.iter().enumerate() {
        if row.shape != GOLDEN_SHAPES[i] || row.params != GOLDEN_PARAMS[i] {
            return Err(Error::Check(format!(
                "row {i} ({}) is {}/{} params, expected {}/{}",
                row.name,
                shape_text(&row.shape),
                row.params,
                shape_text(GOLDEN_SHAPES[i]),
                GOLDEN_PARAMS[i]
            )));
        }
    }
    if t.counts != GOLDEN_TOTALS {
        return Err(Error::Check(format!(
            "totals {}/{}/{} differ from {}/{}/{}",
            t.counts.total,
            t.counts.trainable,
            t.counts.non_trainable,
            GOLDEN_TOTALS.total,
            GOLDEN_TOTALS.trainable,
            GOLDEN_TOTALS.non_trainable
        )));
    }
    Ok(())
}
