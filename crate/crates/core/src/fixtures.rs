//! Small reference datasets used throughout the tests and the CLI examples.

use crate::data::{read_csv, CsvSchema, Dataset, Group, Record};

/// 24 individuals ordered by score; record `i` (1-based) has score `i/24`.
/// Group 0 sits at positions 1–6 and 11–12.
pub const TOY_CSV: &str = include_str!("../data/toy24.csv");

/// Shared threshold between the 10th and 11th scores: ten rejections, then
/// fourteen acceptances.
pub const TOY_SHARED_THRESHOLD: f64 = 10.5 / 24.0;

pub fn toy() -> Dataset {
    read_csv(TOY_CSV.as_bytes(), &CsvSchema::default()).expect("embedded toy data is valid")
}

/// Threshold separating the two score levels of [`confusion_figure`].
pub const CONFUSION_THRESHOLD: f64 = 0.5;

/// 100 records per group with confusion proportions
/// group 0: TN 30, FN 20, FP 30, TP 20; group 1: TN 20, FN 30, FP 20, TP 30.
/// Predicted positives carry score 0.75, predicted negatives 0.25.
pub fn confusion_figure() -> Dataset {
    let mut records = Vec::with_capacity(200);
    let cells = [
        (Group::Zero, [30, 20, 30, 20]),
        (Group::One, [20, 30, 20, 30]),
    ];
    for (g, [tn, fn_, fp, tp]) in cells {
        for (count, y, yhat) in [(tn, false, false), (fn_, true, false), (fp, false, true), (tp, true, true)] {
            let score = if yhat { 0.75 } else { 0.25 };
            records.extend((0..count).map(|_| Record::new(g, y, Some(score))));
        }
    }
    Dataset::new(records, Vec::new()).expect("fixture is valid")
}
