use serde::{Deserialize, Serialize};

use super::{success_rate, EvalError};
use crate::beat::Category;
use crate::verifier::{Diagnosis, DxCategory, Severity};

/// Predicted columns: the four categories, then everything else split by
/// severity.
pub const CONFUSION_COLUMNS: [&str; 8] = ["Normal", "LVH", "LBBB", "ACUTMI", "ON", "BO", "AB", "DE"];

/// Column of a diagnosis. An "other" finding with severity NO is filed under
/// ON.
pub fn confusion_column(category: DxCategory, severity: Severity) -> usize {
    match category {
        DxCategory::Normal => 0,
        DxCategory::Lvh => 1,
        DxCategory::Lbbb => 2,
        DxCategory::Acutmi => 3,
        DxCategory::Other => match severity {
            Severity::NO | Severity::ON => 4,
            Severity::BO => 5,
            Severity::AB => 6,
            Severity::DE => 7,
        },
    }
}

fn row(c: Category) -> usize {
    Category::ALL.iter().position(|&x| x == c).expect("category listed")
}

/// Rows are target categories in [`Category::ALL`] order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 8]; 4],
}

impl ConfusionMatrix {
    pub fn add(&mut self, target: Category, category: DxCategory, severity: Severity) {
        self.counts[row(target)][confusion_column(category, severity)] += 1;
    }

    pub fn row(&self, target: Category) -> &[u64; 8] {
        &self.counts[row(target)]
    }

    /// Plausible candidates of a target category.
    pub fn row_sum(&self, target: Category) -> u64 {
        self.row(target).iter().sum()
    }

    /// Candidates diagnosed as their own target.
    pub fn hits(&self, target: Category) -> u64 {
        self.row(target)[row(target)]
    }

    pub fn success_rate(&self, target: Category) -> Result<f64, EvalError> {
        success_rate(self.row_sum(target), self.hits(target))
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// CSV with an `actual` column followed by [`CONFUSION_COLUMNS`].
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["actual"];
        header.extend(CONFUSION_COLUMNS);
        w.write_record(&header).expect("in-memory write");
        for c in Category::ALL {
            let mut rec = vec![c.as_str().to_string()];
            rec.extend(self.row(c).iter().map(u64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let bad = |m: String| EvalError::Parse(m);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.len() != 9 || header.iter().skip(1).ne(CONFUSION_COLUMNS) {
            return Err(bad("unexpected confusion header".into()));
        }
        let mut m = ConfusionMatrix::default();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let target: Category = rec[0].parse().map_err(|_| bad(format!("unknown category {}", &rec[0])))?;
            for (k, v) in rec.iter().skip(1).enumerate() {
                m.counts[row(target)][k] = v.parse().map_err(|_| bad(format!("bad count {v}")))?;
            }
        }
        Ok(m)
    }
}

/// Bins every (target, diagnosis) pair.
pub fn tally_confusion<'a>(results: impl IntoIterator<Item = (Category, &'a Diagnosis)>) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for (target, dx) in results {
        m.add(target, dx.category, dx.severity);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut m = ConfusionMatrix::default();
        m.add(Category::Lbbb, DxCategory::Lbbb, Severity::AB);
        m.add(Category::Lbbb, DxCategory::Other, Severity::DE);
        m.add(Category::Normal, DxCategory::Other, Severity::ON);
        let text = m.to_csv();
        assert!(text.starts_with("actual,Normal,LVH,LBBB,ACUTMI,ON,BO,AB,DE\n"));
        assert!(text.contains("LBBB,0,0,1,0,0,0,0,1\n"));
        assert_eq!(ConfusionMatrix::from_csv(&text).unwrap(), m);
        assert_eq!(m.row_sum(Category::Lbbb), 2);
        assert_eq!(m.success_rate(Category::Lbbb).unwrap(), 50.0);
    }
}
