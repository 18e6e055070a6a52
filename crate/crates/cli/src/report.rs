//! Text and JSON renderings of evaluation results.

use std::fmt::Write as _;

use pointhop::EvalReport;
use serde::Serialize;

#[derive(Debug, Serialize)]
struct ClassJson<'a> {
    name: &'a str,
    samples: u64,
    accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ReportJson<'a> {
    overall_accuracy: f64,
    average_accuracy: f64,
    classes: Vec<ClassJson<'a>>,
    confusion: &'a [Vec<u64>],
}

pub fn report_json(r: &EvalReport) -> serde_json::Value {
    let classes = r
        .class_names
        .iter()
        .zip(&r.per_class)
        .zip(&r.confusion)
        .map(|((name, &accuracy), row)| ClassJson {
            name,
            samples: row.iter().sum(),
            accuracy,
        })
        .collect();
    serde_json::to_value(ReportJson {
        overall_accuracy: r.overall_accuracy,
        average_accuracy: r.average_accuracy,
        classes,
        confusion: &r.confusion,
    })
    .expect("report serializes")
}

pub fn to_json_string(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Overall and average accuracy plus the per-class lines, worst classes first.
pub fn report_text(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "overall accuracy: {:.2}%", 100.0 * r.overall_accuracy);
    let _ = writeln!(s, "average accuracy: {:.2}%", 100.0 * r.average_accuracy);
    let _ = writeln!(s, "per-class accuracy (lowest first):");
    for i in r.worst_classes() {
        let n: u64 = r.confusion[i].iter().sum();
        let _ = writeln!(
            s,
            "  {:<16} {:>6.2}%  ({} of {n})",
            r.class_names[i],
            100.0 * r.per_class[i].unwrap_or(0.0),
            r.confusion[i][i]
        );
    }
    s
}
