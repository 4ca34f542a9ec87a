use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::dataset::ALL_GROUP;
use crate::harness::{kind_name, ResultTable};
use crate::metrics::MetricName;
use crate::perturb::PerturbationKind;
use crate::{Error, Result};

/// Spread of one metric across subgroups for a single (class, condition).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityRow {
    pub class: String,
    pub metric: MetricName,
    pub kind: Option<PerturbationKind>,
    pub level: i32,
    /// Subgroups in definition order; `None` for undefined or failed cells.
    pub values: Vec<(String, Option<f64>)>,
    /// `max - min` over defined values, rounded to 12 significant digits so
    /// that differences of decimal inputs come out as the decimal result.
    pub gap: Option<f64>,
    /// Lowest value for metrics where higher is better, highest otherwise.
    /// Ties go to the lexicographically smallest name.
    pub worst: Option<String>,
    pub undefined: Vec<String>,
}

/// Rounds to 12 significant digits; `0.88 - 0.87` becomes exactly `0.01`.
pub fn round_gap(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Disparity over supplied per-subgroup values.
pub fn disparity_row(
    class: &str,
    metric: MetricName,
    kind: Option<PerturbationKind>,
    level: i32,
    values: Vec<(String, Option<f64>)>,
) -> DisparityRow {
    let defined: Vec<(&str, f64)> = values
        .iter()
        .filter_map(|(n, v)| v.map(|v| (n.as_str(), v)))
        .collect();
    let undefined = values
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| n.clone())
        .collect();
    let max = defined.iter().map(|d| d.1).reduce(f64::max);
    let min = defined.iter().map(|d| d.1).reduce(f64::min);
    let gap = max.zip(min).map(|(a, b)| round_gap(a - b));
    let target = if metric.higher_is_better() { min } else { max };
    let worst = target.and_then(|t| {
        defined
            .iter()
            .filter(|d| d.1 == t)
            .map(|d| d.0)
            .min()
            .map(str::to_string)
    });
    DisparityRow {
        class: class.to_string(),
        metric,
        kind,
        level,
        values,
        gap,
        worst,
        undefined,
    }
}

/// One row per (class, metric, condition), across every subgroup but `All`.
pub fn disparity_table(rt: &ResultTable) -> Vec<DisparityRow> {
    let order: Vec<&str> = rt
        .meta
        .subgroups
        .iter()
        .map(|s| s.name.as_str())
        .filter(|n| *n != ALL_GROUP)
        .collect();
    let mut cells: BTreeMap<_, BTreeMap<&str, Option<f64>>> = BTreeMap::new();
    for r in rt.rows.iter().filter(|r| r.subgroup != ALL_GROUP) {
        cells
            .entry((r.class.as_str(), r.metric, kind_name(r.kind), r.level, r.kind))
            .or_default()
            .insert(r.subgroup.as_str(), r.value.value());
    }
    cells
        .into_iter()
        .map(|((class, metric, _, level, kind), by_group)| {
            let values = order
                .iter()
                .filter_map(|g| by_group.get(g).map(|v| (g.to_string(), *v)))
                .collect();
            disparity_row(class, metric, kind, level, values)
        })
        .collect()
}

/// CSV with one row per disparity row; per-subgroup values are in
/// `name=value` form, `NA` when undefined.
pub fn write_disparity(rows: &[DisparityRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path.display().to_string(), e))?;
    let err = |e: csv::Error| Error::csv(path.display().to_string(), e);
    w.write_record(["class", "metric", "kind", "level", "gap", "worst", "values", "undefined"])
        .map_err(err)?;
    for r in rows {
        let values = r
            .values
            .iter()
            .map(|(n, v)| match v {
                Some(v) => format!("{n}={v}"),
                None => format!("{n}=NA"),
            })
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.class.as_str(),
            r.metric.as_str(),
            kind_name(r.kind),
            &r.level.to_string(),
            &r.gap.map_or("NA".to_string(), |g| g.to_string()),
            r.worst.as_deref().unwrap_or("NA"),
            &values,
            &r.undefined.join(";"),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
