//! Plot data as CSV.
//!
//! `distributions`: one row per box statistic and per cloud sample, long
//! format (`era,encounter,build,role,series,value`). `popularity`: one row per
//! era and profession/specialization (`era,build,count,share`), for stacked
//! share charts across eras in the order the reports are given.

use balancelab::report::BalanceReport;

use crate::{DataError, PlotKind, Result};

pub fn plot_csv(reports: &[BalanceReport], kind: PlotKind, include_support: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match kind {
        PlotKind::Distributions => {
            w.write_record(["era", "encounter", "build", "role", "series", "value"])?;
            for r in reports {
                for d in &r.distributions {
                    let role = d.build.role();
                    if role.is_support() && !include_support {
                        continue;
                    }
                    let build = d.build.to_string();
                    let row = |series: &str, v: f64| {
                        [
                            r.era.label.clone(),
                            d.encounter.clone(),
                            build.clone(),
                            role.code().to_string(),
                            series.to_string(),
                            v.to_string(),
                        ]
                    };
                    for (series, v) in [
                        ("min", d.min),
                        ("q1", d.q1),
                        ("median", d.median),
                        ("q3", d.q3),
                        ("max", d.max),
                    ] {
                        w.write_record(row(series, v))?;
                    }
                    for &v in &d.cloud {
                        w.write_record(row("sample", v))?;
                    }
                }
            }
        }
        PlotKind::Popularity => {
            w.write_record(["era", "build", "count", "share"])?;
            for r in reports {
                for p in &r.popularity {
                    w.write_record([
                        r.era.label.clone(),
                        p.build.to_string(),
                        p.count.to_string(),
                        p.share.to_string(),
                    ])?;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| DataError(e.to_string()))?;
    String::from_utf8(bytes).map_err(DataError::from)
}
