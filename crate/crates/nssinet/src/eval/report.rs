//! Report emission: JSON for machines, CSV for tables, SVG for topographies.

use std::path::Path;

use serde::Serialize;

use crate::adversarial::LossRecord;
use crate::error::{Error, Result};

use super::channels::ChannelImportanceMap;
use super::cv::CVReport;
use super::sweeps::SweepTable;
use super::topo;

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json("report", e))?;
    std::fs::write(path.as_ref(), text)
        .map_err(|e| Error::io(path.as_ref().display().to_string(), e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    std::fs::write(path.as_ref(), text)
        .map_err(|e| Error::io(path.as_ref().display().to_string(), e))
}

pub fn cv_report_csv(report: &CVReport) -> String {
    let mut out = String::from("fold,test_subjects,n_test_samples,accuracy,subject_accuracy\n");
    for f in &report.per_fold {
        out.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            f.fold,
            f.test_subjects.join(";"),
            f.n_test_samples,
            f.accuracy,
            f.subject_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default()
        ));
    }
    out.push_str(&format!(
        "mean,,,{:.6},{}\n",
        report.mean_accuracy,
        report.subject_mean_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default()
    ));
    out.push_str(&format!("std,,,{:.6},\n", report.std_accuracy));
    out
}

pub fn loss_curve_csv(curve: &[LossRecord]) -> String {
    let mut out = String::from(LossRecord::csv_header());
    out.push('\n');
    for r in curve {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn confusion_csv(report: &CVReport) -> String {
    let mut out = String::from("group,tp,tn,fp,fn,tp_rate,tn_rate,fp_rate,fn_rate\n");
    for m in &report.confusion {
        out.push_str(&format!(
            "{:?},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            m.group, m.tp, m.tn, m.fp, m.fn_, m.tpr, m.tnr, m.fpr, m.fnr
        ));
    }
    out
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from("label,mean_accuracy,std_accuracy,plan_hash\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:016x}\n",
            row.label, row.report.mean_accuracy, row.report.std_accuracy, row.report.plan_hash
        ));
    }
    out
}

pub fn channel_csv(map: &ChannelImportanceMap) -> String {
    let mut out = String::from("channel,name,accuracy,score\n");
    for i in 0..map.raw_accuracy.len() {
        let name = map.channel_names.get(i).cloned().unwrap_or_else(|| format!("ch{i:02}"));
        out.push_str(&format!(
            "{i},{name},{:.6},{:.6}\n",
            map.raw_accuracy[i], map.score[i]
        ));
    }
    out
}

pub fn channel_svg(map: &ChannelImportanceMap) -> String {
    topo::svg_topomap(&map.channel_names, &map.score)
}
