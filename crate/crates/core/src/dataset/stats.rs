use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AnnotatedRecord, Manifest, Payload, SCHEMA_VERSION};
use crate::promptkit::VeLabel;
use crate::{Split, Style, Task, YesNo};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub style: Style,
    pub split: Split,
    pub images: usize,
    /// Captions, questions or hypotheses.
    pub units: usize,
    /// Label histogram (yes/no for VQA, three-way for VE, empty for captions).
    pub labels: BTreeMap<String, usize>,
}

/// Counts per (style, split). Always holds all twelve rows, in style then
/// split order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub task: Task,
    pub rows: Vec<StatsRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsFormat {
    Text,
    Json,
    Csv,
}

fn label_keys(task: Task) -> Vec<&'static str> {
    match task {
        Task::Caption => vec![],
        Task::Vqa => vec!["yes", "no"],
        Task::Ve => VeLabel::ALL.iter().map(|l| l.as_str()).collect(),
    }
}

fn yes_no_key(y: YesNo) -> &'static str {
    match y {
        YesNo::Yes => "yes",
        YesNo::No => "no",
    }
}

impl StatsReport {
    pub fn from_records(task: Task, records: &[AnnotatedRecord]) -> Self {
        let keys = label_keys(task);
        let mut rows: Vec<StatsRow> = Style::ALL
            .iter()
            .flat_map(|&style| {
                let keys = &keys;
                Split::ALL.iter().map(move |&split| StatsRow {
                    style,
                    split,
                    images: 0,
                    units: 0,
                    labels: keys.iter().map(|k| (k.to_string(), 0)).collect(),
                })
            })
            .collect();
        for r in records.iter().filter(|r| r.task == task) {
            let row = &mut rows[Self::index(r.style, r.split)];
            row.images += 1;
            row.units += r.payload.unit_count();
            let mut bump = |k: &str| *row.labels.entry(k.to_string()).or_insert(0) += 1;
            match &r.payload {
                Payload::Caption { .. } => {}
                Payload::Vqa { pairs } => pairs.iter().for_each(|p| bump(yes_no_key(p.y_sty))),
                Payload::Ve { pairs } => pairs.iter().for_each(|p| bump(p.y_sty.as_str())),
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            task,
            rows,
        }
    }

    fn index(style: Style, split: Split) -> usize {
        let s = Style::ALL.iter().position(|x| *x == style).unwrap();
        let p = Split::ALL.iter().position(|x| *x == split).unwrap();
        s * Split::ALL.len() + p
    }

    pub fn row(&self, style: Style, split: Split) -> &StatsRow {
        &self.rows[Self::index(style, split)]
    }

    /// Sum over splits of `f` for one style.
    pub fn total(&self, style: Style, f: impl Fn(&StatsRow) -> usize) -> usize {
        Split::ALL.iter().map(|s| f(self.row(style, *s))).sum()
    }
}

pub fn compute_stats(m: &Manifest) -> StatsReport {
    StatsReport::from_records(m.task, &m.records)
}

fn style_title(s: Style) -> &'static str {
    match s {
        Style::RealPhoto => "Real",
        Style::CartoonDrawing => "Cartoon",
        Style::PencilDrawing => "Pencil",
        Style::OilPainting => "Oil",
    }
}

fn text_table(out: &mut String, title: &str, rows: &[(String, [usize; 3])]) {
    let w = rows.iter().map(|(n, _)| n.len()).chain([title.len()]).max().unwrap_or(0) + 2;
    let _ = writeln!(out, "{title:<w$}{:>8}{:>8}{:>8}{:>8}", "Train", "Valid", "Test", "Total");
    for (name, v) in rows {
        let total: usize = v.iter().sum();
        let _ = writeln!(out, "{name:<w$}{:>8}{:>8}{:>8}{:>8}", v[0], v[1], v[2], total);
    }
}

fn per_split(r: &StatsReport, style: Style, f: impl Fn(&StatsRow) -> usize) -> [usize; 3] {
    let mut v = [0; 3];
    for (i, s) in Split::ALL.iter().enumerate() {
        v[i] = f(r.row(style, *s));
    }
    v
}

pub fn render_stats(r: &StatsReport, format: StatsFormat) -> String {
    let keys = label_keys(r.task);
    match format {
        StatsFormat::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("stats serialize");
            s.push('\n');
            s
        }
        StatsFormat::Csv => {
            let mut out = String::from("task,style,split,images,units");
            for k in &keys {
                let _ = write!(out, ",{k}");
            }
            out.push('\n');
            for row in &r.rows {
                let _ = write!(out, "{},{},{},{},{}", r.task, row.style, row.split, row.images, row.units);
                for k in &keys {
                    let _ = write!(out, ",{}", row.labels.get(*k).copied().unwrap_or(0));
                }
                out.push('\n');
            }
            out
        }
        StatsFormat::Text => {
            let mut out = String::new();
            let images: Vec<_> = Style::ALL
                .iter()
                .map(|s| (style_title(*s).to_string(), per_split(r, *s, |x| x.images)))
                .collect();
            text_table(&mut out, &format!("{} images", r.task), &images);
            out.push('\n');
            let units: Vec<_> = Style::ALL
                .iter()
                .map(|s| (style_title(*s).to_string(), per_split(r, *s, |x| x.units)))
                .collect();
            text_table(&mut out, &format!("{} {}", r.task, r.task.unit_name()), &units);
            if !keys.is_empty() {
                out.push('\n');
                let labels: Vec<_> = Style::ALL
                    .iter()
                    .flat_map(|s| {
                        keys.iter().map(move |k| {
                            (
                                format!("{} {k}", style_title(*s)),
                                per_split(r, *s, |x| x.labels.get(*k).copied().unwrap_or(0)),
                            )
                        })
                    })
                    .collect();
                text_table(&mut out, &format!("{} labels", r.task), &labels);
            }
            out
        }
    }
}
