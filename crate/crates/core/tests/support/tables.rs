//! Manifests synthesized to the published per-style, per-split counts.
//!
//! Every record of one style points at the same shared image, so a full
//! size dataset costs four tiny files per task.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use forge_core::dataset::{
    write_manifest, AnnotatedRecord, Manifest, Payload, Provenance, VeItem, VqaItem, SCHEMA_VERSION,
};
use forge_core::promptkit::VeLabel;
use forge_core::provider::scripted::synth_png;
use forge_core::{Split, Style, Task, YesNo};

pub const SHARED_IMAGE: &str = "shared.png";

/// Images per split (train, valid, test), in `Style::ALL` order.
pub fn images(task: Task) -> [[usize; 3]; 4] {
    match task {
        Task::Caption => [[2695, 924, 231], [2695, 924, 231], [2694, 923, 231], [2694, 924, 231]],
        Task::Vqa => [[2091, 711, 182], [2090, 710, 182], [2090, 711, 182], [2091, 711, 182]],
        Task::Ve => [[619, 77, 78], [618, 77, 78], [619, 77, 78], [619, 77, 78]],
    }
}

/// Captions, questions or hypotheses per split.
pub fn units(task: Task) -> [[usize; 3]; 4] {
    match task {
        Task::Caption => images(task).map(|r| r.map(|n| n * 5)),
        Task::Vqa => [[4120, 1452, 340], [4118, 1451, 340], [4118, 1452, 340], [4120, 1452, 340]],
        Task::Ve => [[7673, 967, 868], [7670, 966, 867], [7665, 967, 868], [7666, 967, 868]],
    }
}

/// Splits `total` units over `n` images as evenly as possible.
fn per_image(total: usize, n: usize, i: usize) -> usize {
    total / n + usize::from(i < total % n)
}

fn payload(task: Task, count: usize, offset: usize) -> Payload {
    match task {
        Task::Caption => Payload::Caption {
            captions_sty: (0..count).map(|k| format!("caption {k}")).collect(),
        },
        Task::Vqa => Payload::Vqa {
            pairs: (0..count)
                .map(|k| VqaItem {
                    pair: k,
                    q_sty: format!("Is this question {k}?"),
                    y_sty: if (offset + k) % 2 == 0 { YesNo::Yes } else { YesNo::No },
                    reused_original_answer: true,
                })
                .collect(),
        },
        Task::Ve => Payload::Ve {
            pairs: (0..count)
                .map(|k| VeItem {
                    pair: k,
                    h_sty: format!("Hypothesis {k}."),
                    y_sty: VeLabel::ALL[(offset + k) % 3],
                    reused_original_label: true,
                })
                .collect(),
        },
    }
}

pub fn synth_manifest(task: Task) -> Manifest {
    let imgs = images(task);
    let units = units(task);
    let mut records = Vec::new();
    for (s, style) in Style::ALL.into_iter().enumerate() {
        for (k, split) in Split::ALL.into_iter().enumerate() {
            let n = imgs[s][k];
            let mut offset = 0;
            for i in 0..n {
                let count = per_image(units[s][k], n, i);
                records.push(AnnotatedRecord {
                    source_id: format!("{}-{}-{i:05}", task.as_str(), split.as_str()),
                    style,
                    split,
                    task,
                    image_ref: SHARED_IMAGE.into(),
                    payload: payload(task, count, offset),
                });
                offset += count;
            }
        }
    }
    Manifest {
        task,
        records,
        provenance: Provenance {
            schema_version: SCHEMA_VERSION,
            task,
            styles: Style::ALL.to_vec(),
            source_sha256: "0".repeat(64),
            template_versions: BTreeMap::new(),
            chat_model: "synthetic".into(),
            image_model: "synthetic".into(),
            patience: 10,
            caption_count: 5,
            session_mode: "persistent".into(),
            omitted_items: BTreeMap::new(),
            dropped_pairs: BTreeMap::new(),
        },
    }
}

/// Writes the synthesized manifest of `task` under `root`.
pub fn write_synth(root: &Path, task: Task) -> Manifest {
    for style in Style::ALL {
        let dir = root.join(task.as_str()).join(style.as_str());
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join(SHARED_IMAGE), synth_png(style.as_str())).unwrap();
    }
    let m = synth_manifest(task);
    write_manifest(root, &m).unwrap();
    m
}
