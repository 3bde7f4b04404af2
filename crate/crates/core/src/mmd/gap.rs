use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{mmd_sets, EmbeddingSet, Estimator, KernelSpec, MmdError, Modality};
use crate::Style;

/// Pairwise MMD² between the four domains. Cell `(i, j)` with `i > j` holds
/// the visual gap, `i < j` the linguistic gap; the diagonal is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMatrix {
    pub domains: Vec<Style>,
    pub kernel: KernelSpec,
    pub estimator: Estimator,
    pub cells: Vec<Vec<Option<f64>>>,
    pub visual_avg: f64,
    pub linguistic_avg: f64,
}

impl GapMatrix {
    pub fn visual(&self, a: Style, b: Style) -> f64 {
        let (i, j) = (self.index(a), self.index(b));
        self.cells[i.max(j)][i.min(j)].expect("off-diagonal")
    }

    pub fn linguistic(&self, a: Style, b: Style) -> f64 {
        let (i, j) = (self.index(a), self.index(b));
        self.cells[i.min(j)][i.max(j)].expect("off-diagonal")
    }

    fn index(&self, s: Style) -> usize {
        self.domains.iter().position(|d| *d == s).expect("known domain")
    }
}

fn find(sets: &[EmbeddingSet], domain: Style, modality: Modality) -> Result<&EmbeddingSet, MmdError> {
    let mut it = sets.iter().filter(|s| s.domain == domain && s.modality == modality);
    let first = it.next().ok_or(MmdError::Missing { domain, modality })?;
    if it.next().is_some() {
        return Err(MmdError::Shape(format!("more than one {} set for {domain}", modality.as_str())));
    }
    Ok(first)
}

/// Builds the matrix over all four domains. Each entry resolves its own
/// bandwidth from the pair it compares.
pub fn gap_matrix(sets: &[EmbeddingSet], kernel: KernelSpec, estimator: Estimator, seed: u64) -> Result<GapMatrix, MmdError> {
    let domains = Style::ALL.to_vec();
    let n = domains.len();
    let mut jobs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let modality = if i > j { Modality::Visual } else { Modality::Linguistic };
                jobs.push((i, j, find(sets, domains[i], modality)?, find(sets, domains[j], modality)?));
            }
        }
    }
    let results: Vec<(usize, usize, Result<f64, MmdError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(i, j, a, b)| scope.spawn(move || (i, j, mmd_sets(a, b, kernel, estimator, seed))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("mmd worker")).collect()
    });
    let mut cells = vec![vec![None; n]; n];
    let (mut vis, mut lin) = (Vec::new(), Vec::new());
    for (i, j, r) in results {
        let v = r?;
        cells[i][j] = Some(v);
        if i > j { &mut vis } else { &mut lin }.push(v);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(GapMatrix {
        domains,
        kernel,
        estimator,
        visual_avg: mean(&vis),
        linguistic_avg: mean(&lin),
        cells,
    })
}

fn title(s: Style) -> &'static str {
    match s {
        Style::RealPhoto => "Real",
        Style::CartoonDrawing => "Cartoon",
        Style::PencilDrawing => "Pencil",
        Style::OilPainting => "Oil",
    }
}

/// Plain-text table: visual gaps below the diagonal, linguistic above.
pub fn render_gap_matrix(g: &GapMatrix) -> String {
    let mut out = format!("{:<10}", "");
    for d in &g.domains {
        let _ = write!(out, "{:>10}", title(*d));
    }
    out.push('\n');
    for (i, d) in g.domains.iter().enumerate() {
        let _ = write!(out, "{:<10}", title(*d));
        for cell in &g.cells[i] {
            match cell {
                Some(v) => {
                    let _ = write!(out, "{v:>10.4}");
                }
                None => {
                    let _ = write!(out, "{:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    let _ = writeln!(out, "visual average (lower)      {:.4}", g.visual_avg);
    let _ = writeln!(out, "linguistic average (upper)  {:.4}", g.linguistic_avg);
    out
}
