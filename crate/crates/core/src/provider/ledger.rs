use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Chat,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub timestamp_ms: u64,
    pub kind: CallKind,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost_usd: f64,
}

#[derive(Debug, Default)]
struct Inner {
    records: Vec<CostRecord>,
    total: f64,
}

/// Append-only cost log shared by all workers of a run.
#[derive(Debug, Default)]
pub struct CostLedger {
    inner: Mutex<Inner>,
}

impl CostLedger {
    /// Appends a record. Negative or non-finite costs are booked as zero so
    /// the running total never decreases.
    pub fn record(&self, kind: CallKind, tokens_in: u64, tokens_out: u64, cost_usd: f64) {
        let cost_usd = if cost_usd.is_finite() && cost_usd > 0.0 {
            cost_usd
        } else {
            0.0
        };
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let mut inner = self.inner.lock().expect("cost ledger poisoned");
        inner.total += cost_usd;
        inner.records.push(CostRecord {
            timestamp_ms,
            kind,
            tokens_in,
            tokens_out,
            cost_usd,
        });
    }

    pub fn total(&self) -> f64 {
        self.inner.lock().expect("cost ledger poisoned").total
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cost ledger poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<CostRecord> {
        self.inner.lock().expect("cost ledger poisoned").records.clone()
    }

    pub fn count(&self, kind: CallKind) -> usize {
        self.inner
            .lock()
            .expect("cost ledger poisoned")
            .records
            .iter()
            .filter(|r| r.kind == kind)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn total_is_sum_of_records_under_concurrency() {
        let ledger = Arc::new(CostLedger::default());
        std::thread::scope(|s| {
            for t in 0..8 {
                let ledger = Arc::clone(&ledger);
                s.spawn(move || {
                    for i in 0..100 {
                        ledger.record(CallKind::Chat, i, t, 0.25);
                    }
                });
            }
        });
        let records = ledger.records();
        assert_eq!(records.len(), 800);
        let sum: f64 = records.iter().map(|r| r.cost_usd).sum();
        assert_eq!(ledger.total(), sum);
        assert_eq!(ledger.total(), 200.0);
    }

    #[test]
    fn total_never_decreases() {
        let ledger = CostLedger::default();
        let mut last = 0.0;
        for cost in [0.1, -5.0, f64::NAN, 0.0, 2.5, f64::INFINITY, 0.3] {
            ledger.record(CallKind::Image, 0, 0, cost);
            assert!(ledger.total() >= last);
            last = ledger.total();
        }
        assert!((ledger.total() - 2.9).abs() < 1e-12);
    }
}
