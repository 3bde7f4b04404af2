//! Brute-force reference values, written without ndarray or any code
//! shared with the library.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy)]
pub enum K {
    Linear,
    Rbf(f64),
}

fn k(kind: K, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        K::Linear => {
            let mut s = 0.0;
            for t in 0..a.len() {
                s += a[t] * b[t];
            }
            s
        }
        K::Rbf(sigma) => {
            let mut d2 = 0.0;
            for t in 0..a.len() {
                d2 += (a[t] - b[t]) * (a[t] - b[t]);
            }
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
    }
}

/// Squared MMD by explicit double loops.
pub fn mmd2(x: &[Vec<f64>], y: &[Vec<f64>], kind: K, unbiased: bool) -> f64 {
    let (n, m) = (x.len() as f64, y.len() as f64);
    let mut xx = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if !(unbiased && i == j) {
                xx += k(kind, &x[i], &x[j]);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if !(unbiased && i == j) {
                yy += k(kind, &y[i], &y[j]);
            }
        }
    }
    let mut xy = 0.0;
    for a in x {
        for b in y {
            xy += k(kind, a, b);
        }
    }
    let (xx, yy) = if unbiased {
        (xx / (n * (n - 1.0)), yy / (m * (m - 1.0)))
    } else {
        (xx / (n * n), yy / (m * m))
    };
    xx + yy - 2.0 * xy / (n * m)
}

/// Median of all pairwise distances in the pooled sample.
pub fn median_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let pool: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let mut d = Vec::new();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            let mut s = 0.0;
            for t in 0..pool[i].len() {
                s += (pool[i][t] - pool[j][t]).powi(2);
            }
            d.push(s.sqrt());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = d.len() / 2;
    if d.len() % 2 == 1 {
        d[h]
    } else {
        (d[h - 1] + d[h]) / 2.0
    }
}
